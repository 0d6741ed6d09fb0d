use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kanids(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kanids"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn kanids")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_inputs(dir: &Path) {
    for (file, rows, seed) in [("train.txt", "600", "1"), ("test.txt", "300", "2")] {
        let o = kanids(
            &[
                "synth",
                "--dataset",
                "NSL_KDD",
                "--rows",
                rows,
                "--seed",
                seed,
                "--out",
                file,
            ],
            dir,
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
}

const CONFIG: &str = r#"
output_dir = "out"

[dataset]
name = "NSL_KDD"
paths = ["train.txt", "test.txt"]
cache_dir = "cache"

[train]
epochs = 2
learning_rate = 0.001
batch_size = 64

[[models]]
kind = "MLP2"

[[models]]
kind = "KAN2"
hidden_width = 8
"#;

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(kanids(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(kanids(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(
        kanids(&["run", "--config", "nope.toml"], dir.path())
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn empty_model_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = CONFIG
        .split("[[models]]")
        .next()
        .unwrap()
        .replace("output_dir = \"out\"", "output_dir = \"out\"\nmodels = []");
    fs::write(dir.path().join("exp.toml"), text).unwrap();
    let o = kanids(&["run", "--config", "exp.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("model list is empty"));
}

#[test]
fn missing_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = kanids(
        &[
            "prepare",
            "--dataset",
            "NSL_KDD",
            "--input",
            "absent.txt",
            "--cache-dir",
            "c",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.txt"));
}

#[test]
fn prepare_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let args = [
        "prepare",
        "--dataset",
        "NSL_KDD",
        "--input",
        "train.txt",
        "--input",
        "test.txt",
        "--cache-dir",
        "c",
    ];
    let first = stdout(&kanids(&args, dir.path()));
    let second = stdout(&kanids(&args, dir.path()));
    assert!(first.contains("(written)"), "{first}");
    assert!(second.contains("(reused)"), "{second}");
    let fp = |s: &str| {
        s.lines()
            .find(|l| l.starts_with("fingerprint"))
            .map(str::to_owned)
    };
    assert_eq!(fp(&first), fp(&second));
    assert!(first.contains("rows 600"));
}

#[test]
fn run_then_report_regenerates_outputs() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    fs::write(dir.path().join("exp.toml"), CONFIG).unwrap();
    let o = kanids(&["run", "--config", "exp.toml", "--quiet"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("out");
    let manifest: Vec<String> =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    for f in &manifest {
        assert!(out.join(f).is_file(), "manifest lists missing {f}");
    }
    assert!(manifest.iter().any(|f| f == "runs/KAN2@NSL_KDD.json"));

    let summary = fs::read(out.join("summary.json")).unwrap();
    let table = fs::read_to_string(out.join("results_table.txt")).unwrap();
    let o = kanids(&["report", "--dir", "out", "--out", "again"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        fs::read(dir.path().join("again/summary.json")).unwrap(),
        summary
    );
    assert_eq!(
        fs::read_to_string(dir.path().join("again/results_table.txt")).unwrap(),
        table
    );
}

#[test]
fn divergence_exits_three_and_records_failures() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    fs::write(dir.path().join("exp.toml"), CONFIG).unwrap();
    let o = kanids(
        &["run", "--config", "exp.toml", "--lr", "1e300", "--quiet"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let failures = fs::read_to_string(dir.path().join("out/failures.json")).unwrap();
    assert!(failures.contains("MLP2") && failures.contains("KAN2"));
}

#[test]
fn gradcheck_detects_injected_fault() {
    let dir = tempfile::tempdir().unwrap();
    let ok = kanids(&["gradcheck", "--seeds", "2", "--no-models"], dir.path());
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    let text = stdout(&ok);
    assert!(text.contains("kan_linear_degree0"));
    assert!(!text.contains("FAIL"));

    let bad = kanids(
        &[
            "gradcheck",
            "--seeds",
            "2",
            "--no-models",
            "--inject-fault",
            "lstm",
        ],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(1));
    let line = stdout(&bad)
        .lines()
        .find(|l| l.starts_with("lstm"))
        .unwrap()
        .to_string();
    assert!(line.ends_with("FAIL"), "{line}");
}

#[test]
fn reference_lists_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let text = stdout(&kanids(&["reference"], dir.path()));
    for sub in ["prepare", "run", "gradcheck", "report", "synth"] {
        assert!(text.contains(&format!("## kanids {sub}")), "{sub}");
    }
}
