use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{Args, CommandFactory, Parser, Subcommand};
use kanids::data::{write_synthetic, DatasetName, SynthConfig};
use kanids::experiment::{
    exit, exit_code, load_reports, prepare_dataset, run_grid, DatasetConfig, ExperimentConfig,
    Overrides, DEFAULT_TRI_IDS_ROWS,
};
use kanids::gradcheck::{render, run_suite, SuiteOptions, DEFAULT_SEEDS};
use kanids::{Error, ModelKind, Result};

/// KAN and classic-network benchmark for binary intrusion detection.
#[derive(Parser, Debug)]
#[command(name = "kanids", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Preprocess raw CSVs into a split cache.
    Prepare(PrepareArgs),
    /// Train every configured model and write reports under the output directory.
    Run(RunArgs),
    /// Finite-difference gradient checks for every layer and architecture.
    Gradcheck(GradcheckArgs),
    /// Rebuild tables and plot data from an existing output directory.
    Report(ReportArgs),
    /// Write a synthetic CSV in the raw layout of a dataset.
    Synth(SynthArgs),
    /// Print the flag reference for all subcommands as Markdown.
    Reference,
}

#[derive(Args, Debug)]
struct PrepareArgs {
    /// Experiment config; its [dataset] section is used.
    #[arg(long, conflicts_with_all = ["dataset", "input", "cache_dir"])]
    config: Option<PathBuf>,
    /// Dataset schema name (NSL_KDD, UNSW_NB15, CICIDS2017, BOT_IOT, TRI_IDS).
    #[arg(long, requires_all = ["input", "cache_dir"])]
    dataset: Option<DatasetName>,
    /// Raw CSV file; repeat for several files.
    #[arg(long)]
    input: Vec<PathBuf>,
    /// Directory that receives the cached splits.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Seed of the stratified split and subsampling.
    #[arg(long)]
    split_seed: Option<u64>,
    /// Row target of the merged TRI_IDS table.
    #[arg(long)]
    tri_ids_rows: Option<usize>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Seed for initialization and shuffling.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Comma-separated model kinds replacing the configured list.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<ModelKind>>,
    /// Stratified train subsample size (needs --subsample-test).
    #[arg(long, requires = "subsample_test")]
    subsample_train: Option<usize>,
    /// Stratified test subsample size (needs --subsample-train).
    #[arg(long, requires = "subsample_train")]
    subsample_test: Option<usize>,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Random seeds per layer case.
    #[arg(long, default_value_t = DEFAULT_SEEDS)]
    seeds: u64,
    /// Skip the whole-architecture checks.
    #[arg(long)]
    no_models: bool,
    /// Perturb the analytic gradient of one case (test hook).
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Output directory of a previous run.
    #[arg(long)]
    dir: PathBuf,
    /// Where to write regenerated files; defaults to --dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    dataset: DatasetName,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    rows: usize,
    #[arg(long, default_value_t = 0.4)]
    attack_fraction: f64,
    /// Class separation of the informative columns.
    #[arg(long, default_value_t = 0.6)]
    signal: f64,
    #[arg(long, default_value_t = 0.0)]
    missing_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn prepare(a: PrepareArgs) -> Result<i32> {
    let ds = match (a.config, a.dataset, a.cache_dir) {
        (Some(path), ..) => {
            let mut d = ExperimentConfig::load(&path)?.dataset;
            if let Some(s) = a.split_seed {
                d.split_seed = s;
            }
            if let Some(n) = a.tri_ids_rows {
                d.tri_ids_rows = n;
            }
            d
        }
        (None, Some(name), Some(cache_dir)) => DatasetConfig {
            name,
            paths: a.input,
            cache_dir,
            split_seed: a.split_seed.unwrap_or(kanids::data::DEFAULT_SPLIT_SEED),
            tri_ids_rows: a.tri_ids_rows.unwrap_or(DEFAULT_TRI_IDS_ROWS),
        },
        _ => {
            return Err(Error::ConfigParse(
                "give --config or --dataset/--input/--cache-dir".into(),
            ))
        }
    };
    if ds.paths.is_empty() {
        return Err(Error::ConfigParse("no input files to prepare".into()));
    }
    let out = prepare_dataset(&ds)?;
    let m = &out.prepared.meta;
    println!("dataset      {}", m.dataset);
    println!(
        "cache        {} ({})",
        ds.cache_dir.display(),
        if out.reused { "reused" } else { "written" }
    );
    println!("fingerprint  {}", m.schema_fingerprint);
    for (i, r) in m.ingest.iter().enumerate() {
        println!(
            "ingest[{i}]    rows {} | missing cells {} | non-finite cells {} | rows imputed {} | normal/attack {}/{}",
            r.rows_read, r.missing_cells, r.non_finite_cells, r.rows_with_missing, r.label_counts[0], r.label_counts[1]
        );
    }
    println!("features     {}", m.feature_names.len());
    println!(
        "train        {} rows, attack ratio {:.4}",
        m.train_rows, m.train_attack_ratio
    );
    println!(
        "test         {} rows, attack ratio {:.4}",
        m.test_rows, m.test_attack_ratio
    );
    Ok(exit::OK)
}

fn run(a: RunArgs) -> Result<i32> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    cfg.apply(&Overrides {
        epochs: a.epochs,
        learning_rate: a.lr,
        batch_size: a.batch_size,
        seed: a.seed,
        output_dir: a.output_dir,
        models: a.models,
        subsample: a.subsample_train.zip(a.subsample_test),
    });
    cfg.validate()?;
    let data = prepare_dataset(&cfg.dataset)?.prepared;
    let stderr = Mutex::new(());
    let quiet = a.quiet;
    let log = move |line: &str| {
        if !quiet {
            let _guard = stderr.lock();
            eprintln!("{line}");
        }
    };
    let outcome = run_grid(&cfg, &data, &log)?;
    if !outcome.reports.is_empty() {
        print!("{}", kanids::eval::report::render_table(&outcome.reports));
    }
    for f in &outcome.failures {
        eprintln!("diverged: {}@{}: {}", f.model, f.dataset, f.error);
    }
    println!("outputs written to {}", cfg.output_dir.display());
    Ok(outcome.exit_code())
}

fn gradcheck(a: GradcheckArgs) -> Result<i32> {
    let results = run_suite(&SuiteOptions {
        seeds: a.seeds,
        inject_fault: a.inject_fault,
        models: !a.no_models,
    })?;
    print!("{}", render(&results));
    Ok(if results.iter().all(|r| r.passed) {
        exit::OK
    } else {
        exit::USAGE
    })
}

fn report(a: ReportArgs) -> Result<i32> {
    let reports = load_reports(&a.dir)?;
    let out = a.out.unwrap_or(a.dir);
    kanids::eval::emit_results(&reports, &out)?;
    print!("{}", kanids::eval::report::render_table(&reports));
    Ok(exit::OK)
}

fn synth(a: SynthArgs) -> Result<i32> {
    let cfg = SynthConfig {
        rows: a.rows,
        attack_fraction: a.attack_fraction,
        signal: a.signal,
        missing_rate: a.missing_rate,
        seed: a.seed,
    };
    write_synthetic(&a.out, &a.dataset.schema(), &cfg)?;
    Ok(exit::OK)
}

fn reference() -> String {
    let mut root = Cli::command();
    root.build();
    let mut out = String::from("# kanids command reference\n\n");
    let mut section = |title: &str, cmd: &mut clap::Command| {
        out.push_str(&format!(
            "## {title}\n\n```text\n{}\n```\n\n",
            cmd.render_long_help()
        ));
    };
    section("kanids", &mut root.clone());
    for sub in root.get_subcommands_mut() {
        let title = format!("kanids {}", sub.get_name());
        section(&title, sub);
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = match cli.command {
        Command::Prepare(a) => prepare(a),
        Command::Run(a) => run(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Report(a) => report(a),
        Command::Synth(a) => synth(a),
        Command::Reference => {
            print!("{}", reference());
            Ok(exit::OK)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
