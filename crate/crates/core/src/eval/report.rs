//! Result files for a set of runs.
//!
//! Everything except `results_table.txt` and `timings.csv` is free of wall-clock
//! values, so repeating a seeded grid reproduces those files byte for byte.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{Confusion, Metrics};
use crate::error::{Error, Result};
use crate::train::RunReport;

pub const TABLE_FILE: &str = "results_table.txt";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const PLOT_FILES: [&str; 4] = ["grouped_bar.csv", "radar.csv", "heatmap.csv", "line.csv"];

#[derive(Serialize)]
struct SummaryEntry<'a> {
    model: &'a str,
    dataset: &'a str,
    metrics: &'a Metrics,
    macro_metrics: &'a Metrics,
    confusion: &'a Confusion,
    train_accuracy: f64,
    param_count: usize,
    final_train_loss: Option<f64>,
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

fn metric_values(m: &Metrics) -> [(&'static str, f64); 4] {
    [
        ("accuracy", m.accuracy),
        ("precision", m.precision),
        ("recall", m.recall),
        ("f1", m.f1),
    ]
}

/// Text table: one block per dataset, one row per model, metrics in percent.
pub fn render_table(reports: &[RunReport]) -> String {
    let mut datasets: Vec<&str> = Vec::new();
    for r in reports {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
    }
    let mut out = String::new();
    for d in datasets {
        let _ = writeln!(out, "Dataset: {d}");
        let _ = writeln!(
            out,
            "{:<10} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>10} {:>11}",
            "Model", "Acc", "Prec", "Rec", "F1", "mPrec", "mRec", "mF1", "Params", "Runtime(s)"
        );
        for r in reports.iter().filter(|r| r.dataset == d) {
            let (m, mm) = (&r.metrics, &r.macro_metrics);
            let _ = writeln!(
                out,
                "{:<10} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>10} {:>11.2}",
                r.model,
                pct(m.accuracy),
                pct(m.precision),
                pct(m.recall),
                pct(m.f1),
                pct(mm.precision),
                pct(mm.recall),
                pct(mm.f1),
                r.param_count,
                r.runtime_secs
            );
        }
        out.push('\n');
    }
    out
}

fn plot_data(reports: &[RunReport]) -> [String; 4] {
    let mut bar = String::from("dataset,model,metric,value\n");
    let mut radar = String::from("model,dataset,accuracy,precision,recall,f1\n");
    let mut heat = String::from("dataset,model,accuracy,precision,recall,f1\n");
    let mut line = String::from("dataset,model,epoch,train_loss\n");
    for r in reports {
        let vals = metric_values(&r.metrics);
        for (name, v) in vals {
            let _ = writeln!(bar, "{},{},{name},{}", r.dataset, r.model, f6(v));
        }
        let cells: Vec<String> = vals.iter().map(|(_, v)| f6(*v)).collect();
        let _ = writeln!(radar, "{},{},{}", r.model, r.dataset, cells.join(","));
        let _ = writeln!(heat, "{},{},{}", r.dataset, r.model, cells.join(","));
        for (e, loss) in r.epoch_losses.iter().enumerate() {
            let _ = writeln!(line, "{},{},{},{}", r.dataset, r.model, e + 1, f6(*loss));
        }
    }
    [bar, radar, heat, line]
}

/// Run document with the wall-clock field removed.
pub fn run_document(r: &RunReport) -> Result<String> {
    let mut v = serde_json::to_value(r)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("runtime_secs");
    }
    Ok(serde_json::to_string_pretty(&v)?)
}

/// Writes every result file plus a manifest under `out_dir`.
/// Returns the written paths relative to `out_dir`.
pub fn emit_results(reports: &[RunReport], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::ConfigParse("no run reports to emit".into()));
    }
    let mut seen = HashSet::new();
    for r in reports {
        if !seen.insert(r.run_id()) {
            return Err(Error::DuplicateRunId(r.run_id()));
        }
    }
    let mut written: Vec<PathBuf> = Vec::new();
    let mut put = |rel: PathBuf, body: &str| -> Result<()> {
        let path = out_dir.join(&rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, body)?;
        written.push(rel);
        Ok(())
    };

    put(PathBuf::from(TABLE_FILE), &render_table(reports))?;
    for (name, body) in PLOT_FILES.iter().zip(plot_data(reports)) {
        put(Path::new("plots").join(name), &body)?;
    }
    let mut timings = String::from("model,dataset,runtime_secs\n");
    for r in reports {
        let _ = writeln!(timings, "{},{},{}", r.model, r.dataset, r.runtime_secs);
        put(
            Path::new("runs").join(format!("{}.json", r.run_id())),
            &run_document(r)?,
        )?;
    }
    put(PathBuf::from(TIMINGS_FILE), &timings)?;

    let summary: BTreeMap<String, SummaryEntry> = reports
        .iter()
        .map(|r| {
            (
                r.run_id(),
                SummaryEntry {
                    model: &r.model,
                    dataset: &r.dataset,
                    metrics: &r.metrics,
                    macro_metrics: &r.macro_metrics,
                    confusion: &r.confusion,
                    train_accuracy: r.train_accuracy,
                    param_count: r.param_count,
                    final_train_loss: r.epoch_losses.last().copied(),
                },
            )
        })
        .collect();
    put(
        PathBuf::from(SUMMARY_FILE),
        &serde_json::to_string_pretty(&summary)?,
    )?;

    write_manifest(out_dir, &written)?;
    written.push(PathBuf::from(MANIFEST_FILE));
    Ok(written)
}

/// Writes the sorted list of `files` (relative to `out_dir`) plus the manifest itself.
pub fn write_manifest(out_dir: &Path, files: &[PathBuf]) -> Result<()> {
    let mut listed: Vec<String> = files
        .iter()
        .map(|p| p.to_string_lossy().replace('\\', "/"))
        .collect();
    listed.push(MANIFEST_FILE.to_string());
    listed.sort();
    listed.dedup();
    fs::write(
        out_dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&listed)?,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelKind, ModelSpec};
    use crate::train::TrainConfig;

    fn report(model: &str) -> RunReport {
        let confusion = Confusion {
            tp: 40,
            tn: 45,
            fp: 5,
            fn_: 10,
        };
        RunReport {
            model: model.into(),
            dataset: "NSL_KDD".into(),
            spec: ModelSpec::new(ModelKind::Mlp2, 4, 0),
            config: TrainConfig::default(),
            epoch_losses: vec![0.7, 0.5],
            train_accuracy: 0.9,
            confusion,
            metrics: confusion.metrics().unwrap(),
            macro_metrics: confusion.macro_metrics().unwrap(),
            param_count: 123,
            runtime_secs: 1.5,
            notes: Vec::new(),
        }
    }

    #[test]
    fn single_report_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_results(&[report("MLP2")], dir.path()).unwrap();
        assert!(files.contains(&PathBuf::from("runs/MLP2@NSL_KDD.json")));
        let table = fs::read_to_string(dir.path().join(TABLE_FILE)).unwrap();
        let row = table.lines().find(|l| l.starts_with("MLP2")).unwrap();
        assert!(row.contains("85.00") && row.contains("123"));
        let doc = fs::read_to_string(dir.path().join("runs/MLP2@NSL_KDD.json")).unwrap();
        assert!(!doc.contains("runtime_secs"));
    }

    #[test]
    fn duplicate_run_id() {
        let dir = tempfile::tempdir().unwrap();
        let err = emit_results(&[report("MLP2"), report("MLP2")], dir.path()).unwrap_err();
        assert!(matches!(err, Error::DuplicateRunId(_)));
    }
}
