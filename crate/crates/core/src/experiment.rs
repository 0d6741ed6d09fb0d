//! Experiment configs and the model-grid runner.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::cache::{input_key, load_meta, load_prepared, save_prepared, CacheMeta, Prepared};
use crate::data::{
    build_tri_ids, ingest_csv, preprocess, preprocess_official, stratified_subsample, DatasetName,
    RawTable,
};
use crate::error::{Error, Result};
use crate::eval::emit_results;
use crate::eval::report::write_manifest;
use crate::models::{build, GridConfig, ModelKind, ModelSpec};
use crate::train::{train_model_with, RunReport, TrainConfig};

/// Environment variable that caps the worker threads used for a grid.
pub const THREADS_ENV: &str = "KANIDS_THREADS";
pub const DEFAULT_TRI_IDS_ROWS: usize = 60_000;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;
    pub const DIVERGED: i32 = 3;
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. } | Error::NonFiniteLogit(_) | Error::NonFiniteGradient(_) => {
            exit::DIVERGED
        }
        Error::NonFiniteInput(_) => exit::DATA,
        e if e.is_data_error() => exit::DATA,
        Error::Io(_) => exit::DATA,
        _ => exit::USAGE,
    }
}

fn default_split_seed() -> u64 {
    crate::data::DEFAULT_SPLIT_SEED
}

fn default_tri_rows() -> usize {
    DEFAULT_TRI_IDS_ROWS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: DatasetName,
    /// Raw CSVs. NSL-KDD with two files uses them as the official train/test
    /// pair; TRI_IDS expects BOT-IoT, NSL-KDD and CICIDS2017 in that order;
    /// otherwise all files are concatenated and split 80/20.
    #[serde(default)]
    pub paths: Vec<PathBuf>,
    pub cache_dir: PathBuf,
    #[serde(default = "default_split_seed")]
    pub split_seed: u64,
    #[serde(default = "default_tri_rows")]
    pub tri_ids_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subsample {
    pub train_rows: usize,
    pub test_rows: usize,
    #[serde(default = "default_split_seed")]
    pub seed: u64,
}

/// One entry of the model list; `input_dim` comes from the prepared data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Run label; defaults to the kind name.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub hidden_width: Option<usize>,
    #[serde(default)]
    pub kan_grid: Option<GridConfig>,
    #[serde(default)]
    pub conv_channels: Option<[usize; 3]>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ModelConfig {
    pub fn of(kind: ModelKind) -> Self {
        Self {
            kind,
            name: None,
            hidden_width: None,
            kan_grid: None,
            conv_channels: None,
            seed: None,
        }
    }

    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.kind.name().to_string())
    }

    pub fn resolve(&self, input_dim: usize, default_seed: u64) -> ModelSpec {
        let mut spec = ModelSpec::new(self.kind, input_dim, self.seed.unwrap_or(default_seed));
        if let Some(w) = self.hidden_width {
            spec.hidden_width = w;
        }
        if let Some(g) = self.kan_grid {
            spec.kan_grid = g;
        }
        if let Some(c) = self.conv_channels {
            spec.conv_channels = c;
        }
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub subsample: Option<Subsample>,
    pub output_dir: PathBuf,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub models: Option<Vec<ModelKind>>,
    pub subsample: Option<(usize, usize)>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    /// Reads a TOML config; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::ConfigParse(format!(
                "config file {} not found",
                path.display()
            )));
        }
        let mut cfg = Self::from_toml(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.dataset.paths.iter_mut().for_each(fix);
        fix(&mut cfg.dataset.cache_dir);
        fix(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.epochs {
            self.train.epochs = v;
        }
        if let Some(v) = o.learning_rate {
            self.train.learning_rate = v;
        }
        if let Some(v) = o.batch_size {
            self.train.batch_size = v;
        }
        if let Some(v) = o.seed {
            self.train.seed = v;
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(kinds) = &o.models {
            self.models = kinds.iter().map(|&k| ModelConfig::of(k)).collect();
        }
        if let Some((train_rows, test_rows)) = o.subsample {
            let seed = self.subsample.map_or(default_split_seed(), |s| s.seed);
            self.subsample = Some(Subsample {
                train_rows,
                test_rows,
                seed,
            });
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::ConfigParse("model list is empty".into()));
        }
        let mut seen = HashSet::new();
        for m in &self.models {
            if !seen.insert(m.label()) {
                return Err(Error::ConfigParse(format!(
                    "model name `{}` appears twice",
                    m.label()
                )));
            }
        }
        self.train.validate()
    }
}

fn concat(tables: Vec<RawTable>) -> Result<RawTable> {
    let mut it = tables.into_iter();
    let mut out = it
        .next()
        .ok_or_else(|| Error::ConfigParse("no input files".into()))?;
    for t in it {
        if t.names != out.names {
            return Err(Error::SchemaMismatch(
                "input files have different columns".into(),
            ));
        }
        for (dst, src) in out.columns.iter_mut().zip(t.columns) {
            match (dst, src) {
                (crate::data::Column::Numeric(a), crate::data::Column::Numeric(b)) => a.extend(b),
                (crate::data::Column::Categorical(a), crate::data::Column::Categorical(b)) => {
                    a.extend(b)
                }
                _ => {
                    return Err(Error::SchemaMismatch(
                        "column type differs between files".into(),
                    ))
                }
            }
        }
        out.labels.extend(t.labels);
        let r = &mut out.report;
        r.rows_read += t.report.rows_read;
        r.missing_cells += t.report.missing_cells;
        r.non_finite_cells += t.report.non_finite_cells;
        r.rows_with_missing += t.report.rows_with_missing;
        r.label_counts[0] += t.report.label_counts[0];
        r.label_counts[1] += t.report.label_counts[1];
    }
    Ok(out)
}

/// Outcome of [`prepare_dataset`].
#[derive(Debug, Clone)]
pub struct PrepareOutcome {
    pub prepared: Prepared,
    pub reused: bool,
}

/// Ingests and preprocesses the configured files into `cache_dir`, or reuses
/// the existing cache when its input key (file bytes + settings) matches.
/// With no paths configured the existing cache is loaded as is.
pub fn prepare_dataset(cfg: &DatasetConfig) -> Result<PrepareOutcome> {
    if cfg.paths.is_empty() {
        return Ok(PrepareOutcome {
            prepared: load_prepared(&cfg.cache_dir)?,
            reused: true,
        });
    }
    for p in &cfg.paths {
        if !p.is_file() {
            return Err(Error::MissingFile(p.clone()));
        }
    }
    let settings = format!(
        "{}|seed={}|tri_rows={}|n={}",
        cfg.name,
        cfg.split_seed,
        cfg.tri_ids_rows,
        cfg.paths.len()
    );
    let refs: Vec<&Path> = cfg.paths.iter().map(PathBuf::as_path).collect();
    let key = input_key(&refs, &settings)?;
    if let Ok(meta) = load_meta(&cfg.cache_dir) {
        if meta.input_key == key {
            if let Ok(prepared) = load_prepared(&cfg.cache_dir) {
                return Ok(PrepareOutcome {
                    prepared,
                    reused: true,
                });
            }
        }
    }

    let schema = cfg.name.schema();
    let (train, test, ingest) = match cfg.name {
        DatasetName::NslKdd if cfg.paths.len() == 2 => {
            let tr = ingest_csv(&cfg.paths[0], &schema)?;
            let te = ingest_csv(&cfg.paths[1], &schema)?;
            let (a, b) = preprocess_official(&tr, &te)?;
            (a, b, vec![tr.report, te.report])
        }
        DatasetName::TriIds => {
            let [bot, nsl, cic] = cfg.paths.as_slice() else {
                return Err(Error::ConfigParse(
                    "TRI_IDS needs exactly three paths: BOT-IoT, NSL-KDD, CICIDS2017".into(),
                ));
            };
            let bot = ingest_csv(bot, &DatasetName::BotIot.schema())?;
            let nsl = ingest_csv(nsl, &DatasetName::NslKdd.schema())?;
            let cic = ingest_csv(cic, &DatasetName::Cicids2017.schema())?;
            let merged = build_tri_ids(&bot, &nsl, &cic, cfg.tri_ids_rows, cfg.split_seed)?;
            let (a, b) = preprocess(&merged, cfg.split_seed)?;
            (
                a,
                b,
                vec![bot.report, nsl.report, cic.report, merged.report],
            )
        }
        _ => {
            let tables = cfg
                .paths
                .iter()
                .map(|p| ingest_csv(p, &schema))
                .collect::<Result<Vec<_>>>()?;
            let raw = concat(tables)?;
            let (a, b) = preprocess(&raw, cfg.split_seed)?;
            (a, b, vec![raw.report])
        }
    };
    let meta = CacheMeta {
        dataset: cfg.name.as_str().to_string(),
        input_key: key,
        schema_fingerprint: train.schema_fingerprint.clone(),
        feature_names: train.feature_names.clone(),
        feature_stats: train.feature_stats.clone(),
        ingest,
        train_rows: train.rows(),
        test_rows: test.rows(),
        train_attack_ratio: train.attack_ratio(),
        test_attack_ratio: test.attack_ratio(),
    };
    let prepared = Prepared { meta, train, test };
    save_prepared(&cfg.cache_dir, &prepared)?;
    Ok(PrepareOutcome {
        prepared,
        reused: false,
    })
}

/// Stratified row subsets of both splits.
pub fn subsample(p: &Prepared, s: &Subsample) -> Result<Prepared> {
    let train_idx = stratified_subsample(&p.train.labels, s.train_rows, s.seed)?;
    let test_idx = stratified_subsample(&p.test.labels, s.test_rows, s.seed)?;
    let mut out = p.clone();
    out.train = p.train.select_rows(&train_idx);
    out.test = p.test.select_rows(&test_idx);
    out.meta.train_rows = s.train_rows;
    out.meta.test_rows = s.test_rows;
    out.meta.train_attack_ratio = out.train.attack_ratio();
    out.meta.test_attack_ratio = out.test.attack_ratio();
    Ok(out)
}

/// A run that did not produce a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub model: String,
    pub dataset: String,
    pub error: String,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub reports: Vec<RunReport>,
    pub failures: Vec<RunFailure>,
    pub files: Vec<PathBuf>,
}

impl GridOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures.iter().any(|f| f.diverged) {
            exit::DIVERGED
        } else if !self.failures.is_empty() {
            exit::USAGE
        } else {
            exit::OK
        }
    }
}

fn thread_count() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
}

/// Trains every configured model on prepared data and writes all reports.
///
/// Runs execute in parallel (capped by `KANIDS_THREADS` when set); results are
/// collected in config order, so outputs do not depend on scheduling.
/// `log` receives one line per finished epoch.
pub fn run_grid(
    cfg: &ExperimentConfig,
    data: &Prepared,
    log: &(dyn Fn(&str) + Sync),
) -> Result<GridOutcome> {
    cfg.validate()?;
    let data = match &cfg.subsample {
        Some(s) => subsample(data, s)?,
        None => data.clone(),
    };
    let dataset = data.meta.dataset.clone();
    let dim = data.train.dim();
    let models_dir = cfg.output_dir.join("models");
    fs::create_dir_all(&models_dir)?;

    let run_one = |m: &ModelConfig| -> Result<RunReport> {
        let spec = m.resolve(dim, cfg.train.seed);
        let mut model = build(&spec)?;
        let label = m.label();
        let epochs = cfg.train.epochs;
        let mut report = train_model_with(
            &mut model,
            &dataset,
            &data.train,
            &data.test,
            &cfg.train,
            |e, loss| {
                log(&format!(
                    "[{label}@{dataset}] epoch {}/{epochs} loss {loss:.6}",
                    e + 1
                ))
            },
        )?;
        report.model = label;
        let mut buf = Vec::new();
        model.save_params(&mut buf)?;
        fs::write(models_dir.join(format!("{}.bin", report.run_id())), buf)?;
        Ok(report)
    };

    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = thread_count() {
            b = b.num_threads(n);
        }
        b.build()
            .map_err(|e| Error::ConfigParse(format!("thread pool: {e}")))?
    };
    let results: Vec<Result<RunReport>> =
        pool.install(|| cfg.models.par_iter().map(run_one).collect());

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (m, r) in cfg.models.iter().zip(results) {
        match r {
            Ok(rep) => reports.push(rep),
            Err(e) if exit_code(&e) == exit::DIVERGED => failures.push(RunFailure {
                model: m.label(),
                dataset: dataset.clone(),
                error: e.to_string(),
                diverged: true,
            }),
            Err(e) => return Err(e),
        }
    }
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("config.toml"), cfg.to_toml()?)?;
    let mut extra = vec![PathBuf::from("config.toml")];
    extra.extend(
        reports
            .iter()
            .map(|r| Path::new("models").join(format!("{}.bin", r.run_id()))),
    );
    let fail_path = cfg.output_dir.join("failures.json");
    if failures.is_empty() {
        let _ = fs::remove_file(&fail_path);
    } else {
        fs::write(&fail_path, serde_json::to_string_pretty(&failures)?)?;
        extra.push(PathBuf::from("failures.json"));
    }
    let mut files = if reports.is_empty() {
        Vec::new()
    } else {
        emit_results(&reports, &cfg.output_dir)?
    };
    files.extend(extra);
    write_manifest(&cfg.output_dir, &files)?;
    Ok(GridOutcome {
        reports,
        failures,
        files,
    })
}

/// Reloads run documents from an output directory, restoring runtimes and
/// report order from the timings file when it exists.
pub fn load_reports(dir: &Path) -> Result<Vec<RunReport>> {
    let runs = dir.join("runs");
    if !runs.is_dir() {
        return Err(Error::MissingFile(runs));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(&runs)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut reports: Vec<RunReport> = paths
        .iter()
        .map(|p| Ok(serde_json::from_str(&fs::read_to_string(p)?)?))
        .collect::<Result<_>>()?;
    let timings = dir.join(crate::eval::report::TIMINGS_FILE);
    if timings.is_file() {
        // timings rows follow the original report order
        let mut order = Vec::new();
        let mut rdr = csv::Reader::from_path(timings)?;
        for rec in rdr.records() {
            let rec = rec?;
            if let Some(r) = reports
                .iter_mut()
                .find(|r| r.model == rec[0] && r.dataset == rec[1])
            {
                r.runtime_secs = rec[2].parse().unwrap_or(0.0);
                order.push(r.run_id());
            }
        }
        reports.sort_by_key(|r| {
            order
                .iter()
                .position(|id| *id == r.run_id())
                .unwrap_or(usize::MAX)
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
output_dir = "out"

[dataset]
name = "NSL_KDD"
cache_dir = "cache"

[[models]]
kind = "MLP2"

[[models]]
kind = "KAN2"
hidden_width = 8
"#;

    #[test]
    fn parse_minimal_config() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.models.len(), 2);
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.dataset.split_seed, 42);
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn empty_model_list_rejected() {
        let head = MINIMAL.split("[[models]]").next().unwrap();
        let text = head.replace(
            "output_dir = \"out\"\n",
            "output_dir = \"out\"\nmodels = []\n",
        );
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::ConfigParse(_))));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.models.push(ModelConfig::of(ModelKind::Mlp2));
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.apply(&Overrides {
            epochs: Some(3),
            learning_rate: Some(1e-3),
            models: Some(vec![ModelKind::Cnn]),
            subsample: Some((100, 50)),
            ..Default::default()
        });
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.learning_rate, 1e-3);
        assert_eq!(cfg.models, vec![ModelConfig::of(ModelKind::Cnn)]);
        assert_eq!(cfg.subsample.unwrap().train_rows, 100);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::ConfigParse("x".into())), exit::USAGE);
        assert_eq!(exit_code(&Error::MissingFile("a".into())), exit::DATA);
        assert_eq!(
            exit_code(&Error::Divergence {
                epoch: 1,
                reason: "nan".into()
            }),
            exit::DIVERGED
        );
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml(&(MINIMAL.to_string() + "bogus = 1\n")).is_err());
    }
}
