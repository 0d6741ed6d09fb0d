use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::table::{Column, RawTable};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_SPLIT_SEED: u64 = 42;
pub const TEST_FRACTION: f64 = 0.2;

/// Model-ready features in `[-1, 1]` with binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub features: Tensor,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
    /// Train-split `(min, max)` behind each output column.
    pub feature_stats: Vec<(f64, f64)>,
    pub schema_fingerprint: String,
}

impl DatasetSplit {
    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn attack_ratio(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.labels.iter().filter(|&&y| y == 1).count() as f64 / self.labels.len() as f64
    }

    pub fn select_rows(&self, idx: &[usize]) -> DatasetSplit {
        DatasetSplit {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            ..self.clone()
        }
    }
}

/// Per-column transform parameters, all derived from training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnTransform {
    Numeric {
        name: String,
        median: f64,
        min: f64,
        max: f64,
    },
    OneHot {
        name: String,
        vocab: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub columns: Vec<ColumnTransform>,
    pub dropped: Vec<String>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Min-max map of `[min, max]` onto `[-1, 1]`, clipped.
pub fn scale(v: f64, min: f64, max: f64) -> f64 {
    (2.0 * (v - min) / (max - min) - 1.0).clamp(-1.0, 1.0)
}

impl Transform {
    /// Fits all column transforms on `rows` of `raw`.
    /// Columns that are constant (or entirely missing) on those rows are dropped.
    pub fn fit(raw: &RawTable, rows: &[usize]) -> Self {
        let mut columns = Vec::new();
        let mut dropped = Vec::new();
        for (name, col) in raw.names.iter().zip(&raw.columns) {
            match col {
                Column::Numeric(v) => {
                    let mut vals: Vec<f64> = rows
                        .iter()
                        .map(|&i| v[i])
                        .filter(|x| x.is_finite())
                        .collect();
                    vals.sort_by(f64::total_cmp);
                    match (vals.first(), vals.last()) {
                        (Some(&min), Some(&max)) if min < max => {
                            columns.push(ColumnTransform::Numeric {
                                name: name.clone(),
                                median: median(&vals),
                                min,
                                max,
                            })
                        }
                        _ => dropped.push(name.clone()),
                    }
                }
                Column::Categorical(v) => {
                    let mut vocab: Vec<String> = rows.iter().map(|&i| v[i].clone()).collect();
                    vocab.sort();
                    vocab.dedup();
                    if vocab.len() > 1 {
                        columns.push(ColumnTransform::OneHot {
                            name: name.clone(),
                            vocab,
                        });
                    } else {
                        dropped.push(name.clone());
                    }
                }
            }
        }
        Self { columns, dropped }
    }

    pub fn output_names(&self) -> Vec<String> {
        self.columns
            .iter()
            .flat_map(|c| match c {
                ColumnTransform::Numeric { name, .. } => vec![name.clone()],
                ColumnTransform::OneHot { name, vocab } => {
                    vocab.iter().map(|v| format!("{name}={v}")).collect()
                }
            })
            .collect()
    }

    fn output_stats(&self) -> Vec<(f64, f64)> {
        self.columns
            .iter()
            .flat_map(|c| match c {
                ColumnTransform::Numeric { min, max, .. } => vec![(*min, *max)],
                ColumnTransform::OneHot { vocab, .. } => vec![(0.0, 1.0); vocab.len()],
            })
            .collect()
    }

    /// SHA-256 over output column names and every fitted parameter.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("transform serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Transforms `rows` of `raw`. Unseen categories encode as all zeros.
    pub fn apply(&self, raw: &RawTable, rows: &[usize]) -> Result<DatasetSplit> {
        let names = self.output_names();
        let dim = names.len();
        let mut data = vec![0.0; rows.len() * dim];
        let mut offset = 0;
        for ct in &self.columns {
            let (name, width) = match ct {
                ColumnTransform::Numeric { name, .. } => (name, 1),
                ColumnTransform::OneHot { name, vocab } => (name, vocab.len()),
            };
            let col = raw
                .column(name)
                .ok_or_else(|| Error::SchemaMismatch(format!("column `{name}` missing")))?;
            match (ct, col) {
                (
                    ColumnTransform::Numeric {
                        median, min, max, ..
                    },
                    Column::Numeric(v),
                ) => {
                    for (r, &i) in rows.iter().enumerate() {
                        let x = if v[i].is_finite() { v[i] } else { *median };
                        data[r * dim + offset] = scale(x, *min, *max);
                    }
                }
                (ColumnTransform::OneHot { vocab, .. }, Column::Categorical(v)) => {
                    for (r, &i) in rows.iter().enumerate() {
                        if let Ok(k) = vocab.binary_search(&v[i]) {
                            data[r * dim + offset + k] = 1.0;
                        }
                    }
                }
                _ => {
                    return Err(Error::SchemaMismatch(format!(
                        "column `{name}` changed type"
                    )))
                }
            }
            offset += width;
        }
        Ok(DatasetSplit {
            features: Tensor::new(vec![rows.len(), dim], data)?,
            labels: rows.iter().map(|&i| raw.labels[i]).collect(),
            feature_names: names,
            feature_stats: self.output_stats(),
            schema_fingerprint: self.fingerprint(),
        })
    }
}

fn class_indices(labels: &[u8]) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        out[usize::from(y != 0)].push(i);
    }
    out
}

/// Label-stratified split; returns sorted `(train, test)` row indices.
pub fn stratified_split(
    labels: &[u8],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let classes = class_indices(labels);
    if classes.iter().any(Vec::is_empty) {
        return Err(Error::SingleClassDataset);
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (c, mut idx) in classes.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Sorted indices of `n` rows drawn per class in proportion to the class
/// counts (largest-remainder rounding).
pub fn stratified_subsample(labels: &[u8], n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > labels.len() {
        return Err(Error::InsufficientRows {
            needed: n,
            available: labels.len(),
        });
    }
    let classes = class_indices(labels);
    let total = labels.len() as f64;
    let exact: Vec<f64> = classes
        .iter()
        .map(|c| n as f64 * c.len() as f64 / total)
        .collect();
    let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let short = n - quota.iter().sum::<usize>();
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    for &c in order.iter().take(short) {
        quota[c] += 1;
    }
    let mut out = Vec::with_capacity(n);
    for (c, mut idx) in classes.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        idx.shuffle(&mut rng);
        out.extend_from_slice(&idx[..quota[c]]);
    }
    out.sort_unstable();
    Ok(out)
}

/// Stratified split of one table, then fit on train and apply to both sides.
pub fn preprocess(raw: &RawTable, split_seed: u64) -> Result<(DatasetSplit, DatasetSplit)> {
    let (train_idx, test_idx) = stratified_split(&raw.labels, TEST_FRACTION, split_seed)?;
    let t = Transform::fit(raw, &train_idx);
    Ok((t.apply(raw, &train_idx)?, t.apply(raw, &test_idx)?))
}

/// Fit on an official training file and apply to its companion test file.
pub fn preprocess_official(
    train: &RawTable,
    test: &RawTable,
) -> Result<(DatasetSplit, DatasetSplit)> {
    if train.names != test.names {
        return Err(Error::SchemaMismatch(
            "train and test files have different columns".into(),
        ));
    }
    if train.report.label_counts.contains(&0) {
        return Err(Error::SingleClassDataset);
    }
    let train_idx: Vec<usize> = (0..train.rows()).collect();
    let test_idx: Vec<usize> = (0..test.rows()).collect();
    let t = Transform::fit(train, &train_idx);
    Ok((t.apply(train, &train_idx)?, t.apply(test, &test_idx)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::nsl_kdd;
    use crate::data::table::IngestReport;

    fn table(names: &[&str], columns: Vec<Column>, labels: Vec<u8>) -> RawTable {
        let counts = crate::data::table::label_counts(&labels);
        RawTable {
            schema: nsl_kdd(),
            names: names.iter().map(|s| s.to_string()).collect(),
            columns,
            labels,
            source: None,
            report: IngestReport {
                label_counts: counts,
                ..Default::default()
            },
        }
    }

    #[test]
    fn scaling_examples() {
        assert_eq!(scale(5.0, 0.0, 10.0), 0.0);
        assert_eq!(scale(10.0, 0.0, 10.0), 1.0);
        assert_eq!(scale(12.0, 0.0, 10.0), 1.0);
        assert_eq!(scale(-3.0, 0.0, 10.0), -1.0);
    }

    #[test]
    fn one_hot_sorted_vocab() {
        let proto = ["tcp", "udp", "icmp", "tcp"].map(String::from).to_vec();
        let t = table(&["p"], vec![Column::Categorical(proto)], vec![0, 1, 0, 1]);
        let tr = Transform::fit(&t, &[0, 1, 2, 3]);
        assert_eq!(tr.output_names(), ["p=icmp", "p=tcp", "p=udp"]);
        let s = tr.apply(&t, &[0]).unwrap();
        assert_eq!(s.features.data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn unseen_category_is_all_zeros() {
        let v = ["a", "b", "c"].map(String::from).to_vec();
        let t = table(&["p"], vec![Column::Categorical(v)], vec![0, 1, 1]);
        let tr = Transform::fit(&t, &[0, 1]);
        assert_eq!(tr.apply(&t, &[2]).unwrap().features.data(), &[0.0, 0.0]);
    }

    #[test]
    fn constant_columns_dropped_and_median_imputed() {
        let t = table(
            &["k", "x"],
            vec![
                Column::Numeric(vec![3.0; 5]),
                Column::Numeric(vec![0.0, f64::NAN, 10.0, 4.0, 6.0]),
            ],
            vec![0, 0, 1, 1, 1],
        );
        let tr = Transform::fit(&t, &[0, 1, 2, 3, 4]);
        assert_eq!(tr.dropped, ["k"]);
        let s = tr.apply(&t, &[1]).unwrap();
        // median of {0, 4, 6, 10} is 5 → midpoint
        assert_eq!(s.features.data(), &[0.0]);
    }

    #[test]
    fn stratified_split_ratios() {
        let labels: Vec<u8> = (0..1000).map(|i| u8::from(i % 10 < 3)).collect();
        let (tr, te) = stratified_split(&labels, 0.2, 42).unwrap();
        assert_eq!(tr.len() + te.len(), 1000);
        let ratio = |idx: &[usize]| {
            idx.iter().filter(|&&i| labels[i] == 1).count() as f64 / idx.len() as f64
        };
        assert!((ratio(&tr) - ratio(&te)).abs() < 0.01);
        assert!(matches!(
            stratified_split(&[1, 1, 1], 0.2, 1),
            Err(Error::SingleClassDataset)
        ));
    }

    #[test]
    fn subsample_quota() {
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i < 33)).collect();
        let idx = stratified_subsample(&labels, 10, 5).unwrap();
        assert_eq!(idx.len(), 10);
        assert_eq!(idx.iter().filter(|&&i| labels[i] == 1).count(), 3);
        assert!(stratified_subsample(&labels, 101, 5).is_err());
    }
}
