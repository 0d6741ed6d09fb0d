use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::DatasetSchema;
use crate::error::{Error, Result};

/// Values of one raw column. Missing or non-finite numerics are stored as NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(idx.iter().map(|&i| v[i]).collect()),
            Column::Categorical(v) => {
                Column::Categorical(idx.iter().map(|&i| v[i].clone()).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    /// Empty or unparseable numeric cells.
    pub missing_cells: usize,
    /// Cells parsed as ±Inf or NaN.
    pub non_finite_cells: usize,
    pub rows_with_missing: usize,
    /// `[normal, attack]` row counts.
    pub label_counts: [usize; 2],
}

/// Typed feature columns plus binary labels, before any fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTable {
    pub schema: DatasetSchema,
    pub names: Vec<String>,
    pub columns: Vec<Column>,
    pub labels: Vec<u8>,
    /// Origin of each row when the table is a merge of several datasets.
    pub source: Option<Vec<String>>,
    pub report: IngestReport,
}

impl RawTable {
    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i])
    }

    /// Rows `idx` in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> RawTable {
        let labels: Vec<u8> = idx.iter().map(|&i| self.labels[i]).collect();
        let mut report = self.report.clone();
        report.label_counts = label_counts(&labels);
        RawTable {
            schema: self.schema.clone(),
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.select(idx)).collect(),
            source: self
                .source
                .as_ref()
                .map(|s| idx.iter().map(|&i| s[i].clone()).collect()),
            labels,
            report,
        }
    }
}

pub(crate) fn label_counts(labels: &[u8]) -> [usize; 2] {
    let attacks = labels.iter().filter(|&&y| y == 1).count();
    [labels.len() - attacks, attacks]
}

enum Cell {
    Value(f64),
    Missing,
    NonFinite,
}

fn parse_numeric(s: &str) -> Cell {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Cell::Value(v),
        Ok(_) => Cell::NonFinite,
        Err(_) => Cell::Missing,
    }
}

/// Trims names and renames repeats as `name.1`, `name.2`, …
fn dedup_header(raw: impl Iterator<Item = String>) -> Vec<String> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    raw.map(|name| {
        let name = name.trim().trim_start_matches('\u{feff}').to_string();
        let n = seen.entry(name.clone()).or_insert(0);
        let out = if *n == 0 { name } else { format!("{name}.{n}") };
        *n += 1;
        out
    })
    .collect()
}

/// Reads a dataset CSV.
///
/// A first row that contains the schema's label column name is treated as a
/// header; otherwise rows must follow the schema's documented column order.
pub fn ingest_csv(path: &Path, schema: &DatasetSchema) -> Result<RawTable> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let table = ingest_reader(File::open(path)?, schema)?;
    if table.rows() == 0 {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(table)
}

/// As [`ingest_csv`] on an arbitrary reader; an empty input yields zero rows.
pub fn ingest_reader<R: Read>(reader: R, schema: &DatasetSchema) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let Some(first) = records.next().transpose()? else {
        return Ok(empty_table(schema));
    };
    let has_header = first.iter().any(|f| schema.is_label(f.trim()));
    let names: Vec<String> = if has_header {
        dedup_header(first.iter().map(str::to_string))
    } else {
        let n = first.len();
        let full = schema.columns.len();
        if n > full || n + schema.optional_trailing < full {
            return Err(Error::SchemaMismatch(format!(
                "{}: expected {} columns, found {n}",
                schema.name, full
            )));
        }
        schema.columns[..n].to_vec()
    };
    let label_idx = names
        .iter()
        .position(|n| schema.is_label(n))
        .ok_or_else(|| {
            Error::SchemaMismatch(format!(
                "{}: no `{}` column",
                schema.name, schema.label_column
            ))
        })?;
    let keep: Vec<usize> = (0..names.len())
        .filter(|&i| i != label_idx && !schema.is_dropped(&names[i]))
        .collect();

    let mut numeric: Vec<Vec<f64>> = vec![Vec::new(); keep.len()];
    let mut categorical: Vec<Vec<String>> = vec![Vec::new(); keep.len()];
    let mut labels = Vec::new();
    let mut report = IngestReport::default();

    let mut handle = |rec: &csv::StringRecord, line: usize| -> Result<()> {
        if rec.len() != names.len() {
            return Err(Error::SchemaMismatch(format!(
                "{}: line {line} has {} fields, expected {}",
                schema.name,
                rec.len(),
                names.len()
            )));
        }
        let mut row_missing = false;
        for (k, &i) in keep.iter().enumerate() {
            let cell = &rec[i];
            if schema.is_categorical(&names[i]) {
                categorical[k].push(cell.trim().to_string());
                continue;
            }
            numeric[k].push(match parse_numeric(cell) {
                Cell::Value(v) => v,
                Cell::Missing => {
                    report.missing_cells += 1;
                    row_missing = true;
                    f64::NAN
                }
                Cell::NonFinite => {
                    report.non_finite_cells += 1;
                    row_missing = true;
                    f64::NAN
                }
            });
        }
        report.rows_with_missing += usize::from(row_missing);
        labels.push(schema.binarize(&rec[label_idx]));
        Ok(())
    };
    if !has_header {
        handle(&first, 1)?;
    }
    for (line, rec) in records.enumerate() {
        handle(&rec?, line + 2)?;
    }

    report.rows_read = labels.len();
    report.label_counts = label_counts(&labels);
    let columns = keep
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            if schema.is_categorical(&names[i]) {
                Column::Categorical(std::mem::take(&mut categorical[k]))
            } else {
                Column::Numeric(std::mem::take(&mut numeric[k]))
            }
        })
        .collect();
    Ok(RawTable {
        schema: schema.clone(),
        names: keep.iter().map(|&i| names[i].clone()).collect(),
        columns,
        labels,
        source: None,
        report,
    })
}

fn empty_table(schema: &DatasetSchema) -> RawTable {
    RawTable {
        schema: schema.clone(),
        names: Vec::new(),
        columns: Vec::new(),
        labels: Vec::new(),
        source: None,
        report: IngestReport::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::{cicids2017, nsl_kdd};

    fn nsl_row(label: &str) -> String {
        let mut f = vec!["0", "tcp", "http", "SF"];
        f.extend(std::iter::repeat_n("1", 37));
        f.push(label);
        f.push("20");
        f.join(",")
    }

    #[test]
    fn headerless_nsl_rows() {
        let text = format!("{}\n{}\n", nsl_row("normal"), nsl_row("neptune"));
        let t = ingest_reader(text.as_bytes(), &nsl_kdd()).unwrap();
        assert_eq!(t.labels, vec![0, 1]);
        assert_eq!(t.width(), 41);
        assert_eq!(
            t.column("protocol_type"),
            Some(&Column::Categorical(vec!["tcp".into(), "tcp".into()]))
        );
        assert_eq!(t.report.label_counts, [1, 1]);
    }

    #[test]
    fn wrong_column_count() {
        let err = ingest_reader("1,2,3\n".as_bytes(), &nsl_kdd()).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)));
    }

    #[test]
    fn header_with_infinity_and_duplicates() {
        let text = " Flow Bytes/s, Fwd Header Length, Fwd Header Length, Label\n\
                    Infinity,1,2,BENIGN\n\
                    ,3,4,DDoS\n\
                    5,6,7,BENIGN\n";
        let t = ingest_reader(text.as_bytes(), &cicids2017()).unwrap();
        assert_eq!(
            t.names,
            ["Flow Bytes/s", "Fwd Header Length", "Fwd Header Length.1"]
        );
        assert_eq!(t.labels, vec![0, 1, 0]);
        assert_eq!(t.report.non_finite_cells, 1);
        assert_eq!(t.report.missing_cells, 1);
        assert_eq!(t.report.rows_with_missing, 2);
        let Column::Numeric(v) = &t.columns[0] else {
            panic!()
        };
        assert!(v[0].is_nan() && v[1].is_nan() && v[2] == 5.0);
    }

    #[test]
    fn missing_and_empty_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("absent.csv");
        assert!(matches!(ingest_csv(&p, &nsl_kdd()), Err(Error::MissingFile(q)) if q == p));
        std::fs::write(&p, "").unwrap();
        assert!(matches!(
            ingest_csv(&p, &nsl_kdd()),
            Err(Error::EmptyFile(_))
        ));
    }
}
