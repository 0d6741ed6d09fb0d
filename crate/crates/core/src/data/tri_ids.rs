use super::preprocess::stratified_subsample;
use super::schema::{tri_ids, DatasetName};
use super::table::{label_counts, Column, IngestReport, RawTable};
use crate::error::{Error, Result};

/// Columns that carry the same quantity across sources and merge into one.
const SHARED: [(DatasetName, &str, &str); 15] = [
    (DatasetName::NslKdd, "protocol_type", "protocol"),
    (DatasetName::BotIot, "proto", "protocol"),
    (DatasetName::NslKdd, "duration", "duration"),
    (DatasetName::BotIot, "dur", "duration"),
    (DatasetName::Cicids2017, "Flow Duration", "duration"),
    (DatasetName::NslKdd, "src_bytes", "src_bytes"),
    (DatasetName::BotIot, "sbytes", "src_bytes"),
    (
        DatasetName::Cicids2017,
        "Total Length of Fwd Packets",
        "src_bytes",
    ),
    (DatasetName::NslKdd, "dst_bytes", "dst_bytes"),
    (DatasetName::BotIot, "dbytes", "dst_bytes"),
    (
        DatasetName::Cicids2017,
        "Total Length of Bwd Packets",
        "dst_bytes",
    ),
    (DatasetName::BotIot, "spkts", "src_pkts"),
    (DatasetName::Cicids2017, "Total Fwd Packets", "src_pkts"),
    (DatasetName::BotIot, "dpkts", "dst_pkts"),
    (
        DatasetName::Cicids2017,
        "Total Backward Packets",
        "dst_pkts",
    ),
];

fn prefix(source: DatasetName) -> &'static str {
    match source {
        DatasetName::NslKdd => "nsl",
        DatasetName::Cicids2017 => "cic",
        DatasetName::BotIot => "bot",
        DatasetName::UnswNb15 => "unsw",
        DatasetName::TriIds => "tri",
    }
}

/// Merged-table name for `column` of `source`: a shared canonical name when
/// listed above, otherwise `<source>.<column>` for columns of the documented
/// layout. Anything else is rejected.
pub fn canonical_name(source: DatasetName, column: &str) -> Result<String> {
    if let Some((_, _, canon)) = SHARED.iter().find(|(s, c, _)| *s == source && *c == column) {
        return Ok(canon.to_string());
    }
    if matches!(
        source,
        DatasetName::NslKdd | DatasetName::Cicids2017 | DatasetName::BotIot
    ) && source.schema().feature_columns().contains(&column)
    {
        return Ok(format!("{}.{column}", prefix(source)));
    }
    Err(Error::AliasMapIncomplete {
        source_name: source.as_str().to_string(),
        column: column.to_string(),
    })
}

/// Union-of-features merge of BOT-IoT, NSL-KDD and CICIDS2017 tables.
///
/// Each source contributes a label-stratified `target_rows / 3` rows (the
/// remainder goes to the earlier sources). Columns a source lacks are filled
/// with `0` (`"0"` when categorical). Row origin is kept in `source`.
pub fn build_tri_ids(
    bot_iot: &RawTable,
    nsl_kdd: &RawTable,
    cicids: &RawTable,
    target_rows: usize,
    seed: u64,
) -> Result<RawTable> {
    let sources = [bot_iot, nsl_kdd, cicids];
    let mut names: Vec<String> = Vec::new();
    let mut categorical: Vec<bool> = Vec::new();
    let mut mapping: Vec<Vec<usize>> = Vec::new();
    for t in sources {
        let mut m = Vec::with_capacity(t.width());
        for (col_name, col) in t.names.iter().zip(&t.columns) {
            let canon = canonical_name(t.schema.name, col_name)?;
            let is_cat = matches!(col, Column::Categorical(_));
            let k = match names.iter().position(|n| *n == canon) {
                Some(k) => {
                    if categorical[k] != is_cat {
                        return Err(Error::SchemaMismatch(format!(
                            "`{canon}` is numeric in one source and categorical in another"
                        )));
                    }
                    k
                }
                None => {
                    names.push(canon);
                    categorical.push(is_cat);
                    names.len() - 1
                }
            };
            m.push(k);
        }
        mapping.push(m);
    }

    let mut columns: Vec<Column> = categorical
        .iter()
        .map(|&c| {
            if c {
                Column::Categorical(Vec::new())
            } else {
                Column::Numeric(Vec::new())
            }
        })
        .collect();
    let mut labels = Vec::new();
    let mut source = Vec::new();
    let base = target_rows / 3;
    for (s, t) in sources.iter().enumerate() {
        let quota = base + usize::from(s < target_rows % 3);
        let rows = stratified_subsample(&t.labels, quota, seed)?;
        let sub = t.select_rows(&rows);
        for (k, col) in columns.iter_mut().enumerate() {
            let src = mapping[s]
                .iter()
                .position(|&m| m == k)
                .map(|i| &sub.columns[i]);
            match (col, src) {
                (Column::Numeric(dst), Some(Column::Numeric(v))) => dst.extend_from_slice(v),
                (Column::Categorical(dst), Some(Column::Categorical(v))) => {
                    dst.extend(v.iter().cloned())
                }
                (Column::Numeric(dst), None) => dst.extend(std::iter::repeat_n(0.0, quota)),
                (Column::Categorical(dst), None) => {
                    dst.extend(std::iter::repeat_n("0".to_string(), quota))
                }
                _ => unreachable!("types checked above"),
            }
        }
        labels.extend_from_slice(&sub.labels);
        source.extend(std::iter::repeat_n(
            t.schema.name.as_str().to_string(),
            quota,
        ));
    }
    let report = IngestReport {
        rows_read: labels.len(),
        label_counts: label_counts(&labels),
        ..Default::default()
    };
    Ok(RawTable {
        schema: tri_ids(),
        names,
        columns,
        labels,
        source: Some(source),
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::{bot_iot, cicids2017, nsl_kdd};

    fn source(schema: crate::data::schema::DatasetSchema, names: &[&str], rows: usize) -> RawTable {
        let labels: Vec<u8> = (0..rows).map(|i| u8::from(i % 4 == 0)).collect();
        RawTable {
            names: names.iter().map(|s| s.to_string()).collect(),
            columns: names
                .iter()
                .enumerate()
                .map(|(k, _)| Column::Numeric((0..rows).map(|i| (i * (k + 1)) as f64).collect()))
                .collect(),
            report: IngestReport {
                label_counts: label_counts(&labels),
                ..Default::default()
            },
            labels,
            source: None,
            schema,
        }
    }

    #[test]
    fn disjoint_sources_union() {
        let b = source(bot_iot(), &["pkts", "bytes"], 30);
        let n = source(nsl_kdd(), &["land", "hot"], 30);
        let c = source(cicids2017(), &["Flow IAT Mean", "Idle Max"], 30);
        let t = build_tri_ids(&b, &n, &c, 30, 1).unwrap();
        assert_eq!(t.width(), 6);
        assert_eq!(t.rows(), 30);
        let src = t.source.as_ref().unwrap();
        for name in ["BOT_IOT", "NSL_KDD", "CICIDS2017"] {
            assert_eq!(src.iter().filter(|s| *s == name).count(), 10);
        }
        // NSL columns are zero on BOT-IoT rows
        let Column::Numeric(land) = t.column("nsl.land").unwrap() else {
            panic!()
        };
        assert!(land[..10].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shared_column_merges() {
        let b = source(bot_iot(), &["sbytes"], 9);
        let n = source(nsl_kdd(), &["src_bytes"], 9);
        let c = source(cicids2017(), &["Total Length of Fwd Packets"], 9);
        let t = build_tri_ids(&b, &n, &c, 9, 0).unwrap();
        assert_eq!(t.names, ["src_bytes"]);
        let Column::Numeric(v) = &t.columns[0] else {
            panic!()
        };
        assert!(v.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn quota_per_source() {
        let b = source(bot_iot(), &["pkts"], 2000);
        let n = source(nsl_kdd(), &["hot"], 2000);
        let c = source(cicids2017(), &["Idle Max"], 2000);
        let t = build_tri_ids(&b, &n, &c, 3000, 7).unwrap();
        let src = t.source.as_ref().unwrap();
        assert_eq!(src.iter().filter(|s| *s == "NSL_KDD").count(), 1000);
        assert_eq!(t.report.label_counts[1], 750);
    }

    #[test]
    fn unknown_column_rejected() {
        let b = source(bot_iot(), &["mystery"], 9);
        let n = source(nsl_kdd(), &["hot"], 9);
        let c = source(cicids2017(), &["Idle Max"], 9);
        let err = build_tri_ids(&b, &n, &c, 9, 0).unwrap_err();
        assert!(matches!(err, Error::AliasMapIncomplete { column, .. } if column == "mystery"));
    }
}
