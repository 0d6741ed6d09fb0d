//! Binary cache of preprocessed splits.
//!
//! Each split file is `KANIDSD1 | u32 fingerprint length | fingerprint |
//! u64 rows | u64 cols | rows·cols f64 LE | rows label bytes`. Column names,
//! ranges and the ingest summary live beside the splits in `meta.json`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::preprocess::DatasetSplit;
use super::table::IngestReport;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const SPLIT_MAGIC: &[u8; 8] = b"KANIDSD1";
pub const META_FILE: &str = "meta.json";
pub const TRAIN_FILE: &str = "train.bin";
pub const TEST_FILE: &str = "test.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheMeta {
    pub dataset: String,
    /// Digest of the input files and preparation settings; equal keys mean the cache is reusable.
    pub input_key: String,
    pub schema_fingerprint: String,
    pub feature_names: Vec<String>,
    pub feature_stats: Vec<(f64, f64)>,
    pub ingest: Vec<IngestReport>,
    pub train_rows: usize,
    pub test_rows: usize,
    pub train_attack_ratio: f64,
    pub test_attack_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub meta: CacheMeta,
    pub train: DatasetSplit,
    pub test: DatasetSplit,
}

pub fn write_split<W: Write>(mut w: W, split: &DatasetSplit) -> Result<()> {
    let fp = split.schema_fingerprint.as_bytes();
    w.write_all(SPLIT_MAGIC)?;
    w.write_all(&(fp.len() as u32).to_le_bytes())?;
    w.write_all(fp)?;
    w.write_all(&(split.rows() as u64).to_le_bytes())?;
    w.write_all(&(split.dim() as u64).to_le_bytes())?;
    for v in split.features.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&split.labels)?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads a split body; names and stats are taken from `meta`.
pub fn read_split<R: Read>(mut r: R, meta: &CacheMeta) -> Result<DatasetSplit> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SPLIT_MAGIC {
        return Err(Error::Format("not a split cache file".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut fp = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut fp)?;
    let fingerprint =
        String::from_utf8(fp).map_err(|_| Error::Format("fingerprint is not utf-8".into()))?;
    if fingerprint != meta.schema_fingerprint {
        return Err(Error::Format(
            "split fingerprint does not match meta.json".into(),
        ));
    }
    let rows = read_u64(&mut r)? as usize;
    let cols = read_u64(&mut r)? as usize;
    if cols != meta.feature_names.len() {
        return Err(Error::Format(format!(
            "split has {cols} columns, meta lists {}",
            meta.feature_names.len()
        )));
    }
    let mut raw = vec![0u8; rows * cols * 8];
    r.read_exact(&mut raw)?;
    let data = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut labels = vec![0u8; rows];
    r.read_exact(&mut labels)?;
    Ok(DatasetSplit {
        features: Tensor::new(vec![rows, cols], data)?,
        labels,
        feature_names: meta.feature_names.clone(),
        feature_stats: meta.feature_stats.clone(),
        schema_fingerprint: fingerprint,
    })
}

pub fn save_prepared(dir: &Path, p: &Prepared) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, split) in [(TRAIN_FILE, &p.train), (TEST_FILE, &p.test)] {
        let mut w = BufWriter::new(File::create(dir.join(name))?);
        write_split(&mut w, split)?;
        w.flush()?;
    }
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&p.meta)?)?;
    Ok(())
}

pub fn load_meta(dir: &Path) -> Result<CacheMeta> {
    let path = dir.join(META_FILE);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn load_prepared(dir: &Path) -> Result<Prepared> {
    let meta = load_meta(dir)?;
    let open = |name: &str| -> Result<BufReader<File>> {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(Error::MissingFile(path));
        }
        Ok(BufReader::new(File::open(path)?))
    };
    let train = read_split(open(TRAIN_FILE)?, &meta)?;
    let test = read_split(open(TEST_FILE)?, &meta)?;
    Ok(Prepared { meta, train, test })
}

/// SHA-256 over the bytes of each file followed by `settings`.
pub fn input_key(files: &[&Path], settings: &str) -> Result<String> {
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    for path in files {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut f = File::open(path)?;
        loop {
            let n = f.read(&mut buf)?;
            if n == 0 {
                break;
            }
            h.update(&buf[..n]);
        }
        h.update([0xff]);
    }
    h.update(settings.as_bytes());
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split() -> DatasetSplit {
        DatasetSplit {
            features: Tensor::new(vec![2, 3], vec![0.5, -1.0, 1.0, 0.0, 0.25, -0.75]).unwrap(),
            labels: vec![1, 0],
            feature_names: vec!["a".into(), "b".into(), "c".into()],
            feature_stats: vec![(0.0, 1.0); 3],
            schema_fingerprint: "abc123".into(),
        }
    }

    fn meta(s: &DatasetSplit) -> CacheMeta {
        CacheMeta {
            dataset: "NSL_KDD".into(),
            input_key: "k".into(),
            schema_fingerprint: s.schema_fingerprint.clone(),
            feature_names: s.feature_names.clone(),
            feature_stats: s.feature_stats.clone(),
            ingest: Vec::new(),
            train_rows: 2,
            test_rows: 2,
            train_attack_ratio: 0.5,
            test_attack_ratio: 0.5,
        }
    }

    #[test]
    fn split_round_trip_and_layout() {
        let s = split();
        let mut buf = Vec::new();
        write_split(&mut buf, &s).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 6 + 8 + 8 + 6 * 8 + 2);
        assert_eq!(&buf[buf.len() - 2..], &[1, 0]);
        assert_eq!(read_split(buf.as_slice(), &meta(&s)).unwrap(), s);
    }

    #[test]
    fn fingerprint_mismatch_rejected() {
        let s = split();
        let mut buf = Vec::new();
        write_split(&mut buf, &s).unwrap();
        let mut m = meta(&s);
        m.schema_fingerprint = "other".into();
        assert!(matches!(
            read_split(buf.as_slice(), &m),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn prepared_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = split();
        let p = Prepared {
            meta: meta(&s),
            train: s.clone(),
            test: s,
        };
        save_prepared(dir.path(), &p).unwrap();
        assert_eq!(load_prepared(dir.path()).unwrap(), p);
    }
}
