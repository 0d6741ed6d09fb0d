//! Dataset ingestion and preprocessing.

pub mod cache;
pub mod preprocess;
pub mod schema;
pub mod synthetic;
pub mod table;
pub mod tri_ids;

pub use cache::{load_prepared, save_prepared, CacheMeta, Prepared};
pub use preprocess::{
    preprocess, preprocess_official, stratified_split, stratified_subsample, DatasetSplit,
    Transform, DEFAULT_SPLIT_SEED,
};
pub use schema::{DatasetName, DatasetSchema};
pub use synthetic::{synthetic_csv, write_synthetic, SynthConfig};
pub use table::{ingest_csv, ingest_reader, Column, IngestReport, RawTable};
pub use tri_ids::{build_tri_ids, canonical_name};
