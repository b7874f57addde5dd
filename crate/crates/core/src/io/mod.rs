//! Files: dataset CSVs, run configs and embedding exports.

pub mod dataset;
pub mod embed;
pub mod run_config;

pub use dataset::{load_dataset, read_dataset, Dataset, DatasetError, DatasetFile, LabelColumns, LoadReport, ParseFailure};
pub use embed::{export_embeddings, pca_2d, write_embeddings};
pub use run_config::RunConfig;
