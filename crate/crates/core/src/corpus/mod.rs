//! Catalogs, interaction logs, preprocessing and synthetic fixtures.

pub mod catalog;
pub mod interactions;
pub mod kcore;
pub mod split;
pub mod stats;
pub mod synth;

pub use catalog::{Catalog, ItemRecord};
pub use interactions::{Event, InteractionLog};
pub use kcore::kcore_filter;
pub use split::{build_sequences, leave_one_out_split, truncate_sequence, SplitDataset, UserSplit};
pub use stats::{dataset_stats, DatasetStats};
pub use synth::{generate_synthetic, generate_with_truth, SynthSpec, SynthTruth};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("feature file format error: {0}")]
    Format(String),
    #[error("invalid item `{item}`: {message}")]
    Validation { item: String, message: String },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("sparsity is undefined with zero users or items")]
    UndefinedSparsity,
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}
