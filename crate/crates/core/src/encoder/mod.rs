//! The shared transformer serving as both item encoder and sequence encoder.

mod config;
pub mod features;
pub mod layout;
mod model;
mod similarity;
pub(crate) mod transformer;

pub use config::ModelConfig;
pub use features::{
    pool_frames, prepare_catalog, subsample_indices, ItemFeatures, ItemTokens, Modality,
    TokenState,
};
pub use layout::Layout;
pub use model::{ForwardCache, Model};
pub use similarity::{
    cosine, cosine_backward, similarity, similarity_backward, unit_rows, unit_rows_backward,
};

use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error("model configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
