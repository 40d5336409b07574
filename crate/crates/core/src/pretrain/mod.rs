//! Multi-modal contrastive pretraining of the item encoder.

mod loss;
mod train;
mod views;

pub use loss::{
    composite_loss, composite_loss_grad, composite_terms, nce_loss, nce_loss_grad, LossWeights,
    ViewBatch,
};
pub use train::{
    cross_modal_ranks, format_loss_log, pretrain_objective, pretrain_run, EpochRecord,
    PretrainConfig, PretrainOutcome,
};
pub use views::{make_views, View, ViewPasses};

use crate::encoder::EncoderError;
use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum PretrainError {
    #[error("pretraining configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
