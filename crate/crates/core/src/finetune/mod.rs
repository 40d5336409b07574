//! Masked item prediction fine-tuning and next-item inference.

mod loss;
mod masking;
mod predict;
mod train;

pub use loss::{batch_targets, mip_loss, mip_objective, retrieval_ce, retrieval_ce_grad};
pub use masking::{apply_masking, MaskedSequence, SlotInput};
pub use predict::{predict_next, score_next, CandidateIndex};
pub use train::{
    finetune_run, format_finetune_log, CandidateMode, FinetuneConfig, FinetuneOutcome,
    FinetuneRecord,
};

use crate::encoder::EncoderError;
use crate::eval::EvalError;
use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum FinetuneError {
    #[error("fine-tuning configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Eval(#[from] Box<EvalError>),
}

impl From<EvalError> for FinetuneError {
    fn from(e: EvalError) -> Self {
        FinetuneError::Eval(Box::new(e))
    }
}
