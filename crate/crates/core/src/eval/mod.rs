//! Ranking metrics, full-catalog evaluation and the popularity baseline.

mod metrics;
mod protocol;

pub use metrics::{compensated_mean, ndcg_at_k, rank_of_target, recall_at_k, top_k};
pub use protocol::{
    evaluate_model, evaluate_scores, pop_baseline, pop_scores, EvalReport, Stage,
};

use crate::finetune::FinetuneError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("evaluation configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error(transparent)]
    Model(#[from] Box<FinetuneError>),
}
