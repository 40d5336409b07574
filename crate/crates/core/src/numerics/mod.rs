//! Dense tensors, trainable parameters, AdamW, and gradient checking.
//!
//! Training math runs in `f64`; checkpoints store `f32`.

pub mod checkpoint;
pub mod gradcheck;
pub mod ops;
pub mod optim;
pub mod param;
pub mod rng;
pub mod tensor;

pub use checkpoint::{Checkpoint, NamedTensor};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use ops::{dropout, gelu, layer_norm, log_sum_exp, softmax_stable};
pub use optim::{adamw_step, lr_schedule, AdamWConfig, OptimizerState, DEFAULT_LR_DECAY};
pub use param::{GradBuf, ParamId, ParamSet, Parameter};
pub use rng::Rng;
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFinite(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}
