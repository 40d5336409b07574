//! Dual-tower multi-modal sequential recommendation.
//!
//! One transformer encodes both single items (from their visual and text
//! features) and user interaction sequences. Items are pretrained with a
//! composite contrastive objective over modality combinations, then the
//! shared encoder is fine-tuned with masked item prediction and evaluated by
//! full-catalog retrieval.

pub mod config;
pub mod corpus;
pub mod encoder;
pub mod eval;
pub mod finetune;
pub mod numerics;
pub mod parallel;
pub mod pretrain;
pub mod verify;

pub use parallel::Exec;
