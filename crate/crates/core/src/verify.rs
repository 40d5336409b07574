//! Finite-difference verification of the training objectives.
//!
//! Both checks build a small synthetic batch, freeze every dropout stream so
//! the loss is a deterministic function of the parameters, and compare the
//! analytic gradient of every coordinate against central differences.

use crate::corpus::{generate_synthetic, SynthSpec};
use crate::encoder::{prepare_catalog, ItemFeatures, Model, ModelConfig};
use crate::finetune::{apply_masking, mip_objective, FinetuneError, MaskedSequence};
use crate::numerics::rng::{purpose, stream};
use crate::numerics::{grad_check, GradCheckOptions, GradCheckReport};
use crate::pretrain::{pretrain_objective, LossWeights, PretrainError, View};
use crate::Exec;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub batch_size: usize,
    pub eps: f64,
    pub tolerance: f64,
    /// Check only this many sampled coordinates; `None` checks all.
    pub max_coords: Option<usize>,
    pub weights: LossWeights,
    pub mask_ratio: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            batch_size: 4,
            eps: 1e-4,
            tolerance: 1e-4,
            max_coords: None,
            weights: LossWeights::default(),
            mask_ratio: 0.5,
        }
    }
}

impl VerifyOptions {
    fn grad_check_options(&self, seed: u64) -> GradCheckOptions {
        GradCheckOptions {
            eps: self.eps,
            tolerance: self.tolerance,
            max_coords: self.max_coords,
            seed,
        }
    }
}

/// The configuration the grad checks run on by default: d = 8, one layer,
/// two heads. Initialization is wider than the training default so that no
/// gradient sits below the finite-difference noise floor.
pub fn grad_check_config() -> ModelConfig {
    ModelConfig {
        init_std: 0.3,
        ..ModelConfig::tiny(6)
    }
}

fn synthetic_features(config: &ModelConfig, n_items: usize, seed: u64) -> Vec<ItemFeatures> {
    let spec = SynthSpec {
        n_items,
        n_users: 1,
        d_raw: config.d_raw,
        latent_dim: 4,
        noise: 0.1,
        ..SynthSpec::default()
    };
    let (catalog, _) = generate_synthetic(&spec, seed).expect("valid synthetic spec");
    prepare_catalog(&catalog, config.max_frames).expect("synthetic items are well formed")
}

/// Checks the gradient of the composite contrastive loss.
pub fn check_composite(
    config: &ModelConfig,
    opts: &VerifyOptions,
    seed: u64,
) -> Result<GradCheckReport, PretrainError> {
    let model = Model::new(config.clone(), seed)?;
    let feats = synthetic_features(config, opts.batch_size, seed);
    let items: Vec<&ItemFeatures> = feats.iter().collect();
    let rngs = |i: usize, v: View| Some(stream(seed, &[purpose::GRADCHECK, 0, i as u64, v.index() as u64]));
    let (_, grads) = pretrain_objective(&model, &items, &opts.weights, rngs, Exec::Sequential, true)?;
    let mut params = model.params.clone();
    params.set_grads(grads.expect("gradients requested"));
    Ok(grad_check(
        &params,
        |p| {
            pretrain_objective(&model.with_params(p.clone()), &items, &opts.weights, rngs, Exec::Sequential, false)
                .map(|(l, _)| l)
                .unwrap_or(f64::NAN)
        },
        opts.grad_check_options(seed),
    ))
}

/// Checks the gradient of the masked item prediction loss over a batch of
/// `batch_size` sequences of varying length with full-catalog candidates.
pub fn check_mip(
    config: &ModelConfig,
    opts: &VerifyOptions,
    seed: u64,
) -> Result<GradCheckReport, FinetuneError> {
    let model = Model::new(config.clone(), seed)?;
    let n_items = 7;
    let feats = synthetic_features(config, n_items, seed);
    let batch: Vec<MaskedSequence> = (0..opts.batch_size)
        .map(|i| {
            let len = 1 + (i * 3) % config.n_max.min(5);
            let seq: Vec<usize> = (0..len).map(|j| (i * 5 + j * 3) % n_items).collect();
            let mut rng = stream(seed, &[purpose::GRADCHECK, 1, i as u64]);
            apply_masking(&seq, opts.mask_ratio, n_items, &mut rng)
        })
        .collect::<Result<_, _>>()?;
    let candidates: Vec<usize> = (0..n_items).collect();
    let rngs = |i: usize| Some(stream(seed, &[purpose::GRADCHECK, 2, i as u64]));
    let (_, grads) = mip_objective(&model, &batch, &feats, &candidates, rngs, Exec::Sequential, true)?;
    let mut params = model.params.clone();
    params.set_grads(grads.expect("gradients requested"));
    Ok(grad_check(
        &params,
        |p| {
            mip_objective(&model.with_params(p.clone()), &batch, &feats, &candidates, rngs, Exec::Sequential, false)
                .map(|(l, _)| l)
                .unwrap_or(f64::NAN)
        },
        opts.grad_check_options(seed),
    ))
}
