use rand::seq::SliceRandom;

use super::{composite_loss, composite_loss_grad, make_views, LossWeights, PretrainError, View};
use crate::encoder::{unit_rows, ItemFeatures, Model, Modality};
use crate::eval::rank_of_target;
use crate::numerics::rng::{purpose, stream};
use crate::numerics::tensor::dot;
use crate::numerics::{adamw_step, lr_schedule, AdamWConfig, GradBuf, OptimizerState, Rng, DEFAULT_LR_DECAY};
use crate::parallel::{self, Exec};

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub weights: LossWeights,
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub lr_decay: f64,
    pub optimizer: AdamWConfig,
    pub exec: Exec,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            batch_size: 48_000,
            epochs: 15,
            base_lr: 5e-5,
            lr_decay: DEFAULT_LR_DECAY,
            optimizer: AdamWConfig::default(),
            exec: Exec::default(),
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<(), PretrainError> {
        self.weights.validate()?;
        if self.batch_size == 0 {
            return Err(PretrainError::Config("batch_size must be positive".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(PretrainError::Config(format!("base_lr = {} must be positive", self.base_lr)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return Err(PretrainError::Config(format!("lr_decay = {} must be positive", self.lr_decay)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: u32,
    pub lr: f64,
    /// Mean composite loss over the epoch's steps.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub model: Model,
    pub optimizer: OptimizerState,
    pub log: Vec<EpochRecord>,
    pub steps: u64,
    /// Items skipped for lacking a modality.
    pub excluded: usize,
}

/// `epoch<TAB>loss` lines.
pub fn format_loss_log(log: &[EpochRecord]) -> String {
    log.iter().map(|r| format!("{}\t{}\n", r.epoch, r.loss)).collect()
}

/// Composite loss of one batch, optionally with parameter gradients.
///
/// `rngs(i, view)` supplies the dropout stream of item `i` under `view`.
pub fn pretrain_objective<F>(
    model: &Model,
    items: &[&ItemFeatures],
    weights: &LossWeights,
    rngs: F,
    exec: Exec,
    with_grad: bool,
) -> Result<(f64, Option<GradBuf>), PretrainError>
where
    F: Fn(usize, View) -> Option<Rng> + Sync + Send,
{
    let tau = model.config.tau;
    let passes = make_views(model, items, rngs, exec)?;
    if !with_grad {
        return Ok((composite_loss(&passes.batch, weights, tau)?, None));
    }
    let (loss, grad) = composite_loss_grad(&passes.batch, weights, tau)?;
    Ok((loss, Some(passes.backward(model, &grad, exec)?)))
}

/// Dropout stream of one view pass during training.
fn view_stream(seed: u64, epoch: u32, step: u64, item: usize, view: View) -> Rng {
    stream(
        seed,
        &[purpose::VIEW_DROPOUT, epoch as u64, step, item as u64, view.index() as u64],
    )
}

/// Contrastive pretraining over the bimodal items of `features`.
pub fn pretrain_run(
    model: Model,
    features: &[ItemFeatures],
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<PretrainOutcome, PretrainError> {
    cfg.validate()?;
    let usable: Vec<usize> = (0..features.len())
        .filter(|&i| features[i].visual.is_some() && features[i].text.is_some())
        .collect();
    let excluded = features.len() - usable.len();
    if excluded > 0 {
        log::warn!("{excluded} items lack a modality and are excluded from pretraining");
    }
    if usable.is_empty() {
        return Err(PretrainError::Input("no bimodal items to pretrain on".into()));
    }

    let mut model = model;
    let mut opt = OptimizerState::new(&model.params, cfg.optimizer);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step: u64 = 0;
    for epoch in 0..cfg.epochs as u32 {
        let lr = lr_schedule(cfg.base_lr, cfg.lr_decay, epoch);
        let mut order = usable.clone();
        order.shuffle(&mut stream(seed, &[purpose::SHUFFLE, 0, epoch as u64]));
        let mut losses = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let items: Vec<&ItemFeatures> = chunk.iter().map(|&o| &features[o]).collect();
            let rngs = |i: usize, view: View| Some(view_stream(seed, epoch, step, chunk[i], view));
            let (loss, grads) = pretrain_objective(&model, &items, &cfg.weights, rngs, cfg.exec, true)?;
            model.params.set_grads(grads.expect("gradients requested"));
            adamw_step(&mut model.params, &mut opt, lr)?;
            losses.push(loss);
            step += 1;
        }
        let loss = crate::eval::compensated_mean(losses);
        log::info!("pretrain epoch {epoch} lr {lr:e} loss {loss:.6}");
        log.push(EpochRecord { epoch, lr, loss });
    }
    Ok(PretrainOutcome {
        model,
        optimizer: opt,
        log,
        steps: step,
        excluded,
    })
}

/// Cross-modal retrieval ranks: each item's `query` modality alone retrieves
/// among all items' other modality alone; the rank of the item itself.
pub fn cross_modal_ranks(
    model: &Model,
    features: &[ItemFeatures],
    query: Modality,
    exec: Exec,
) -> Result<Vec<usize>, PretrainError> {
    let (qv, kv) = match query {
        Modality::Visual => (View::Visual, View::Text),
        Modality::Text => (View::Text, View::Visual),
    };
    let encode = |view: View| {
        parallel::try_map(exec, features, |_, f| {
            if f.get(Modality::Visual).is_none() || f.get(Modality::Text).is_none() {
                return Err(PretrainError::Contract("cross-modal retrieval needs bimodal items".into()));
            }
            Ok(model.encode_item(view.tokens(f), None)?)
        })
    };
    let (queries, _) = unit_rows(&encode(qv)?)?;
    let (keys, _) = unit_rows(&encode(kv)?)?;
    Ok(parallel::map(exec, &queries, |i, q| {
        let scores: Vec<f64> = keys.iter().map(|k| dot(q, k)).collect();
        rank_of_target(&scores, i)
    }))
}
