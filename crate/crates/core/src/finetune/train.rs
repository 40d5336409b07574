use rand::seq::SliceRandom;

use super::{apply_masking, batch_targets, mip_objective, FinetuneError, MaskedSequence};
use crate::corpus::{truncate_sequence, SplitDataset};
use crate::encoder::{ItemFeatures, Model};
use crate::eval::{evaluate_model, Stage};
use crate::numerics::rng::{purpose, stream};
use crate::numerics::{adamw_step, lr_schedule, AdamWConfig, OptimizerState};
use crate::parallel::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateMode {
    /// Every catalog item is a candidate at every step.
    Full,
    /// Only the targets present in the current batch.
    InBatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneConfig {
    pub mask_ratio: f64,
    pub batch_size: usize,
    pub base_lr: f64,
    /// Per-epoch learning-rate decay; 1 keeps it constant.
    pub lr_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    pub candidate_mode: CandidateMode,
    pub optimizer: AdamWConfig,
    pub exec: Exec,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            mask_ratio: 0.2,
            batch_size: 8192,
            base_lr: 1e-3,
            lr_decay: 1.0,
            epochs: 200,
            patience: 10,
            candidate_mode: CandidateMode::Full,
            optimizer: AdamWConfig::default(),
            exec: Exec::default(),
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<(), FinetuneError> {
        let fail = |m: String| Err(FinetuneError::Config(m));
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return fail(format!("mask_ratio = {} outside [0, 1]", self.mask_ratio));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.patience == 0 {
            return fail("patience must be at least 1".into());
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return fail(format!("base_lr = {} must be positive", self.base_lr));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return fail(format!("lr_decay = {} must be positive", self.lr_decay));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneRecord {
    pub epoch: u32,
    pub lr: f64,
    pub train_loss: f64,
    pub valid_recall10: f64,
    pub valid_ndcg10: f64,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    /// Parameters after the best validation epoch.
    pub best: Model,
    pub best_optimizer: OptimizerState,
    pub best_epoch: u32,
    pub log: Vec<FinetuneRecord>,
}

/// `epoch<TAB>train_loss<TAB>valid_recall@10` lines.
pub fn format_finetune_log(log: &[FinetuneRecord]) -> String {
    log.iter()
        .map(|r| format!("{}\t{}\t{}\n", r.epoch, r.train_loss, r.valid_recall10))
        .collect()
}

/// Fine-tunes every parameter of `model` with masked item prediction on the
/// training prefixes of `split`, keeping the epoch with the best validation
/// `(Recall@10, NDCG@10)` and stopping after `patience` epochs without
/// improvement.
pub fn finetune_run(
    model: Model,
    split: &SplitDataset<usize>,
    features: &[ItemFeatures],
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<FinetuneOutcome, FinetuneError> {
    cfg.validate()?;
    let n_max = model.config.n_max;
    let train: Vec<(usize, &[usize])> = split
        .users
        .iter()
        .enumerate()
        .filter(|(_, u)| !u.train.is_empty())
        .map(|(i, u)| (i, truncate_sequence(&u.train, n_max)))
        .collect();
    if train.is_empty() {
        return Err(FinetuneError::Input("no user has a training prefix".into()));
    }
    let n_items = features.len();
    let mut model = model;
    let mut opt = OptimizerState::new(&model.params, cfg.optimizer);
    let mut best: Option<(f64, f64, u32, Model, OptimizerState)> = None;
    let mut since_best = 0;
    let mut log = Vec::new();
    let mut step: u64 = 0;

    for epoch in 0..cfg.epochs as u32 {
        let lr = lr_schedule(cfg.base_lr, cfg.lr_decay, epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream(seed, &[purpose::SHUFFLE, 1, epoch as u64]));

        let mut losses = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<MaskedSequence> = chunk
                .iter()
                .map(|&k| {
                    let (user, seq) = train[k];
                    let mut rng = stream(seed, &[purpose::MASKING, epoch as u64, user as u64]);
                    apply_masking(seq, cfg.mask_ratio, n_items, &mut rng)
                })
                .collect::<Result<_, _>>()?;
            let candidates = match cfg.candidate_mode {
                CandidateMode::Full => (0..n_items).collect(),
                CandidateMode::InBatch => batch_targets(&batch),
            };
            let users: Vec<u64> = chunk.iter().map(|&k| train[k].0 as u64).collect();
            let rngs = |i: usize| Some(stream(seed, &[purpose::SEQ_DROPOUT, step, users[i]]));
            let (loss, grads) = mip_objective(&model, &batch, features, &candidates, rngs, cfg.exec, true)?;
            model.params.set_grads(grads.expect("gradients requested"));
            adamw_step(&mut model.params, &mut opt, lr)?;
            losses.push(loss);
            step += 1;
        }
        let train_loss = crate::eval::compensated_mean(losses);

        let report = evaluate_model(&model, split, features, Stage::Valid, &[10], cfg.exec)?;
        let (recall, ndcg) = (report.recall(10), report.ndcg(10));
        log::info!("finetune epoch {epoch} lr {lr:e} loss {train_loss:.6} valid recall@10 {recall:.4} ndcg@10 {ndcg:.4}");
        log.push(FinetuneRecord {
            epoch,
            lr,
            train_loss,
            valid_recall10: recall,
            valid_ndcg10: ndcg,
        });

        let improved = match &best {
            None => true,
            Some((r, n, ..)) => (recall, ndcg) > (*r, *n),
        };
        if improved {
            best = Some((recall, ndcg, epoch, model.clone(), opt.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    let (_, _, best_epoch, best, best_optimizer) = best.ok_or_else(|| FinetuneError::Config("epochs must be positive".into()))?;
    Ok(FinetuneOutcome {
        best,
        best_optimizer,
        best_epoch,
        log,
    })
}
