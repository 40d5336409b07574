//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown or repeated
//! keys are errors. [`RunConfig::to_text`] prints every key in a fixed order
//! and parses back to an identical configuration; checkpoints embed that text.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::encoder::ModelConfig;
use crate::finetune::{CandidateMode, FinetuneConfig};
use crate::numerics::AdamWConfig;
use crate::pretrain::{LossWeights, PretrainConfig};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` given more than once")]
    Duplicate { line: usize, key: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Whether `d_raw` was set explicitly; otherwise it is taken from the
    /// feature file.
    pub d_raw_set: bool,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub seed: u64,
    pub loss_log: Option<String>,
    pub train_log: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            d_raw_set: false,
            pretrain: PretrainConfig::default(),
            finetune: FinetuneConfig::default(),
            seed: DEFAULT_SEED,
            loss_log: None,
            train_log: None,
        }
    }
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "seed",
    "d_raw",
    "d",
    "n_layers",
    "n_heads",
    "d_ff",
    "max_frames",
    "n_max",
    "embed_dropout",
    "hidden_dropout",
    "tau",
    "ln_eps",
    "init_std",
    "lambda_vv",
    "lambda_tt",
    "lambda_vt",
    "lambda_vtvt",
    "pretrain_batch_size",
    "pretrain_epochs",
    "pretrain_lr",
    "pretrain_lr_decay",
    "mask_ratio",
    "finetune_batch_size",
    "finetune_epochs",
    "finetune_lr",
    "finetune_lr_decay",
    "patience",
    "candidate_mode",
    "beta1",
    "beta2",
    "adam_eps",
    "weight_decay",
    "loss_log",
    "train_log",
];

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Parse {
        line,
        message: format!("`{key}` cannot take the value `{value}`"),
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::Parse {
                line,
                message: format!("expected `key = value`, got `{trimmed}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            cfg.set(key, value, line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let m = &mut self.model;
        let p = &mut self.pretrain;
        let f = &mut self.finetune;
        match key {
            "seed" => self.seed = parse_value(key, value, line)?,
            "d_raw" => {
                m.d_raw = parse_value(key, value, line)?;
                self.d_raw_set = true;
            }
            "d" => m.d = parse_value(key, value, line)?,
            "n_layers" => m.n_layers = parse_value(key, value, line)?,
            "n_heads" => m.n_heads = parse_value(key, value, line)?,
            "d_ff" => m.d_ff = parse_value(key, value, line)?,
            "max_frames" => m.max_frames = parse_value(key, value, line)?,
            "n_max" => m.n_max = parse_value(key, value, line)?,
            "embed_dropout" => m.embed_dropout = parse_value(key, value, line)?,
            "hidden_dropout" => m.hidden_dropout = parse_value(key, value, line)?,
            "tau" => m.tau = parse_value(key, value, line)?,
            "ln_eps" => m.ln_eps = parse_value(key, value, line)?,
            "init_std" => m.init_std = parse_value(key, value, line)?,
            "lambda_vv" => p.weights.vv = parse_value(key, value, line)?,
            "lambda_tt" => p.weights.tt = parse_value(key, value, line)?,
            "lambda_vt" => p.weights.vt = parse_value(key, value, line)?,
            "lambda_vtvt" => p.weights.vtvt = parse_value(key, value, line)?,
            "pretrain_batch_size" => p.batch_size = parse_value(key, value, line)?,
            "pretrain_epochs" => p.epochs = parse_value(key, value, line)?,
            "pretrain_lr" => p.base_lr = parse_value(key, value, line)?,
            "pretrain_lr_decay" => p.lr_decay = parse_value(key, value, line)?,
            "mask_ratio" => f.mask_ratio = parse_value(key, value, line)?,
            "finetune_batch_size" => f.batch_size = parse_value(key, value, line)?,
            "finetune_epochs" => f.epochs = parse_value(key, value, line)?,
            "finetune_lr" => f.base_lr = parse_value(key, value, line)?,
            "finetune_lr_decay" => f.lr_decay = parse_value(key, value, line)?,
            "patience" => f.patience = parse_value(key, value, line)?,
            "candidate_mode" => {
                f.candidate_mode = match value {
                    "full" => CandidateMode::Full,
                    "in_batch" => CandidateMode::InBatch,
                    _ => {
                        return Err(ConfigError::Parse {
                            line,
                            message: format!("candidate_mode must be `full` or `in_batch`, got `{value}`"),
                        })
                    }
                }
            }
            "beta1" => self.set_optimizer(|o| &mut o.beta1, parse_value(key, value, line)?),
            "beta2" => self.set_optimizer(|o| &mut o.beta2, parse_value(key, value, line)?),
            "adam_eps" => self.set_optimizer(|o| &mut o.eps, parse_value(key, value, line)?),
            "weight_decay" => self.set_optimizer(|o| &mut o.weight_decay, parse_value(key, value, line)?),
            "loss_log" => self.loss_log = Some(value.to_string()),
            "train_log" => self.train_log = Some(value.to_string()),
            _ => unreachable!("key list checked by caller"),
        }
        Ok(())
    }

    fn set_optimizer(&mut self, field: impl Fn(&mut AdamWConfig) -> &mut f64, v: f64) {
        *field(&mut self.pretrain.optimizer) = v;
        *field(&mut self.finetune.optimizer) = v;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.model.validate().map_err(|e| invalid(&e))?;
        self.pretrain.validate().map_err(|e| invalid(&e))?;
        self.finetune.validate().map_err(|e| invalid(&e))?;
        let o = &self.pretrain.optimizer;
        if !((0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2)) {
            return Err(ConfigError::Invalid("beta1 and beta2 must lie in [0, 1)".into()));
        }
        if !(o.eps > 0.0) || !(o.weight_decay >= 0.0) {
            return Err(ConfigError::Invalid("adam_eps must be positive and weight_decay non-negative".into()));
        }
        Ok(())
    }

    /// Fills in `d_raw` from the feature file, or checks it against an
    /// explicit setting.
    pub fn resolve_d_raw(&mut self, d_raw: usize) -> Result<(), ConfigError> {
        if self.d_raw_set && self.model.d_raw != d_raw {
            return Err(ConfigError::Invalid(format!(
                "config sets d_raw = {} but the features have width {d_raw}",
                self.model.d_raw
            )));
        }
        self.model.d_raw = d_raw;
        self.d_raw_set = true;
        Ok(())
    }

    /// Every key with its resolved value, in [`KEYS`] order. Unset log paths
    /// are omitted; `d_raw` is omitted until resolved.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let p = &self.pretrain;
        let f = &self.finetune;
        let o = &p.optimizer;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("seed", self.seed.to_string());
        if self.d_raw_set {
            put("d_raw", m.d_raw.to_string());
        }
        put("d", m.d.to_string());
        put("n_layers", m.n_layers.to_string());
        put("n_heads", m.n_heads.to_string());
        put("d_ff", m.d_ff.to_string());
        put("max_frames", m.max_frames.to_string());
        put("n_max", m.n_max.to_string());
        put("embed_dropout", m.embed_dropout.to_string());
        put("hidden_dropout", m.hidden_dropout.to_string());
        put("tau", m.tau.to_string());
        put("ln_eps", m.ln_eps.to_string());
        put("init_std", m.init_std.to_string());
        let LossWeights { vv, tt, vt, vtvt } = p.weights;
        put("lambda_vv", vv.to_string());
        put("lambda_tt", tt.to_string());
        put("lambda_vt", vt.to_string());
        put("lambda_vtvt", vtvt.to_string());
        put("pretrain_batch_size", p.batch_size.to_string());
        put("pretrain_epochs", p.epochs.to_string());
        put("pretrain_lr", p.base_lr.to_string());
        put("pretrain_lr_decay", p.lr_decay.to_string());
        put("mask_ratio", f.mask_ratio.to_string());
        put("finetune_batch_size", f.batch_size.to_string());
        put("finetune_epochs", f.epochs.to_string());
        put("finetune_lr", f.base_lr.to_string());
        put("finetune_lr_decay", f.lr_decay.to_string());
        put("patience", f.patience.to_string());
        put(
            "candidate_mode",
            match f.candidate_mode {
                CandidateMode::Full => "full",
                CandidateMode::InBatch => "in_batch",
            }
            .to_string(),
        );
        put("beta1", o.beta1.to_string());
        put("beta2", o.beta2.to_string());
        put("adam_eps", o.eps.to_string());
        put("weight_decay", o.weight_decay.to_string());
        if let Some(l) = &self.loss_log {
            put("loss_log", l.clone());
        }
        if let Some(l) = &self.train_log {
            put("train_log", l.clone());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_published_settings() {
        let c = RunConfig::default();
        assert_eq!((c.model.d, c.model.n_layers, c.model.n_heads), (512, 2, 8));
        assert_eq!(c.model.tau, 0.05);
        assert_eq!(c.pretrain.weights, LossWeights::default());
        assert_eq!(c.pretrain.base_lr, 5e-5);
        assert_eq!(c.pretrain.lr_decay, 0.9);
        assert_eq!(c.finetune.base_lr, 1e-3);
        assert_eq!(c.finetune.mask_ratio, 0.2);
        assert_eq!(c.finetune.patience, 10);
        assert_eq!((c.model.embed_dropout, c.model.hidden_dropout), (0.2, 0.5));
        assert_eq!(c.model.n_max, 20);
        assert_eq!(c.seed, 42);
    }

    #[test]
    fn parse_and_round_trip() {
        let text = "# tiny\n d = 16\nn_heads=2\n\ntau = 0.1\ncandidate_mode = in_batch\nweight_decay = 0\nd_raw = 32\nloss_log = /tmp/x.tsv\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.model.d, 16);
        assert_eq!(c.finetune.candidate_mode, CandidateMode::InBatch);
        assert_eq!(c.finetune.optimizer.weight_decay, 0.0);
        assert_eq!(c.pretrain.optimizer.weight_decay, 0.0);
        assert_eq!(c.loss_log.as_deref(), Some("/tmp/x.tsv"));
        let echoed = c.to_text();
        assert_eq!(RunConfig::parse(&echoed).unwrap(), c);
        assert_eq!(RunConfig::parse(&echoed).unwrap().to_text(), echoed);
    }

    #[test]
    fn rejects_unknown_duplicate_and_invalid() {
        assert!(matches!(
            RunConfig::parse("colour = red"),
            Err(ConfigError::UnknownKey { line: 1, .. })
        ));
        assert!(matches!(
            RunConfig::parse("d = 8\nd = 8"),
            Err(ConfigError::Duplicate { line: 2, .. })
        ));
        assert!(matches!(RunConfig::parse("d = eight"), Err(ConfigError::Parse { .. })));
        assert!(matches!(RunConfig::parse("no equals"), Err(ConfigError::Parse { .. })));
        assert!(matches!(RunConfig::parse("n_heads = 3"), Err(ConfigError::Invalid(_))));
        assert!(matches!(RunConfig::parse("patience = 0"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn d_raw_resolution() {
        let mut c = RunConfig::default();
        c.resolve_d_raw(32).unwrap();
        assert_eq!(c.model.d_raw, 32);
        let mut c = RunConfig::parse("d_raw = 16").unwrap();
        assert!(c.resolve_d_raw(32).is_err());
    }
}
