use super::EncoderError;

/// Shape and regularization settings of the shared encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Raw modality feature width.
    pub d_raw: usize,
    /// Model width.
    pub d: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Feed-forward inner width.
    pub d_ff: usize,
    pub max_frames: usize,
    /// Longest sequence the positional table covers.
    pub n_max: usize,
    pub embed_dropout: f64,
    pub hidden_dropout: f64,
    /// Similarity temperature.
    pub tau: f64,
    pub ln_eps: f64,
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_raw: 512,
            d: 512,
            n_layers: 2,
            n_heads: 8,
            d_ff: 2048,
            max_frames: 10,
            n_max: 20,
            embed_dropout: 0.2,
            hidden_dropout: 0.5,
            tau: 0.05,
            ln_eps: 1e-5,
            init_std: 0.02,
        }
    }
}

impl ModelConfig {
    /// A small configuration for tests and gradient checks.
    pub fn tiny(d_raw: usize) -> Self {
        Self {
            d_raw,
            d: 8,
            n_layers: 1,
            n_heads: 2,
            d_ff: 32,
            max_frames: 10,
            n_max: 8,
            ..Self::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.n_heads
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let fail = |m: String| Err(EncoderError::Config(m));
        if self.d_raw == 0 || self.d == 0 || self.d_ff == 0 {
            return fail("d_raw, d and d_ff must be positive".into());
        }
        if self.n_heads == 0 || !self.d.is_multiple_of(self.n_heads) {
            return fail(format!("d = {} is not divisible by n_heads = {}", self.d, self.n_heads));
        }
        if self.max_frames == 0 {
            return fail("max_frames must be at least 1".into());
        }
        if self.n_max == 0 {
            return fail("n_max must be at least 1".into());
        }
        for (name, rate) in [
            ("embed_dropout", self.embed_dropout),
            ("hidden_dropout", self.hidden_dropout),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return fail(format!("{name} = {rate} outside [0, 1)"));
            }
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return fail(format!("tau = {} must be positive", self.tau));
        }
        if !(self.ln_eps > 0.0) || !(self.init_std > 0.0) {
            return fail("ln_eps and init_std must be positive".into());
        }
        Ok(())
    }
}
