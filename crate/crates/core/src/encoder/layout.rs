//! Parameter naming, shapes and initialization.

use rand_distr::{Distribution, StandardNormal};

use super::{EncoderError, ModelConfig};
use crate::numerics::rng::{purpose, stream};
use crate::numerics::{ParamId, ParamSet, Rng, Tensor};

/// Affine map `y = x·W + b` with `W` stored `in × out`.
#[derive(Debug, Clone, Copy)]
pub struct LinearIds {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

#[derive(Debug, Clone, Copy)]
pub struct NormIds {
    pub gain: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct BlockIds {
    pub query: LinearIds,
    pub key: LinearIds,
    pub value: LinearIds,
    pub attn_out: LinearIds,
    pub attn_norm: NormIds,
    pub ff_in: LinearIds,
    pub ff_out: LinearIds,
    pub ff_norm: NormIds,
}

/// Handles to every model tensor. Index 0 of the per-modality arrays is the
/// visual modality, index 1 the text modality.
#[derive(Debug, Clone)]
pub struct Layout {
    pub feature_in: [LinearIds; 2],
    /// `2 × d`: one row per modality.
    pub modality: ParamId,
    /// `d`.
    pub mask: ParamId,
    /// `n_max × d`.
    pub position: ParamId,
    pub blocks: Vec<BlockIds>,
    pub feature_out: [LinearIds; 2],
}

/// Samples N(0, std²) truncated to ±2 std by rejection.
fn truncated_normal(rng: &mut Rng, std: f64) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

struct Builder<'a> {
    params: ParamSet,
    rng: &'a mut Rng,
    std: f64,
}

impl Builder<'_> {
    fn random(&mut self, name: &str, shape: &[usize]) -> Result<ParamId, EncoderError> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| truncated_normal(self.rng, self.std)).collect();
        Ok(self.params.register(name, Tensor::from_vec(shape, data)?)?)
    }

    fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<ParamId, EncoderError> {
        let mut t = Tensor::zeros(shape);
        t.fill(value);
        Ok(self.params.register(name, t)?)
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<LinearIds, EncoderError> {
        Ok(LinearIds {
            weight: self.random(&format!("{name}.weight"), &[fan_in, fan_out])?,
            bias: Some(self.constant(&format!("{name}.bias"), &[fan_out], 0.0)?),
        })
    }

    fn linear_no_bias(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<LinearIds, EncoderError> {
        Ok(LinearIds {
            weight: self.random(&format!("{name}.weight"), &[fan_in, fan_out])?,
            bias: None,
        })
    }

    fn norm(&mut self, name: &str, d: usize) -> Result<NormIds, EncoderError> {
        Ok(NormIds {
            gain: self.constant(&format!("{name}.gain"), &[d], 1.0)?,
            bias: self.constant(&format!("{name}.bias"), &[d], 0.0)?,
        })
    }
}

/// Registers all parameters for `config` with freshly initialized values.
pub fn build(config: &ModelConfig, seed: u64) -> Result<(ParamSet, Layout), EncoderError> {
    config.validate()?;
    let mut rng = stream(seed, &[purpose::INIT]);
    let mut b = Builder {
        params: ParamSet::new(),
        rng: &mut rng,
        std: config.init_std,
    };
    let d = config.d;
    let feature_in = [
        b.linear("visual_in", config.d_raw, d)?,
        b.linear("text_in", config.d_raw, d)?,
    ];
    let modality = b.random("modality_embedding", &[2, d])?;
    let mask = b.random("mask_embedding", &[d])?;
    let position = b.random("position_embedding", &[config.n_max, d])?;
    let mut blocks = Vec::with_capacity(config.n_layers);
    for l in 0..config.n_layers {
        let p = format!("blocks.{l}");
        blocks.push(BlockIds {
            query: b.linear(&format!("{p}.attn.query"), d, d)?,
            // A key bias shifts each score row uniformly and cannot affect the softmax.
            key: b.linear_no_bias(&format!("{p}.attn.key"), d, d)?,
            value: b.linear(&format!("{p}.attn.value"), d, d)?,
            attn_out: b.linear(&format!("{p}.attn.out"), d, d)?,
            attn_norm: b.norm(&format!("{p}.attn_norm"), d)?,
            ff_in: b.linear(&format!("{p}.ff.in"), d, config.d_ff)?,
            ff_out: b.linear(&format!("{p}.ff.out"), config.d_ff, d)?,
            ff_norm: b.norm(&format!("{p}.ff_norm"), d)?,
        });
    }
    let feature_out = [b.linear("visual_out", d, d)?, b.linear("text_out", d, d)?];
    Ok((
        b.params,
        Layout {
            feature_in,
            modality,
            mask,
            position,
            blocks,
            feature_out,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_init() {
        let cfg = ModelConfig::tiny(5);
        let (ps, layout) = build(&cfg, 3).unwrap();
        assert_eq!(ps[layout.feature_in[0].weight].shape(), &[5, 8]);
        assert_eq!(ps[layout.position].shape(), &[cfg.n_max, 8]);
        assert_eq!(ps[layout.blocks[0].ff_in.weight].shape(), &[8, 32]);
        assert!(ps[layout.feature_in[1].bias.unwrap()].data().iter().all(|&v| v == 0.0));
        assert!(ps[layout.blocks[0].attn_norm.gain].data().iter().all(|&v| v == 1.0));
        let w = ps[layout.blocks[0].query.weight].data();
        assert!(w.iter().all(|v| v.abs() <= 0.04));
        let std = (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt();
        assert!(std > 0.01 && std < 0.03, "{std}");
        // 4 + 3 + 15 per block + 4.
        assert_eq!(ps.len(), 4 + 3 + 15 + 4);
        assert!(ps.id("blocks.0.attn.key.bias").is_none());
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let cfg = ModelConfig::tiny(5);
        assert_eq!(build(&cfg, 9).unwrap().0, build(&cfg, 9).unwrap().0);
        assert_ne!(build(&cfg, 9).unwrap().0, build(&cfg, 10).unwrap().0);
    }
}
