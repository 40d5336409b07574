use super::features::{pool_frames, ItemFeatures, ItemTokens, Modality, TokenState};
use super::layout::{build, Layout};
use super::transformer::{block_backward, block_forward, linear, linear_backward, BlockCache};
use super::{EncoderError, ModelConfig};
use crate::numerics::ops::{apply_mask, dropout_mask};
use crate::numerics::tensor::{add_into, dot, l2_norm};
use crate::numerics::{GradBuf, ParamSet, Rng};
use crate::parallel::{self, Exec};

/// Configuration, parameter storage and tensor handles of the encoder.
///
/// A single [`ParamSet`] backs both [`Model::encode_item`] and
/// [`Model::encode_sequence`].
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub layout: Layout,
    pub params: ParamSet,
}

#[derive(Debug, Clone)]
struct HeadCache {
    unit: [Vec<f64>; 2],
    norm: [f64; 2],
    /// Per coordinate, whether the text side won the max-pool.
    from_text: Vec<bool>,
}

/// Intermediate values of one forward pass, consumed by [`Model::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<'a> {
    items: Vec<ItemTokens<'a>>,
    positional: bool,
    embed_drop: Option<Vec<f64>>,
    blocks: Vec<BlockCache>,
    hidden: Vec<f64>,
    heads: Vec<HeadCache>,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, EncoderError> {
        let (params, layout) = build(&config, seed)?;
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    /// Same layout, different parameter values.
    pub fn with_params(&self, params: ParamSet) -> Self {
        Self {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params,
        }
    }

    fn project_in(&self, m: Modality, features: &[f64]) -> Result<Vec<f64>, EncoderError> {
        if features.len() != self.config.d_raw {
            return Err(EncoderError::Dimension(format!(
                "{m:?} features have length {}, expected {}",
                features.len(),
                self.config.d_raw
            )));
        }
        Ok(linear(features, 1, &self.params, self.layout.feature_in[m.index()]))
    }

    /// Visual feature embedding of a clip: affine map of the retained-frame mean.
    pub fn embed_visual(&self, frames: &[Vec<f32>]) -> Result<Vec<f64>, EncoderError> {
        let mean = pool_frames(frames, self.config.max_frames)?;
        self.project_in(Modality::Visual, &mean)
    }

    pub fn embed_text(&self, text: &[f64]) -> Result<Vec<f64>, EncoderError> {
        self.project_in(Modality::Text, text)
    }

    /// Runs the encoder over `items`, two tokens per item. `rng = None` is
    /// eval mode; `Some` enables dropout drawn from that stream.
    ///
    /// Returns one pooled vector per item together with the cache needed for
    /// the backward pass.
    pub fn forward<'a>(
        &self,
        items: &[ItemTokens<'a>],
        positional: bool,
        mut rng: Option<&mut Rng>,
    ) -> Result<(Vec<Vec<f64>>, ForwardCache<'a>), EncoderError> {
        let cfg = &self.config;
        let p = &self.params;
        let d = cfg.d;
        if items.is_empty() {
            return Err(EncoderError::Input("nothing to encode".into()));
        }
        if positional && items.len() > cfg.n_max {
            return Err(EncoderError::Contract(format!(
                "sequence of length {} exceeds n_max = {}",
                items.len(),
                cfg.n_max
            )));
        }
        let t = 2 * items.len();
        let first_pos = cfg.n_max.saturating_sub(items.len());

        let mut x = vec![0.0; t * d];
        for (i, item) in items.iter().enumerate() {
            for m in Modality::ALL {
                let row = &mut x[(2 * i + m.index()) * d..(2 * i + m.index() + 1) * d];
                match item.get(m) {
                    TokenState::Real(f) => row.copy_from_slice(&self.project_in(m, f)?),
                    TokenState::Masked | TokenState::Absent => {
                        row.copy_from_slice(p[self.layout.mask].data())
                    }
                }
                add_into(row, p[self.layout.modality].row(m.index()));
                if positional {
                    add_into(row, p[self.layout.position].row(first_pos + i));
                }
            }
        }
        let embed_drop = dropout_mask(x.len(), cfg.embed_dropout, rng.as_deref_mut())?;
        if let Some(mask) = &embed_drop {
            apply_mask(&mut x, mask);
        }

        let mut blocks = Vec::with_capacity(self.layout.blocks.len());
        for ids in &self.layout.blocks {
            let (out, cache) = block_forward(cfg, p, ids, x, t, rng.as_deref_mut())?;
            blocks.push(cache);
            x = out;
        }

        let mut outputs = Vec::with_capacity(items.len());
        let mut heads = Vec::with_capacity(items.len());
        for i in 0..items.len() {
            let mut unit: [Vec<f64>; 2] = Default::default();
            let mut norm = [0.0; 2];
            for m in Modality::ALL {
                let k = 2 * i + m.index();
                let mut z = linear(&x[k * d..(k + 1) * d], 1, p, self.layout.feature_out[m.index()]);
                let n = l2_norm(&z);
                if !(n > 0.0 && n.is_finite()) {
                    return Err(EncoderError::Numeric(format!(
                        "projected {m:?} output of item {i} has norm {n}"
                    )));
                }
                z.iter_mut().for_each(|v| *v /= n);
                unit[m.index()] = z;
                norm[m.index()] = n;
            }
            let from_text: Vec<bool> = unit[0].iter().zip(&unit[1]).map(|(v, t)| t > v).collect();
            outputs.push(
                unit[0]
                    .iter()
                    .zip(&unit[1])
                    .map(|(&v, &t)| v.max(t))
                    .collect(),
            );
            heads.push(HeadCache {
                unit,
                norm,
                from_text,
            });
        }

        Ok((
            outputs,
            ForwardCache {
                items: items.to_vec(),
                positional,
                embed_drop,
                blocks,
                hidden: x,
                heads,
            },
        ))
    }

    /// Accumulates into `grads` the parameter gradients of `Σ_i ⟨d_out[i], out[i]⟩`.
    pub fn backward(
        &self,
        cache: &ForwardCache<'_>,
        d_out: &[Vec<f64>],
        grads: &mut GradBuf,
    ) -> Result<(), EncoderError> {
        let cfg = &self.config;
        let p = &self.params;
        let d = cfg.d;
        if d_out.len() != cache.items.len() {
            return Err(EncoderError::Dimension(format!(
                "{} output gradients for {} items",
                d_out.len(),
                cache.items.len()
            )));
        }
        let t = 2 * cache.items.len();

        let mut dx = vec![0.0; t * d];
        for (i, (head, g)) in cache.heads.iter().zip(d_out).enumerate() {
            if g.len() != d {
                return Err(EncoderError::Dimension(format!(
                    "output gradient of length {}, expected {d}",
                    g.len()
                )));
            }
            for m in Modality::ALL {
                let is_text = m == Modality::Text;
                let du: Vec<f64> = g
                    .iter()
                    .zip(&head.from_text)
                    .map(|(&gk, &ft)| if ft == is_text { gk } else { 0.0 })
                    .collect();
                let u = &head.unit[m.index()];
                let proj = dot(u, &du);
                let dz: Vec<f64> = du
                    .iter()
                    .zip(u)
                    .map(|(&a, &b)| (a - b * proj) / head.norm[m.index()])
                    .collect();
                let k = 2 * i + m.index();
                let row = &cache.hidden[k * d..(k + 1) * d];
                let dh = linear_backward(row, 1, p, self.layout.feature_out[m.index()], &dz, grads, true)
                    .expect("dx requested");
                add_into(&mut dx[k * d..(k + 1) * d], &dh);
            }
        }

        for (ids, bc) in self.layout.blocks.iter().zip(&cache.blocks).rev() {
            dx = block_backward(cfg, p, ids, bc, t, &dx, grads);
        }

        if let Some(mask) = &cache.embed_drop {
            apply_mask(&mut dx, mask);
        }
        for (i, item) in cache.items.iter().enumerate() {
            for m in Modality::ALL {
                let k = 2 * i + m.index();
                let g = &dx[k * d..(k + 1) * d];
                match item.get(m) {
                    TokenState::Real(f) => {
                        linear_backward(f, 1, p, self.layout.feature_in[m.index()], g, grads, false);
                    }
                    TokenState::Masked | TokenState::Absent => add_into(grads.get_mut(self.layout.mask), g),
                }
                add_into(&mut grads.get_mut(self.layout.modality)[m.index() * d..(m.index() + 1) * d], g);
                if cache.positional {
                    let r = self.config.n_max - cache.items.len() + i;
                    add_into(&mut grads.get_mut(self.layout.position)[r * d..(r + 1) * d], g);
                }
            }
        }
        Ok(())
    }

    /// Item tower: one item, no positional embedding.
    pub fn encode_item(&self, item: ItemTokens<'_>, rng: Option<&mut Rng>) -> Result<Vec<f64>, EncoderError> {
        let (mut out, _) = self.forward(&[item], false, rng)?;
        Ok(out.pop().expect("one item in, one vector out"))
    }

    /// Sequence tower: one pooled vector per position. The caller truncates
    /// to `n_max`; longer input is a contract violation. Positions are
    /// right-aligned: the last item always takes positional row `n_max - 1`.
    pub fn encode_sequence(
        &self,
        seq: &[ItemTokens<'_>],
        rng: Option<&mut Rng>,
    ) -> Result<Vec<Vec<f64>>, EncoderError> {
        Ok(self.forward(seq, true, rng)?.0)
    }

    /// Eval-mode item representations for a whole catalog, by ordinal.
    pub fn encode_catalog(&self, features: &[ItemFeatures], exec: Exec) -> Result<Vec<Vec<f64>>, EncoderError> {
        parallel::try_map(exec, features, |_, f| self.encode_item(f.tokens(), None))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::stream;
    use crate::numerics::{grad_check, GradCheckOptions};
    use approx::assert_abs_diff_eq;

    fn feats(seed: u64, d_raw: usize) -> ItemFeatures {
        let mut rng = stream(seed, &[99]);
        use rand::Rng as _;
        let mut v = || (0..d_raw).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        ItemFeatures {
            visual: Some(v()),
            text: Some(v()),
        }
    }

    fn tiny() -> Model {
        Model::new(ModelConfig::tiny(6), 1).unwrap()
    }

    #[test]
    fn per_modality_outputs_are_unit_and_pooled_is_max() {
        let model = tiny();
        let f = feats(1, 6);
        let (out, cache) = model.forward(&[f.tokens()], false, None).unwrap();
        let h = &cache.heads[0];
        for u in &h.unit {
            assert_abs_diff_eq!(l2_norm(u), 1.0, epsilon = 1e-9);
        }
        for (k, &o) in out[0].iter().enumerate() {
            assert_eq!(o, h.unit[0][k].max(h.unit[1][k]));
        }
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let model = tiny();
        let f = feats(2, 6);
        let a = model.encode_item(f.tokens(), None).unwrap();
        let b = model.encode_item(f.tokens(), None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fully_masked_item_ignores_content() {
        let model = tiny();
        let a = model.encode_item(ItemTokens::MASKED, None).unwrap();
        let f = feats(3, 6);
        let b = model
            .encode_item(f.tokens().mask(Modality::Visual).mask(Modality::Text), None)
            .unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn missing_modalities_are_supported() {
        let model = tiny();
        let f = feats(4, 6);
        for (v, t) in [(true, false), (false, true), (true, true)] {
            let only = ItemFeatures {
                visual: f.visual.clone().filter(|_| v),
                text: f.text.clone().filter(|_| t),
            };
            assert!(model.encode_item(only.tokens(), None).is_ok());
        }
    }

    #[test]
    fn zero_positions_make_towers_agree() {
        let mut model = tiny();
        let f = feats(5, 6);
        let item = model.encode_item(f.tokens(), None).unwrap();
        let seq = model.encode_sequence(&[f.tokens()], None).unwrap();
        assert_ne!(item, seq[0]);
        model.params[model.layout.position].fill(0.0);
        let seq = model.encode_sequence(&[f.tokens()], None).unwrap();
        assert_eq!(item, seq[0]);
    }

    #[test]
    fn positions_distinguish_repeated_items() {
        let model = tiny();
        let f = feats(6, 6);
        let out = model.encode_sequence(&[f.tokens(), f.tokens()], None).unwrap();
        assert_ne!(out[0], out[1]);
    }

    #[test]
    fn positions_are_right_aligned() {
        let mut model = tiny();
        let f = feats(8, 6);
        let g = feats(9, 6);
        let last = model.config.n_max - 1;
        let short = model.encode_sequence(&[f.tokens()], None).unwrap();
        let long = model.encode_sequence(&[g.tokens(), f.tokens()], None).unwrap();
        model.params[model.layout.position].row_mut(last).fill(0.0);
        assert_ne!(model.encode_sequence(&[f.tokens()], None).unwrap(), short);
        assert_ne!(model.encode_sequence(&[g.tokens(), f.tokens()], None).unwrap(), long);
    }

    #[test]
    fn shared_weights_affect_both_towers() {
        let mut model = tiny();
        let f = feats(7, 6);
        let item = model.encode_item(f.tokens(), None).unwrap();
        let seq = model.encode_sequence(&[f.tokens()], None).unwrap();
        let w = model.layout.blocks[0].ff_in.weight;
        model.params[w][0] += 0.5;
        assert_ne!(model.encode_item(f.tokens(), None).unwrap(), item);
        assert_ne!(model.encode_sequence(&[f.tokens()], None).unwrap(), seq);
    }

    #[test]
    fn sequence_length_contract() {
        let model = tiny();
        let seq = vec![ItemTokens::MASKED; model.config.n_max + 1];
        assert!(matches!(
            model.encode_sequence(&seq, None),
            Err(EncoderError::Contract(_))
        ));
        let out = model.encode_sequence(&seq[..3], None).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn wrong_feature_width_is_dimension_error() {
        let model = tiny();
        assert!(matches!(model.embed_text(&[1.0; 5]), Err(EncoderError::Dimension(_))));
        assert!(model.embed_visual(&[]).is_err());
    }

    #[test]
    fn embed_text_is_affine_image() {
        let model = tiny();
        let x = feats(8, 6).text.unwrap();
        let ids = model.layout.feature_in[1];
        let w = &model.params[ids.weight];
        let b = model.params[ids.bias.unwrap()].data();
        let got = model.embed_text(&x).unwrap();
        for j in 0..model.config.d {
            let want: f64 = (0..6).map(|i| x[i] * w.data()[i * model.config.d + j]).sum::<f64>() + b[j];
            assert_abs_diff_eq!(got[j], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn train_mode_dropout_changes_output() {
        let model = tiny();
        let f = feats(9, 6);
        let mut r1 = stream(1, &[5]);
        let mut r2 = stream(2, &[5]);
        let a = model.encode_item(f.tokens(), Some(&mut r1)).unwrap();
        let b = model.encode_item(f.tokens(), Some(&mut r2)).unwrap();
        assert_ne!(a, b);
        let mut r1 = stream(1, &[5]);
        assert_eq!(model.encode_item(f.tokens(), Some(&mut r1)).unwrap(), a);
    }

    fn scalar_head(out: &[Vec<f64>], w: &[Vec<f64>]) -> f64 {
        out.iter().zip(w).map(|(o, w)| dot(o, w)).sum()
    }

    #[test]
    fn sequence_gradients_pass_grad_check() {
        let cfg = ModelConfig {
            embed_dropout: 0.0,
            hidden_dropout: 0.0,
            init_std: 0.3,
            ..ModelConfig::tiny(4)
        };
        let mut model = Model::new(cfg, 11).unwrap();
        let f: Vec<ItemFeatures> = (0..3).map(|s| feats(20 + s, 4)).collect();
        let seq = vec![
            f[0].tokens(),
            f[1].tokens().mask(Modality::Text),
            ItemTokens::MASKED,
            f[2].tokens(),
        ];
        let w: Vec<Vec<f64>> = (0..seq.len()).map(|s| feats(40 + s as u64, 8).visual.unwrap()).collect();
        let (out, cache) = model.forward(&seq, true, None).unwrap();
        let mut grads = model.params.grad_buf();
        model.backward(&cache, &w, &mut grads).unwrap();
        model.params.set_grads(grads);
        let _ = scalar_head(&out, &w);
        let report = grad_check(
            &model.params,
            |p| {
                let m = model.with_params(p.clone());
                scalar_head(&m.forward(&seq, true, None).unwrap().0, &w)
            },
            GradCheckOptions {
                eps: 1e-5,
                tolerance: 1e-4,
                ..GradCheckOptions::default()
            },
        );
        assert!(report.passed(), "{:?}", report.failures.first());
    }
}
