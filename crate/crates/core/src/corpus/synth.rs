//! Seeded synthetic corpora.
//!
//! Every item owns a latent vector `z`. Its visual frames are `A·z + noise`
//! and its text vector is `B·z + noise`, for two fixed random projections
//! `A` and `B`. User sequences walk a first-order transition table over items,
//! starting from a seeded permutation of the catalog taken round-robin.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{Catalog, CorpusError, Event, InteractionLog, ItemRecord};
use crate::numerics::rng::{purpose, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_items: usize,
    pub n_users: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub latent_dim: usize,
    pub d_raw: usize,
    pub noise: f64,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Successors per item. `1` gives a deterministic single-cycle successor
    /// map; `0` draws every next item uniformly from the catalog.
    pub successors: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_items: 20,
            n_users: 64,
            min_len: 12,
            max_len: 12,
            latent_dim: 8,
            d_raw: 32,
            noise: 0.05,
            min_frames: 1,
            max_frames: 4,
            successors: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |m: &str| Err(CorpusError::Config(m.to_string()));
        if self.n_items == 0 {
            return fail("n_items must be positive");
        }
        if self.n_users == 0 {
            return fail("n_users must be positive");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return fail("need 1 <= min_len <= max_len");
        }
        if self.latent_dim == 0 || self.d_raw == 0 {
            return fail("latent_dim and d_raw must be positive");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return fail("noise must be a finite non-negative number");
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            return fail("need 1 <= min_frames <= max_frames");
        }
        if self.successors > self.n_items {
            return fail("successors cannot exceed n_items");
        }
        Ok(())
    }

    /// Applies `key = value` overrides.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), CorpusError> {
        let int = || {
            value
                .parse::<usize>()
                .map_err(|_| CorpusError::Config(format!("`{key}` expects an integer, got `{value}`")))
        };
        match key {
            "n_items" => self.n_items = int()?,
            "n_users" => self.n_users = int()?,
            "min_len" => self.min_len = int()?,
            "max_len" => self.max_len = int()?,
            "len" => {
                self.min_len = int()?;
                self.max_len = self.min_len;
            }
            "latent_dim" => self.latent_dim = int()?,
            "d_raw" => self.d_raw = int()?,
            "min_frames" => self.min_frames = int()?,
            "max_frames" => self.max_frames = int()?,
            "successors" => self.successors = int()?,
            "noise" => {
                self.noise = value
                    .parse()
                    .map_err(|_| CorpusError::Config(format!("`noise` expects a number, got `{value}`")))?
            }
            _ => return Err(CorpusError::Config(format!("unknown synth key `{key}`"))),
        }
        Ok(())
    }
}

/// The generator's ground truth, useful for oracles in tests.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    pub latents: Vec<Vec<f64>>,
    pub transitions: Vec<Vec<usize>>,
}

pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<(Catalog, InteractionLog), CorpusError> {
    generate_with_truth(spec, seed).map(|(c, l, _)| (c, l))
}

pub fn generate_with_truth(
    spec: &SynthSpec,
    seed: u64,
) -> Result<(Catalog, InteractionLog, SynthTruth), CorpusError> {
    spec.validate()?;
    let normal = |rng: &mut crate::numerics::Rng| -> f64 { StandardNormal.sample(rng) };

    let mut rng = stream(seed, &[purpose::SYNTH, 0]);
    let scale = 1.0 / (spec.latent_dim as f64).sqrt();
    let mut projection = || -> Vec<Vec<f64>> {
        (0..spec.d_raw)
            .map(|_| (0..spec.latent_dim).map(|_| normal(&mut rng) * scale).collect())
            .collect()
    };
    let visual_proj = projection();
    let text_proj = projection();
    let apply = |m: &[Vec<f64>], z: &[f64]| -> Vec<f64> {
        m.iter()
            .map(|row| row.iter().zip(z).map(|(a, b)| a * b).sum())
            .collect()
    };

    let mut rng = stream(seed, &[purpose::SYNTH, 1]);
    let mut latents = Vec::with_capacity(spec.n_items);
    let mut items = Vec::with_capacity(spec.n_items);
    for i in 0..spec.n_items {
        let z: Vec<f64> = (0..spec.latent_dim).map(|_| normal(&mut rng)).collect();
        let v = apply(&visual_proj, &z);
        let t = apply(&text_proj, &z);
        let n_frames = rng.random_range(spec.min_frames..=spec.max_frames);
        let mut noisy = |base: &[f64]| -> Vec<f32> {
            base.iter()
                .map(|x| (x + spec.noise * normal(&mut rng)) as f32)
                .collect()
        };
        let frames = (0..n_frames).map(|_| noisy(&v)).collect();
        let text = noisy(&t);
        items.push(ItemRecord {
            item_id: format!("i{i:05}"),
            visual: Some(frames),
            text: Some(text),
        });
        latents.push(z);
    }
    let catalog = Catalog::new(spec.d_raw, items)?;

    let mut rng = stream(seed, &[purpose::SYNTH, 2]);
    let transitions: Vec<Vec<usize>> = match spec.successors {
        0 => Vec::new(),
        1 => {
            let mut order: Vec<usize> = (0..spec.n_items).collect();
            order.shuffle(&mut rng);
            let mut next = vec![Vec::new(); spec.n_items];
            for j in 0..spec.n_items {
                next[order[j]] = vec![order[(j + 1) % spec.n_items]];
            }
            next
        }
        k => (0..spec.n_items)
            .map(|_| rand::seq::index::sample(&mut rng, spec.n_items, k).into_vec())
            .collect(),
    };

    let mut rng = stream(seed, &[purpose::SYNTH, 3]);
    let mut starts: Vec<usize> = (0..spec.n_items).collect();
    starts.shuffle(&mut rng);
    let mut events = Vec::new();
    for u in 0..spec.n_users {
        let len = rng.random_range(spec.min_len..=spec.max_len);
        let mut cur = starts[u % spec.n_items];
        let user = format!("u{u:05}");
        for t in 0..len {
            events.push(Event::new(&user, &catalog.get(cur).item_id, t as u64));
            cur = if transitions.is_empty() {
                rng.random_range(0..spec.n_items)
            } else {
                let succ = &transitions[cur];
                succ[rng.random_range(0..succ.len())]
            };
        }
    }

    Ok((
        catalog,
        InteractionLog::new(events),
        SynthTruth {
            latents,
            transitions,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_sequences;

    #[test]
    fn same_seed_bit_identical() {
        let spec = SynthSpec::default();
        let (c1, l1) = generate_synthetic(&spec, 7).unwrap();
        let (c2, l2) = generate_synthetic(&spec, 7).unwrap();
        assert_eq!(c1.to_bytes(), c2.to_bytes());
        assert_eq!(l1, l2);
        let (c3, _) = generate_synthetic(&spec, 8).unwrap();
        assert_ne!(c1.to_bytes(), c3.to_bytes());
    }

    #[test]
    fn zero_noise_is_exact_linear_image() {
        let spec = SynthSpec {
            noise: 0.0,
            max_frames: 3,
            ..SynthSpec::default()
        };
        let (cat, _) = generate_synthetic(&spec, 1).unwrap();
        for item in cat.items() {
            let frames = item.visual.as_ref().unwrap();
            // Noise-free frames are identical copies of A·z.
            assert!(frames.iter().all(|f| f == &frames[0]));
        }
        let spec = SynthSpec {
            noise: 0.1,
            min_frames: 3,
            ..spec
        };
        let (cat, _) = generate_synthetic(&spec, 1).unwrap();
        let frames = cat.get(0).visual.as_ref().unwrap();
        assert_eq!(frames.len(), 3);
        assert_ne!(frames[0], frames[1]);
    }

    #[test]
    fn counts_follow_spec() {
        let spec = SynthSpec {
            n_users: 64,
            min_len: 12,
            max_len: 12,
            ..SynthSpec::default()
        };
        let (_, log) = generate_synthetic(&spec, 3).unwrap();
        let seqs = build_sequences(&log);
        assert_eq!(seqs.len(), 64);
        assert!(seqs.values().all(|s| s.len() == 12));
    }

    #[test]
    fn deterministic_successor_walks() {
        let (cat, log, truth) = generate_with_truth(&SynthSpec::default(), 5).unwrap();
        for seq in build_sequences(&log).values() {
            for w in seq.windows(2) {
                let a = cat.ordinal(&w[0]).unwrap();
                let b = cat.ordinal(&w[1]).unwrap();
                assert_eq!(truth.transitions[a], vec![b]);
            }
        }
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            SynthSpec { n_items: 0, ..SynthSpec::default() },
            SynthSpec { min_len: 5, max_len: 4, ..SynthSpec::default() },
            SynthSpec { noise: -1.0, ..SynthSpec::default() },
            SynthSpec { successors: 21, ..SynthSpec::default() },
        ];
        for spec in bad {
            assert!(matches!(generate_synthetic(&spec, 0), Err(CorpusError::Config(_))));
        }
    }
}
