//! Next-item inference.

use super::FinetuneError;
use crate::encoder::{unit_rows, ItemFeatures, ItemTokens, Model};
use crate::eval::top_k;
use crate::numerics::tensor::{dot, l2_norm};
use crate::parallel::Exec;

/// Unit-length eval-mode embeddings of every catalog item, by ordinal.
#[derive(Debug, Clone)]
pub struct CandidateIndex {
    units: Vec<Vec<f64>>,
}

impl CandidateIndex {
    pub fn build(model: &Model, features: &[ItemFeatures], exec: Exec) -> Result<Self, FinetuneError> {
        Self::from_embeddings(&model.encode_catalog(features, exec)?)
    }

    pub fn from_embeddings(embeddings: &[Vec<f64>]) -> Result<Self, FinetuneError> {
        Ok(Self {
            units: unit_rows(embeddings)?.0,
        })
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// `cos(query, item) / τ` for every item.
    pub fn scores(&self, query: &[f64], tau: f64) -> Result<Vec<f64>, FinetuneError> {
        let n = l2_norm(query);
        if !(n > 0.0 && n.is_finite()) {
            return Err(FinetuneError::Numeric(format!("query vector has norm {n}")));
        }
        Ok(self.units.iter().map(|u| dot(query, u) / n / tau).collect())
    }
}

/// Scores for the item following `history` (catalog ordinals): keeps the last
/// `n_max − 1` items, appends a fully masked position and scores the whole
/// catalog against that position's output.
pub fn score_next(
    model: &Model,
    history: &[usize],
    features: &[ItemFeatures],
    index: &CandidateIndex,
) -> Result<Vec<f64>, FinetuneError> {
    if history.is_empty() {
        return Err(FinetuneError::Input("empty history".into()));
    }
    let keep = model.config.n_max - 1;
    let start = history.len().saturating_sub(keep);
    let mut tokens: Vec<ItemTokens<'_>> = history[start..].iter().map(|&o| features[o].tokens()).collect();
    tokens.push(ItemTokens::MASKED);
    let out = model.encode_sequence(&tokens, None)?;
    index.scores(out.last().expect("non-empty"), model.config.tau)
}

/// Top `k` next items, best first, ties by ascending ordinal. `k` larger than
/// the catalog is clipped.
pub fn predict_next(
    model: &Model,
    history: &[usize],
    features: &[ItemFeatures],
    index: &CandidateIndex,
    k: usize,
) -> Result<Vec<usize>, FinetuneError> {
    if k > index.len() {
        log::warn!("k = {k} exceeds catalog size {}; clipping", index.len());
    }
    let scores = score_next(model, history, features, index)?;
    Ok(top_k(&scores, k))
}
