//! The six per-item forward passes of a pretraining batch.

use super::{PretrainError, ViewBatch};
use crate::encoder::{ForwardCache, ItemFeatures, ItemTokens, Model, Modality};
use crate::numerics::{GradBuf, Rng};
use crate::parallel::{self, Exec};

/// A modality combination, optionally re-encoded under fresh dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum View {
    Visual,
    Text,
    Both,
    VisualAug,
    TextAug,
    BothAug,
}

impl View {
    pub const ALL: [View; 6] = [
        View::Visual,
        View::Text,
        View::Both,
        View::VisualAug,
        View::TextAug,
        View::BothAug,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Token states for this view; the hidden modality is fed the mask embedding.
    pub fn tokens(self, f: &ItemFeatures) -> ItemTokens<'_> {
        let all = f.tokens();
        match self {
            View::Visual | View::VisualAug => all.mask(Modality::Text),
            View::Text | View::TextAug => all.mask(Modality::Visual),
            View::Both | View::BothAug => all,
        }
    }
}

/// Forward results of [`make_views`], kept for the backward pass.
#[derive(Debug)]
pub struct ViewPasses<'a> {
    pub batch: ViewBatch,
    caches: Vec<Vec<ForwardCache<'a>>>,
}

/// Encodes every item under all six views.
///
/// `rngs(i, view)` supplies the dropout stream for item `i` of the batch;
/// `None` runs that pass in eval mode.
pub fn make_views<'a, F>(
    model: &Model,
    items: &[&'a ItemFeatures],
    rngs: F,
    exec: Exec,
) -> Result<ViewPasses<'a>, PretrainError>
where
    F: Fn(usize, View) -> Option<Rng> + Sync + Send,
{
    if let Some(i) = items.iter().position(|f| f.visual.is_none() || f.text.is_none()) {
        return Err(PretrainError::Contract(format!(
            "batch item {i} lacks a modality"
        )));
    }
    let per_item = parallel::try_map(exec, items, |i, f| {
        let mut outs = Vec::with_capacity(6);
        let mut caches = Vec::with_capacity(6);
        for view in View::ALL {
            let mut rng = rngs(i, view);
            let (mut out, cache) = model.forward(&[view.tokens(f)], false, rng.as_mut())?;
            outs.push(out.pop().expect("one item"));
            caches.push(cache);
        }
        Ok::<_, PretrainError>((outs, caches))
    })?;

    let mut batch = ViewBatch::default();
    let mut caches = Vec::with_capacity(items.len());
    for (outs, c) in per_item {
        for (dst, out) in batch.views_mut().into_iter().zip(outs) {
            dst.push(out);
        }
        caches.push(c);
    }
    Ok(ViewPasses { batch, caches })
}

impl ViewPasses<'_> {
    /// Parameter gradients given the gradient of a scalar loss with respect
    /// to every view vector.
    pub fn backward(&self, model: &Model, grad: &ViewBatch, exec: Exec) -> Result<GradBuf, PretrainError> {
        let gviews = grad.views();
        let reduced = parallel::chunked_reduce(
            exec,
            self.caches.len(),
            || Ok(model.params.grad_buf()),
            |acc: &mut Result<GradBuf, PretrainError>, i| {
                let Ok(buf) = acc else { return };
                for (v, cache) in self.caches[i].iter().enumerate() {
                    let g = std::slice::from_ref(&gviews[v][i]);
                    if let Err(e) = model.backward(cache, g, buf) {
                        *acc = Err(e.into());
                        return;
                    }
                }
            },
            |a, b| match (a.as_mut(), b) {
                (Ok(a), Ok(b)) => a.merge(&b),
                (Ok(_), Err(e)) => *a = Err(e),
                (Err(_), _) => {}
            },
        );
        reduced.unwrap_or_else(|| Ok(model.params.grad_buf()))
    }
}
