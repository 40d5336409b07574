//! Masked item prediction objective.

use std::collections::HashMap;

use super::{FinetuneError, MaskedSequence, SlotInput};
use crate::encoder::{unit_rows, unit_rows_backward, ForwardCache, ItemFeatures, ItemTokens, Model};
use crate::numerics::log_sum_exp;
use crate::numerics::ops::softmax_in_place;
use crate::numerics::tensor::dot;
use crate::numerics::{GradBuf, Rng};
use crate::parallel::{self, Exec};

/// Mean cross-entropy of each query's target key under `cos/τ` logits over
/// all keys.
pub fn retrieval_ce(
    queries: &[Vec<f64>],
    keys: &[Vec<f64>],
    targets: &[usize],
    tau: f64,
) -> Result<f64, FinetuneError> {
    Ok(retrieval_ce_impl(queries, keys, targets, tau, false)?.0)
}

/// [`retrieval_ce`] with gradients for the queries and the keys.
pub fn retrieval_ce_grad(
    queries: &[Vec<f64>],
    keys: &[Vec<f64>],
    targets: &[usize],
    tau: f64,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>), FinetuneError> {
    retrieval_ce_impl(queries, keys, targets, tau, true)
}

fn retrieval_ce_impl(
    queries: &[Vec<f64>],
    keys: &[Vec<f64>],
    targets: &[usize],
    tau: f64,
    with_grad: bool,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>), FinetuneError> {
    if queries.is_empty() || keys.is_empty() {
        return Err(FinetuneError::Input("no queries or no candidates".into()));
    }
    if queries.len() != targets.len() {
        return Err(FinetuneError::Input("one target per query required".into()));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= keys.len()) {
        return Err(FinetuneError::Contract(format!("target {t} outside the candidate set")));
    }
    let d = keys[0].len();
    let (qu, qn) = unit_rows(queries)?;
    let (ku, kn) = unit_rows(keys)?;
    let inv_n = 1.0 / queries.len() as f64;

    let mut loss = 0.0;
    let mut dqu = vec![vec![0.0; d]; queries.len()];
    let mut dku = vec![vec![0.0; d]; keys.len()];
    for (s, q) in qu.iter().enumerate() {
        let mut logits: Vec<f64> = ku.iter().map(|k| dot(q, k) / tau).collect();
        loss += log_sum_exp(&logits) - logits[targets[s]];
        if !with_grad {
            continue;
        }
        softmax_in_place(&mut logits);
        logits[targets[s]] -= 1.0;
        for (c, g) in logits.iter().enumerate() {
            let g = g * inv_n / tau;
            for k in 0..d {
                dqu[s][k] += g * ku[c][k];
                dku[c][k] += g * q[k];
            }
        }
    }
    loss *= inv_n;
    if !with_grad {
        return Ok((loss, Vec::new(), Vec::new()));
    }
    Ok((
        loss,
        unit_rows_backward(dqu, &qu, &qn),
        unit_rows_backward(dku, &ku, &kn),
    ))
}

fn sequence_tokens<'a>(seq: &MaskedSequence, features: &'a [ItemFeatures]) -> Vec<ItemTokens<'a>> {
    seq.inputs
        .iter()
        .map(|s| match *s {
            SlotInput::Item(o) => features[o].tokens(),
            SlotInput::Masked => ItemTokens::MASKED,
        })
        .collect()
}

/// Sorted unique targets of a batch, for in-batch candidate sets.
pub fn batch_targets(batch: &[MaskedSequence]) -> Vec<usize> {
    let mut t: Vec<usize> = batch.iter().flat_map(|s| s.slots.iter().map(|&(_, o)| o)).collect();
    t.sort_unstable();
    t.dedup();
    t
}

/// Masked item prediction loss of `batch` against the `candidates`
/// (catalog ordinals), optionally with parameter gradients.
///
/// `rngs(i)` supplies the dropout stream of sequence `i`; `None` is eval mode.
/// Candidates are always encoded in eval mode; gradients flow through them.
pub fn mip_objective<F>(
    model: &Model,
    batch: &[MaskedSequence],
    features: &[ItemFeatures],
    candidates: &[usize],
    rngs: F,
    exec: Exec,
    with_grad: bool,
) -> Result<(f64, Option<GradBuf>), FinetuneError>
where
    F: Fn(usize) -> Option<Rng> + Sync + Send,
{
    if batch.is_empty() {
        return Err(FinetuneError::Input("empty batch".into()));
    }
    let position: HashMap<usize, usize> = candidates.iter().enumerate().map(|(i, &o)| (o, i)).collect();
    let mut targets = Vec::new();
    for seq in batch {
        for &(_, o) in &seq.slots {
            let c = position.get(&o).ok_or_else(|| {
                FinetuneError::Contract(format!("target item {o} missing from the candidate set"))
            })?;
            targets.push(*c);
        }
    }

    let seq_passes = parallel::try_map(exec, batch, |i, seq| {
        let tokens = sequence_tokens(seq, features);
        let mut rng = rngs(i);
        model.forward(&tokens, true, rng.as_mut())
    })?;
    let cand_passes = parallel::try_map(exec, candidates, |_, &o| {
        model.forward(&[features[o].tokens()], false, None)
    })?;

    let queries: Vec<Vec<f64>> = batch
        .iter()
        .zip(&seq_passes)
        .flat_map(|(seq, (out, _))| seq.slots.iter().map(move |&(p, _)| out[p].clone()))
        .collect();
    let keys: Vec<Vec<f64>> = cand_passes.iter().map(|(out, _)| out[0].clone()).collect();
    if !with_grad {
        return Ok((retrieval_ce(&queries, &keys, &targets, model.config.tau)?, None));
    }
    let (loss, dq, dk) = retrieval_ce_grad(&queries, &keys, &targets, model.config.tau)?;

    let mut seq_grads: Vec<Vec<Vec<f64>>> = Vec::with_capacity(batch.len());
    let mut next = dq.into_iter();
    for seq in batch {
        let mut g = vec![vec![0.0; model.config.d]; seq.inputs.len()];
        for &(p, _) in &seq.slots {
            let dqs = next.next().expect("one gradient per slot");
            g[p].iter_mut().zip(&dqs).for_each(|(a, b)| *a += b);
        }
        seq_grads.push(g);
    }

    let units: Vec<(&ForwardCache<'_>, &[Vec<f64>])> = seq_passes
        .iter()
        .zip(&seq_grads)
        .map(|((_, c), g)| (c, g.as_slice()))
        .chain(
            cand_passes
                .iter()
                .zip(&dk)
                .map(|((_, c), g)| (c, std::slice::from_ref(g))),
        )
        .collect();
    let grads = parallel::chunked_reduce(
        exec,
        units.len(),
        || Ok(model.params.grad_buf()),
        |acc: &mut Result<GradBuf, FinetuneError>, i| {
            let Ok(buf) = acc else { return };
            if let Err(e) = model.backward(units[i].0, units[i].1, buf) {
                *acc = Err(e.into());
            }
        },
        |a, b| match (a.as_mut(), b) {
            (Ok(a), Ok(b)) => a.merge(&b),
            (Ok(_), Err(e)) => *a = Err(e),
            (Err(_), _) => {}
        },
    )
    .expect("non-empty batch")?;
    Ok((loss, Some(grads)))
}

/// [`mip_objective`] without gradients.
pub fn mip_loss<F>(
    model: &Model,
    batch: &[MaskedSequence],
    features: &[ItemFeatures],
    candidates: &[usize],
    rngs: F,
    exec: Exec,
) -> Result<f64, FinetuneError>
where
    F: Fn(usize) -> Option<Rng> + Sync + Send,
{
    Ok(mip_objective(model, batch, features, candidates, rngs, exec, false)?.0)
}
