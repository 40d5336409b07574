//! Numerically careful building blocks with hand-written backward passes.

use rand::Rng as _;

use super::rng::Rng;
use super::NumericsError;

/// Softmax that subtracts the maximum logit before exponentiating.
pub fn softmax_stable(logits: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if logits.is_empty() {
        return Err(NumericsError::Dimension("softmax of empty vector".into()));
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// `log Σ exp(v)` evaluated stably.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Per-row statistics retained for the layer-norm backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// Normalizes each row of a `rows × cols` buffer to zero mean and unit
/// variance, then applies `gain` and `bias`.
pub fn layer_norm(
    x: &[f64],
    cols: usize,
    gain: &[f64],
    bias: &[f64],
    eps: f64,
) -> (Vec<f64>, LayerNormCache) {
    let rows = x.len() / cols;
    let mut out = vec![0.0; x.len()];
    let mut normalized = vec![0.0; x.len()];
    let mut inv_std = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let istd = 1.0 / (var + eps).sqrt();
        inv_std.push(istd);
        for c in 0..cols {
            let n = (row[c] - mean) * istd;
            normalized[r * cols + c] = n;
            out[r * cols + c] = n * gain[c] + bias[c];
        }
    }
    (out, LayerNormCache { normalized, inv_std })
}

/// Backward of [`layer_norm`]. Accumulates into `dgain`/`dbias` and returns
/// the gradient with respect to the input.
pub fn layer_norm_backward(
    dy: &[f64],
    cols: usize,
    gain: &[f64],
    cache: &LayerNormCache,
    dgain: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let rows = dy.len() / cols;
    let mut dx = vec![0.0; dy.len()];
    let n = cols as f64;
    for r in 0..rows {
        let dyr = &dy[r * cols..(r + 1) * cols];
        let xn = &cache.normalized[r * cols..(r + 1) * cols];
        let mut sum_dn = 0.0;
        let mut sum_dn_xn = 0.0;
        for c in 0..cols {
            dgain[c] += dyr[c] * xn[c];
            dbias[c] += dyr[c];
            let dn = dyr[c] * gain[c];
            sum_dn += dn;
            sum_dn_xn += dn * xn[c];
        }
        let istd = cache.inv_std[r];
        for c in 0..cols {
            let dn = dyr[c] * gain[c];
            dx[r * cols + c] = istd * (dn - sum_dn / n - xn[c] * sum_dn_xn / n);
        }
    }
    dx
}

/// Inverted-dropout scale factors: 0 for dropped units, `1/(1-rate)` otherwise.
///
/// Returns `None` when dropout is inactive (eval mode or `rate == 0`); no
/// random draws are consumed in that case.
pub fn dropout_mask(
    len: usize,
    rate: f64,
    rng: Option<&mut Rng>,
) -> Result<Option<Vec<f64>>, NumericsError> {
    check_rate(rate)?;
    let Some(rng) = rng else { return Ok(None) };
    if rate == 0.0 {
        return Ok(None);
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(Some(
        (0..len)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    ))
}

pub fn check_rate(rate: f64) -> Result<(), NumericsError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NumericsError::Config(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    Ok(())
}

/// Applies dropout in place. `rng = None` means eval mode (identity).
pub fn dropout(
    x: &mut [f64],
    rate: f64,
    rng: Option<&mut Rng>,
) -> Result<Option<Vec<f64>>, NumericsError> {
    let mask = dropout_mask(x.len(), rate, rng)?;
    if let Some(m) = &mask {
        apply_mask(x, m);
    }
    Ok(mask)
}

pub fn apply_mask(x: &mut [f64], mask: &[f64]) {
    for (v, m) in x.iter_mut().zip(mask) {
        *v *= m;
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}
