//! Symmetric in-batch NCE and the four-term composite objective.

use super::PretrainError;
use crate::encoder::{unit_rows, unit_rows_backward};
use crate::numerics::log_sum_exp;
use crate::numerics::ops::softmax_in_place;
use crate::numerics::tensor::dot;

/// Weights of the four contrastive terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub vv: f64,
    pub tt: f64,
    pub vt: f64,
    pub vtvt: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            vv: 0.25,
            tt: 0.25,
            vt: 0.25,
            vtvt: 0.25,
        }
    }
}

impl LossWeights {
    pub fn as_array(&self) -> [f64; 4] {
        [self.vv, self.tt, self.vt, self.vtvt]
    }

    pub fn validate(&self) -> Result<(), PretrainError> {
        let w = self.as_array();
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(PretrainError::Config("loss weights must be finite and non-negative".into()));
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(PretrainError::Config("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

/// Pooled representations of a batch under the six views.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ViewBatch {
    pub v: Vec<Vec<f64>>,
    pub t: Vec<Vec<f64>>,
    pub vt: Vec<Vec<f64>>,
    pub v_aug: Vec<Vec<f64>>,
    pub t_aug: Vec<Vec<f64>>,
    pub vt_aug: Vec<Vec<f64>>,
}

impl ViewBatch {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// The six views in [`super::View::ALL`] order.
    pub fn views(&self) -> [&Vec<Vec<f64>>; 6] {
        [&self.v, &self.t, &self.vt, &self.v_aug, &self.t_aug, &self.vt_aug]
    }

    pub fn views_mut(&mut self) -> [&mut Vec<Vec<f64>>; 6] {
        [
            &mut self.v,
            &mut self.t,
            &mut self.vt,
            &mut self.v_aug,
            &mut self.t_aug,
            &mut self.vt_aug,
        ]
    }

    /// All-zero batch shaped like `self`.
    pub fn zeros_like(&self) -> Self {
        let z = |x: &Vec<Vec<f64>>| x.iter().map(|r| vec![0.0; r.len()]).collect();
        Self {
            v: z(&self.v),
            t: z(&self.t),
            vt: z(&self.vt),
            v_aug: z(&self.v_aug),
            t_aug: z(&self.t_aug),
            vt_aug: z(&self.vt_aug),
        }
    }
}

fn check_shapes(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<(), PretrainError> {
    if x.is_empty() {
        return Err(PretrainError::Input("empty batch".into()));
    }
    if x.len() != y.len() {
        return Err(PretrainError::Input(format!("batch sizes {} and {} differ", x.len(), y.len())));
    }
    let d = x[0].len();
    if x.iter().chain(y).any(|r| r.len() != d) {
        return Err(PretrainError::Input("rows of unequal width".into()));
    }
    Ok(())
}

/// `ℓ(X, Y)`: mean row-wise cross-entropy of the matched pair under
/// `cos/τ` logits, plus the same with `X` and `Y` exchanged.
pub fn nce_loss(x: &[Vec<f64>], y: &[Vec<f64>], tau: f64) -> Result<f64, PretrainError> {
    check_shapes(x, y)?;
    let (xu, _) = unit_rows(x)?;
    let (yu, _) = unit_rows(y)?;
    let logits = logit_matrix(&xu, &yu, tau);
    Ok(directional(&logits, false) + directional(&logits, true))
}

fn logit_matrix(xu: &[Vec<f64>], yu: &[Vec<f64>], tau: f64) -> Vec<Vec<f64>> {
    xu.iter()
        .map(|a| yu.iter().map(|b| dot(a, b) / tau).collect())
        .collect()
}

/// Mean over anchors of `LSE(logits) − positive`; `by_column` picks `Y → X`.
#[allow(clippy::needless_range_loop)]
fn directional(s: &[Vec<f64>], by_column: bool) -> f64 {
    let b = s.len();
    let mut total = 0.0;
    for i in 0..b {
        let line: Vec<f64> = if by_column {
            (0..b).map(|r| s[r][i]).collect()
        } else {
            s[i].clone()
        };
        total += log_sum_exp(&line) - s[i][i];
    }
    total / b as f64
}

/// [`nce_loss`] together with its gradients with respect to `X` and `Y`.
pub fn nce_loss_grad(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    tau: f64,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>), PretrainError> {
    check_shapes(x, y)?;
    let b = x.len();
    let d = x[0].len();
    let (xu, xn) = unit_rows(x)?;
    let (yu, yn) = unit_rows(y)?;
    let s = logit_matrix(&xu, &yu, tau);
    let loss = directional(&s, false) + directional(&s, true);

    // dL/dS = (P − I)/B + (Q − I)/B with P row-softmax, Q column-softmax.
    let inv_b = 1.0 / b as f64;
    let mut ds = s.clone();
    for row in ds.iter_mut() {
        softmax_in_place(row);
    }
    for j in 0..b {
        let mut col: Vec<f64> = (0..b).map(|i| s[i][j]).collect();
        softmax_in_place(&mut col);
        for i in 0..b {
            ds[i][j] += col[i];
        }
    }
    for (i, row) in ds.iter_mut().enumerate() {
        row[i] -= 2.0;
        row.iter_mut().for_each(|g| *g *= inv_b / tau);
    }

    let mut dxu = vec![vec![0.0; d]; b];
    let mut dyu = vec![vec![0.0; d]; b];
    for i in 0..b {
        for j in 0..b {
            let g = ds[i][j];
            for k in 0..d {
                dxu[i][k] += g * yu[j][k];
                dyu[j][k] += g * xu[i][k];
            }
        }
    }
    Ok((
        loss,
        unit_rows_backward(dxu, &xu, &xn),
        unit_rows_backward(dyu, &yu, &yn),
    ))
}

/// The four weighted NCE terms, in `vv, tt, vt, vtvt` order.
pub fn composite_terms(batch: &ViewBatch, tau: f64) -> Result<[f64; 4], PretrainError> {
    Ok([
        nce_loss(&batch.v, &batch.v_aug, tau)?,
        nce_loss(&batch.t, &batch.t_aug, tau)?,
        nce_loss(&batch.v, &batch.t, tau)?,
        nce_loss(&batch.vt, &batch.vt_aug, tau)?,
    ])
}

pub fn composite_loss(batch: &ViewBatch, weights: &LossWeights, tau: f64) -> Result<f64, PretrainError> {
    let terms = composite_terms(batch, tau)?;
    Ok(weights
        .as_array()
        .iter()
        .zip(terms)
        .map(|(w, l)| w * l)
        .sum())
}

/// [`composite_loss`] with its gradient for every view vector. Terms with
/// zero weight are skipped entirely.
pub fn composite_loss_grad(
    batch: &ViewBatch,
    weights: &LossWeights,
    tau: f64,
) -> Result<(f64, ViewBatch), PretrainError> {
    let mut grad = batch.zeros_like();
    let mut total = 0.0;
    // (weight, x view, y view) as indices into `views()`.
    let pairs = [
        (weights.vv, 0, 3),
        (weights.tt, 1, 4),
        (weights.vt, 0, 1),
        (weights.vtvt, 2, 5),
    ];
    let views = batch.views();
    for (w, xi, yi) in pairs {
        if w == 0.0 {
            continue;
        }
        let (l, gx, gy) = nce_loss_grad(views[xi], views[yi], tau)?;
        total += w * l;
        let gviews = grad.views_mut();
        for (dst, src) in gviews[xi].iter_mut().zip(&gx) {
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += w * b);
        }
        for (dst, src) in gviews[yi].iter_mut().zip(&gy) {
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += w * b);
        }
    }
    Ok((total, grad))
}
