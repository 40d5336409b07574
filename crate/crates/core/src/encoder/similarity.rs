//! Cosine similarity with temperature.

use super::EncoderError;
use crate::numerics::tensor::{dot, l2_norm};

fn norms(a: &[f64], b: &[f64]) -> Result<(f64, f64), EncoderError> {
    if a.len() != b.len() {
        return Err(EncoderError::Dimension(format!(
            "similarity of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(EncoderError::Numeric("cosine similarity of a zero vector".into()));
    }
    Ok((na, nb))
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EncoderError> {
    let (na, nb) = norms(a, b)?;
    Ok(dot(a, b) / (na * nb))
}

/// `cos(a, b) / τ`.
pub fn similarity(a: &[f64], b: &[f64], tau: f64) -> Result<f64, EncoderError> {
    Ok(cosine(a, b)? / tau)
}

/// Gradients of `g · cos(a, b)` with respect to `a` and `b`.
pub fn cosine_backward(a: &[f64], b: &[f64], g: f64) -> Result<(Vec<f64>, Vec<f64>), EncoderError> {
    let (na, nb) = norms(a, b)?;
    let c = dot(a, b) / (na * nb);
    let inv = 1.0 / (na * nb);
    let da = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| g * (y * inv - c * x / (na * na)))
        .collect();
    let db = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| g * (x * inv - c * y / (nb * nb)))
        .collect();
    Ok((da, db))
}

/// Gradients of `g · similarity(a, b, τ)`.
pub fn similarity_backward(
    a: &[f64],
    b: &[f64],
    tau: f64,
    g: f64,
) -> Result<(Vec<f64>, Vec<f64>), EncoderError> {
    cosine_backward(a, b, g / tau)
}

/// Rows scaled to unit length, with their original norms.
pub fn unit_rows(rows: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<f64>), EncoderError> {
    let mut units = Vec::with_capacity(rows.len());
    let mut norms = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let n = l2_norm(row);
        if !(n > 0.0 && n.is_finite()) {
            return Err(EncoderError::Numeric(format!("row {i} has norm {n}")));
        }
        units.push(row.iter().map(|v| v / n).collect());
        norms.push(n);
    }
    Ok((units, norms))
}

/// Maps gradients with respect to unit rows back to the unnormalized rows.
pub fn unit_rows_backward(grads: Vec<Vec<f64>>, units: &[Vec<f64>], norms: &[f64]) -> Vec<Vec<f64>> {
    grads
        .into_iter()
        .zip(units.iter().zip(norms))
        .map(|(g, (u, &n))| {
            let p = dot(&g, u);
            g.iter().zip(u).map(|(gk, uk)| (gk - uk * p) / n).collect()
        })
        .collect()
}
