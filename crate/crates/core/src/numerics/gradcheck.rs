//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;

use super::rng::{purpose, stream};
use super::ParamSet;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub tolerance: f64,
    /// Check at most this many coordinates, sampled without replacement.
    /// `None` checks every coordinate.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            tolerance: 1e-4,
            max_coords: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<CoordCheck>,
    pub failures: Vec<CoordCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares each parameter's stored `grad` against
/// `(f(θ+ε) − f(θ−ε)) / 2ε`.
///
/// `loss` must be deterministic in its argument.
pub fn grad_check<F>(params: &ParamSet, mut loss: F, opts: GradCheckOptions) -> GradCheckReport
where
    F: FnMut(&ParamSet) -> f64,
{
    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(p, param)| (0..param.value.len()).map(move |i| (p, i)))
        .collect();
    let selected: Vec<(usize, usize)> = match opts.max_coords {
        Some(n) if n < coords.len() => {
            let mut rng = stream(opts.seed, &[purpose::GRADCHECK]);
            let mut idx = sample(&mut rng, coords.len(), n).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| coords[i]).collect()
        }
        _ => coords,
    };

    let mut work = params.clone();
    let ids: Vec<_> = (0..params.len()).map(super::ParamId).collect();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
        failures: Vec::new(),
    };
    for (p, i) in selected {
        let id = ids[p];
        let orig = work[id][i];
        work[id][i] = orig + opts.eps;
        let plus = loss(&work);
        work[id][i] = orig - opts.eps;
        let minus = loss(&work);
        work[id][i] = orig;

        let numeric = (plus - minus) / (2.0 * opts.eps);
        let param = params.param(id);
        let analytic = param.grad[i];
        let rel = relative_error(analytic, numeric);
        let check = CoordCheck {
            param: param.name.clone(),
            index: i,
            analytic,
            numeric,
            rel_error: rel,
        };
        report.checked += 1;
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst = Some(check.clone());
        }
        if !(rel < opts.tolerance) {
            report.failures.push(check);
        }
    }
    report
}
