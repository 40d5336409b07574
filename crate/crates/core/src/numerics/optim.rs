//! AdamW with decoupled weight decay, and the exponential learning-rate decay.

use super::{NumericsError, ParamSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moments for every parameter plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub step: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(params: &ParamSet, config: AdamWConfig) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            config,
            step: 0,
            first_moment: zeros(),
            second_moment: zeros(),
        }
    }
}

/// One AdamW update using the gradients stored on `params`.
///
/// All gradients are validated before any value changes, so a failed step
/// leaves both parameters and state untouched.
pub fn adamw_step(
    params: &mut ParamSet,
    state: &mut OptimizerState,
    lr: f64,
) -> Result<(), NumericsError> {
    if state.first_moment.len() != params.len() {
        return Err(NumericsError::Dimension(format!(
            "optimizer state holds {} tensors, model has {}",
            state.first_moment.len(),
            params.len()
        )));
    }
    for (p, m) in params.iter().zip(&state.first_moment) {
        if p.grad.shape() != m.shape() {
            return Err(NumericsError::Dimension(format!(
                "moment shape mismatch for `{}`",
                p.name
            )));
        }
        if !p.grad.is_finite() {
            return Err(NumericsError::NonFinite(p.name.clone()));
        }
    }

    state.step += 1;
    let AdamWConfig {
        beta1,
        beta2,
        eps,
        weight_decay,
    } = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);

    for ((p, m), v) in params
        .iter_mut()
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        let grad = p.grad.data();
        let (m, v) = (m.data_mut(), v.data_mut());
        for (i, theta) in p.value.data_mut().iter_mut().enumerate() {
            let g = grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *theta -= lr * weight_decay * *theta;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// `base_lr × decay^epoch`.
pub fn lr_schedule(base_lr: f64, decay: f64, epoch: u32) -> f64 {
    base_lr * decay.powi(epoch as i32)
}

/// Decay rate applied per epoch when none is configured.
pub const DEFAULT_LR_DECAY: f64 = 0.9;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_set(theta: f64, grad: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        let id = ps.register("theta", Tensor::vector(vec![theta])).unwrap();
        ps.param_mut(id).grad = Tensor::vector(vec![grad]);
        ps
    }

    #[test]
    fn decay_only_closed_form() {
        for (b1, b2) in [(0.9, 0.999), (0.5, 0.6), (0.0, 0.0)] {
            let mut ps = scalar_set(1.0, 0.0);
            let cfg = AdamWConfig {
                beta1: b1,
                beta2: b2,
                eps: 1e-8,
                weight_decay: 0.01,
            };
            let mut st = OptimizerState::new(&ps, cfg);
            adamw_step(&mut ps, &mut st, 0.1).unwrap();
            assert_relative_eq!(ps.iter().next().unwrap().value[0], 0.999, epsilon = 1e-15);
            assert_eq!(st.step, 1);
        }
    }

    #[test]
    fn first_step_unit_gradient() {
        let mut ps = scalar_set(0.5, 1.0);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut st = OptimizerState::new(&ps, cfg);
        adamw_step(&mut ps, &mut st, 0.1).unwrap();
        let expected = 0.5 - 0.1 * (1.0 / (1.0 + 1e-8));
        assert_relative_eq!(ps.iter().next().unwrap().value[0], expected, epsilon = 1e-15);
    }

    /// Independent scalar recurrence used as the oracle for multi-step runs.
    fn reference_adamw(theta0: f64, grads: &[f64], lr: f64, c: AdamWConfig) -> f64 {
        let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
        for (k, &g) in grads.iter().enumerate() {
            let t = (k + 1) as i32;
            m = c.beta1 * m + (1.0 - c.beta1) * g;
            v = c.beta2 * v + (1.0 - c.beta2) * g * g;
            let mh = m / (1.0 - c.beta1.powi(t));
            let vh = v / (1.0 - c.beta2.powi(t));
            theta -= lr * c.weight_decay * theta;
            theta -= lr * mh / (vh.sqrt() + c.eps);
        }
        theta
    }

    #[test]
    fn two_steps_match_reference_recurrence() {
        let cfg = AdamWConfig::default();
        let mut ps = scalar_set(0.3, 0.7);
        let mut st = OptimizerState::new(&ps, cfg);
        adamw_step(&mut ps, &mut st, 0.01).unwrap();
        ps.iter_mut().next().unwrap().grad = Tensor::vector(vec![-0.2]);
        adamw_step(&mut ps, &mut st, 0.01).unwrap();
        let got = ps.iter().next().unwrap().value[0];
        assert_eq!(got.to_bits(), reference_adamw(0.3, &[0.7, -0.2], 0.01, cfg).to_bits());
        assert_eq!(st.step, 2);
    }

    #[test]
    fn zero_grad_zero_decay_is_noop() {
        let mut ps = scalar_set(-4.25, 0.0);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut st = OptimizerState::new(&ps, cfg);
        for _ in 0..5 {
            adamw_step(&mut ps, &mut st, 1.0).unwrap();
        }
        assert_eq!(ps.iter().next().unwrap().value[0], -4.25);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut ps = scalar_set(1.0, f64::NAN);
        let mut st = OptimizerState::new(&ps, AdamWConfig::default());
        match adamw_step(&mut ps, &mut st, 0.1) {
            Err(NumericsError::NonFinite(name)) => assert_eq!(name, "theta"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(st.step, 0);
    }

    #[test]
    fn schedule_values() {
        assert_eq!(lr_schedule(5e-5, 0.9, 0), 5e-5);
        assert_relative_eq!(lr_schedule(5e-5, 0.9, 2), 4.05e-5, max_relative = 1e-12);
        assert_relative_eq!(lr_schedule(1e-3, 0.9, 1), 9e-4, max_relative = 1e-12);
    }
}
