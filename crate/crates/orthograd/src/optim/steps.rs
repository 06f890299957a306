//! Per-parameter optimiser step kernels. The momentum form is
//! `v ← γ·v + η·ĝ; θ ← θ − v` with the learning rate inside the velocity,
//! and the effective gradient is `ĝ = g + λ·θ` unless decay was already
//! folded in upstream.

use super::{HyperParams, OptimError};
use crate::nn::Tensor;
use crate::scalar::Real;

/// SGDM / LARS velocity state.
#[derive(Debug, Clone)]
pub struct SgdmState<T> {
    pub velocity: Tensor<T>,
}

impl<T: Real> SgdmState<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            velocity: Tensor::zeros(shape),
        }
    }
}

/// Adam first/second moments and step count.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            t: 0,
        }
    }
}

fn check_finite<T: Real>(theta: &[T], name: &str) -> Result<(), OptimError> {
    if theta.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(OptimError::NonFiniteUpdate { param: name.into() })
    }
}

/// `v ← γ·v + η·(g + λ·θ); θ ← θ − v`.
pub fn sgdm_step<T: Real>(
    theta: &mut [T],
    grad: &[T],
    state: &mut SgdmState<T>,
    hp: &HyperParams,
    weight_decay: f64,
    name: &str,
) -> Result<(), OptimError> {
    sgdm_step_scaled(theta, grad, state, hp.lr, hp.momentum, weight_decay, name)
}

fn sgdm_step_scaled<T: Real>(
    theta: &mut [T],
    grad: &[T],
    state: &mut SgdmState<T>,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    name: &str,
) -> Result<(), OptimError> {
    debug_assert_eq!(theta.len(), grad.len());
    let v = state.velocity.data_mut();
    debug_assert_eq!(theta.len(), v.len());
    let eta = T::from_f64(lr);
    let gamma = T::from_f64(momentum);
    let lambda = T::from_f64(weight_decay);
    if weight_decay == 0.0 {
        for i in 0..theta.len() {
            v[i] = gamma * v[i] + eta * grad[i];
            theta[i] -= v[i];
        }
    } else {
        for i in 0..theta.len() {
            v[i] = gamma * v[i] + eta * (grad[i] + lambda * theta[i]);
            theta[i] -= v[i];
        }
    }
    check_finite(theta, name)
}

/// Bias-corrected Adam with coupled weight decay (decay added to the
/// gradient before the moment updates).
pub fn adam_step<T: Real>(
    theta: &mut [T],
    grad: &[T],
    state: &mut AdamState<T>,
    hp: &HyperParams,
    weight_decay: f64,
    name: &str,
) -> Result<(), OptimError> {
    debug_assert_eq!(theta.len(), grad.len());
    state.t += 1;
    let t = state.t;
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    let b1 = T::from_f64(hp.beta1);
    let b2 = T::from_f64(hp.beta2);
    let one_m_b1 = T::from_f64(1.0 - hp.beta1);
    let one_m_b2 = T::from_f64(1.0 - hp.beta2);
    let lambda = T::from_f64(weight_decay);
    let eps = T::from_f64(hp.eps);
    // Fold the bias corrections into the step size.
    let corr1 = 1.0 - hp.beta1.powi(t as i32);
    let corr2 = 1.0 - hp.beta2.powi(t as i32);
    let step = T::from_f64(hp.lr / corr1);
    let inv_sqrt_corr2 = T::from_f64(1.0 / corr2.sqrt());
    for i in 0..theta.len() {
        let g = if weight_decay == 0.0 {
            grad[i]
        } else {
            grad[i] + lambda * theta[i]
        };
        m[i] = b1 * m[i] + one_m_b1 * g;
        v[i] = b2 * v[i] + one_m_b2 * g * g;
        let denom = v[i].sqrt() * inv_sqrt_corr2 + eps;
        theta[i] -= step * (m[i] / denom);
    }
    check_finite(theta, name)
}

/// Layer-wise adaptive rate scaling: the local rate is
/// `r = trust·‖θ‖ / (‖g‖ + λ‖θ‖ + eps)` when both norms are usable,
/// otherwise 1, followed by an SGDM step with η·r.
pub fn lars_step<T: Real>(
    theta: &mut [T],
    grad: &[T],
    state: &mut SgdmState<T>,
    hp: &HyperParams,
    weight_decay: f64,
    name: &str,
) -> Result<(), OptimError> {
    let theta_norm = l2_norm(theta);
    let grad_norm = l2_norm(grad);
    let denom = grad_norm + weight_decay * theta_norm + hp.eps;
    let r = if theta_norm > 0.0 && denom > 0.0 {
        hp.lars_trust * theta_norm / denom
    } else {
        1.0
    };
    sgdm_step_scaled(theta, grad, state, hp.lr * r, hp.momentum, weight_decay, name)
}

fn l2_norm<T: Real>(xs: &[T]) -> f64 {
    let mut sum = 0.0f64;
    for &x in xs {
        let v = x.to_f64();
        sum += v * v;
    }
    sum.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(lr: f64, momentum: f64) -> HyperParams {
        HyperParams {
            lr,
            momentum,
            ..HyperParams::default()
        }
    }

    #[test]
    fn sgdm_two_steps_by_hand() {
        let h = hp(0.1, 0.9);
        let mut theta = [1.0f64];
        let mut state = SgdmState::zeros(&[1]);
        sgdm_step(&mut theta, &[0.5], &mut state, &h, 0.0, "w").unwrap();
        assert!((state.velocity.data()[0] - 0.05).abs() < 1e-15);
        assert!((theta[0] - 0.95).abs() < 1e-15);
        sgdm_step(&mut theta, &[0.5], &mut state, &h, 0.0, "w").unwrap();
        assert!((state.velocity.data()[0] - 0.095).abs() < 1e-15);
        assert!((theta[0] - 0.855).abs() < 1e-15);
    }

    #[test]
    fn sgdm_pure_decay() {
        let h = hp(0.1, 0.9);
        let mut theta = [1.0f64];
        let mut state = SgdmState::zeros(&[1]);
        sgdm_step(&mut theta, &[0.0], &mut state, &h, 0.1, "w").unwrap();
        assert!((state.velocity.data()[0] - 0.01).abs() < 1e-15);
        assert!((theta[0] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let h = HyperParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            ..HyperParams::default()
        };
        let mut theta = [0.0f64];
        let mut state = AdamState::zeros(&[1]);
        adam_step(&mut theta, &[1.0], &mut state, &h, 0.0, "w").unwrap();
        // Bias correction makes m̂ = v̂ = 1 at t = 1.
        assert!((theta[0] + 1e-3 / (1.0 + 1e-8)).abs() < 1e-12, "{}", theta[0]);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn adam_zero_gradient_zero_state_is_identity() {
        let h = HyperParams::default();
        let mut theta = [0.7f64, -0.3];
        let before = theta;
        let mut state = AdamState::zeros(&[2]);
        adam_step(&mut theta, &[0.0, 0.0], &mut state, &h, 0.0, "w").unwrap();
        assert_eq!(theta, before);
    }

    #[test]
    fn lars_fresh_bias_reduces_to_sgdm() {
        let h = hp(0.1, 0.9);
        let mut a = [0.0f64, 0.0];
        let mut b = [0.0f64, 0.0];
        let g = [0.25, -0.5];
        let mut sa = SgdmState::zeros(&[2]);
        let mut sb = SgdmState::zeros(&[2]);
        lars_step(&mut a, &g, &mut sa, &h, 0.0, "w").unwrap();
        sgdm_step(&mut b, &g, &mut sb, &h, 0.0, "w").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lars_local_rate_is_norm_ratio() {
        // theta = [2, 0], g = [1, 0], λ = 0, trust = 1, eps → 0: r = 2.
        let h = HyperParams {
            lr: 0.1,
            momentum: 0.0,
            lars_trust: 1.0,
            eps: 1e-300,
            ..HyperParams::default()
        };
        let mut theta = [2.0f64, 0.0];
        let mut state = SgdmState::zeros(&[2]);
        lars_step(&mut theta, &[1.0, 0.0], &mut state, &h, 0.0, "w").unwrap();
        // v = lr·r·g = 0.1·2·1 = 0.2
        assert!((theta[0] - 1.8).abs() < 1e-12, "{}", theta[0]);
    }

    #[test]
    fn non_finite_update_names_the_parameter() {
        let h = hp(0.1, 0.9);
        let mut theta = [1.0f64];
        let mut state = SgdmState::zeros(&[1]);
        let err = sgdm_step(&mut theta, &[f64::INFINITY], &mut state, &h, 0.0, "conv0.weight")
            .unwrap_err();
        match err {
            OptimError::NonFiniteUpdate { param } => assert_eq!(param, "conv0.weight"),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
