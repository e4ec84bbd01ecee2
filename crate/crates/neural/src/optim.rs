//! Adam optimizer.

use crate::{NeuralError, ParamSet, Tensor};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut ParamSet, grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<(), NeuralError> {
    params.check_like(grads, "adam_step")?;
    params.check_like(&state.m, "adam_step")?;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    for (k, p) in params.tensors_mut().iter_mut().enumerate() {
        let g = grads[k].data();
        let m = state.m[k].data_mut();
        let v = state.v[k].data_mut();
        for (i, w) in p.data_mut().iter_mut().enumerate() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(x: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.push("x", Tensor::vector(vec![x]));
        ps
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut ps = one(1.5);
        let mut st = AdamState::new(&ps);
        adam_step(&mut ps, &[Tensor::vector(vec![0.0])], &mut st, 0.1).unwrap();
        assert_eq!(ps.get(crate::ParamId(0)).data(), &[1.5]);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        for g in [0.3, -2.0, 1e-3] {
            let mut ps = one(0.0);
            let mut st = AdamState::new(&ps);
            adam_step(&mut ps, &[Tensor::vector(vec![g])], &mut st, 0.01).unwrap();
            let moved = ps.get(crate::ParamId(0)).data()[0];
            // m_hat = g, v_hat = g^2, so the step is lr * |g| / (|g| + eps).
            let expected = -g.signum() * 0.01 * g.abs() / (g.abs() + EPSILON);
            assert!((moved - expected).abs() < 1e-15);
            assert!((moved.abs() - 0.01).abs() < 1e-7);
        }
    }

    #[test]
    fn quadratic_decreases() {
        let mut ps = one(3.0);
        let mut st = AdamState::new(&ps);
        let loss = |x: f64| (x - 1.0) * (x - 1.0);
        let mut prev = loss(3.0);
        for _ in 0..2 {
            let x = ps.get(crate::ParamId(0)).data()[0];
            adam_step(&mut ps, &[Tensor::vector(vec![2.0 * (x - 1.0)])], &mut st, 0.1).unwrap();
            let now = loss(ps.get(crate::ParamId(0)).data()[0]);
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut ps = one(0.0);
        let mut st = AdamState::new(&ps);
        assert!(adam_step(&mut ps, &[Tensor::vector(vec![1.0, 2.0])], &mut st, 0.1).is_err());
    }
}
