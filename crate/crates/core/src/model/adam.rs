use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Adam moment estimates plus the fixed hyperparameters besides the step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n_params: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One bias-corrected Adam update at step `t` (1-based).
pub fn adam_step<T: Scalar>(params: &mut [T], grads: &[T], state: &mut Adam<T>, lr: T, t: u64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(Error::Contract(format!(
            "adam shapes differ: {} params, {} grads, {} state",
            params.len(),
            grads.len(),
            state.len()
        )));
    }
    if t == 0 {
        return Err(Error::Precondition("adam step counter starts at 1".into()));
    }
    let (b1, b2, eps) = (T::lit(state.beta1), T::lit(state.beta2), T::lit(state.epsilon));
    let t = i32::try_from(t).unwrap_or(i32::MAX);
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (T::one() - b1) * g;
        state.v[i] = b2 * state.v[i] + (T::one() - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
