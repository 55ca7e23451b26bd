//! Bias-corrected Adam with per-parameter state keyed by name.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: ParamStore,
    pub v: ParamStore,
}

/// One Adam update of every parameter that has a gradient in `grads`.
pub fn adam_step(params: &mut ParamStore, grads: &ParamStore, state: &mut AdamState, config: &AdamConfig) -> Result<()> {
    for (name, g) in grads.iter() {
        let p = params.get(name)?;
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                detail: format!("{name}: parameter {:?}, gradient {:?}", p.shape(), g.shape()),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for (name, g) in grads.iter() {
        if !state.m.contains(name) {
            state.m.insert(name, Tensor::zeros(g.rows(), g.cols()));
            state.v.insert(name, Tensor::zeros(g.rows(), g.cols()));
        }
        let m = state.m.get_mut(name)?;
        for (mi, gi) in m.data_mut().iter_mut().zip(g.data()) {
            *mi = config.beta1 * *mi + (1.0 - config.beta1) * gi;
        }
        let v = state.v.get_mut(name)?;
        for (vi, gi) in v.data_mut().iter_mut().zip(g.data()) {
            *vi = config.beta2 * *vi + (1.0 - config.beta2) * gi * gi;
        }
        let (m, v) = (state.m.get(name)?, state.v.get(name)?);
        let p = params.get_mut(name)?;
        for ((pi, mi), vi) in p.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
            *pi -= config.lr * (mi / c1) / ((vi / c2).sqrt() + config.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(pairs: &[(&str, f64)]) -> ParamStore {
        let mut s = ParamStore::new();
        for (n, v) in pairs {
            s.insert(*n, Tensor::scalar(*v));
        }
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = store(&[("w", 0.5)]);
        let mut st = AdamState::default();
        adam_step(&mut p, &store(&[("w", 1.0)]), &mut st, &AdamConfig::default()).unwrap();
        let moved = p.get("w").unwrap().item() - 0.5;
        assert!((moved + 1e-3).abs() < 1e-10, "{moved}");
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = store(&[("w", 0.5)]);
        let mut st = AdamState::default();
        for _ in 0..3 {
            adam_step(&mut p, &store(&[("w", 0.0)]), &mut st, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p.get("w").unwrap().item(), 0.5);
    }

    #[test]
    fn parameters_are_independent() {
        let mut p = store(&[("a", 0.0), ("b", 0.0)]);
        let mut st = AdamState::default();
        let cfg = AdamConfig::default();
        adam_step(&mut p, &store(&[("a", 1.0), ("b", 0.0)]), &mut st, &cfg).unwrap();
        assert_eq!(p.get("b").unwrap().item(), 0.0);
        assert_ne!(p.get("a").unwrap().item(), 0.0);
        // a gradient for a only leaves b's state untouched
        adam_step(&mut p, &store(&[("a", 1.0)]), &mut st, &cfg).unwrap();
        assert_eq!(st.m.get("b").unwrap().item(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = store(&[("w", 0.5)]);
        let mut g = ParamStore::new();
        g.insert("w", Tensor::zeros(2, 1));
        assert!(adam_step(&mut p, &g, &mut AdamState::default(), &AdamConfig::default()).is_err());
        assert!(adam_step(&mut p, &store(&[("x", 1.0)]), &mut AdamState::default(), &AdamConfig::default()).is_err());
    }
}
