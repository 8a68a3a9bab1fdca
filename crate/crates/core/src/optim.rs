//! SGD and Adam updates over [`ParamVector`]s.
//!
//! Steps are pure: they return new parameter vectors (and new optimizer
//! state) rather than mutating inputs. Every step verifies the result is
//! finite, which turns silent divergence into an immediate error.

use crate::error::{Error, Result};
use crate::params::ParamVector;

/// p ← p − lr·g, elementwise.
pub fn sgd_step(params: &ParamVector, grads: &ParamVector, lr: f64) -> Result<ParamVector> {
    let next = params.add_scaled(grads, -lr)?;
    if let Some(name) = next.first_non_finite() {
        return Err(Error::NonFinite(format!("sgd_step output parameter {name:?}")));
    }
    Ok(next)
}

/// Adam first/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: ParamVector,
    pub v: ParamVector,
    pub t: u64,
}

impl AdamState {
    /// Zeroed moments shaped like `params`.
    pub fn new(params: &ParamVector) -> Self {
        AdamState { m: params.zeros_like(), v: params.zeros_like(), t: 0 }
    }
}

/// Standard Adam with bias correction. Returns the updated parameters and
/// the advanced moment state.
pub fn adam_step(
    state: &AdamState,
    params: &ParamVector,
    grads: &ParamVector,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<(ParamVector, AdamState)> {
    if !state.m.compatible(params) || !params.compatible(grads) {
        return Err(Error::config("adam_step: moment/param/grad shapes differ".to_string()));
    }
    let t = state.t + 1;
    let mut m = ParamVector::new();
    let mut v = ParamVector::new();
    let mut next = ParamVector::new();
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    for (((name, p), (_, g)), ((_, m0), (_, v0))) in params
        .iter()
        .zip(grads.iter())
        .zip(state.m.iter().zip(state.v.iter()))
    {
        let m1 = m0.zip(g, |m, g| beta1 * m + (1.0 - beta1) * g)?;
        let v1 = v0.zip(g, |v, g| beta2 * v + (1.0 - beta2) * g * g)?;
        let update = m1.zip(&v1, |m, v| {
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            m_hat / (v_hat.sqrt() + eps)
        })?;
        let p1 = p.add_scaled(&update, -lr)?;
        m.insert(name, m1)?;
        v.insert(name, v1)?;
        next.insert(name, p1)?;
    }
    if let Some(name) = next.first_non_finite() {
        return Err(Error::NonFinite(format!("adam_step output parameter {name:?}")));
    }
    Ok((next, AdamState { m, v, t }))
}

/// Adam with carried state and fixed hyperparameters.
#[derive(Debug, Clone)]
pub struct Adam {
    pub state: AdamState,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    /// Defaults: β1=0.9, β2=0.999, ε=1e-8.
    pub fn new(params: &ParamVector, lr: f64) -> Self {
        Adam { state: AdamState::new(params), lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step(&mut self, params: &ParamVector, grads: &ParamVector) -> Result<ParamVector> {
        let (next, state) =
            adam_step(&self.state, params, grads, self.lr, self.beta1, self.beta2, self.eps)?;
        self.state = state;
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn params_one() -> ParamVector {
        let mut p = ParamVector::new();
        p.insert("p", array![1.0, 1.0]).unwrap();
        p
    }

    #[test]
    fn sgd_basic_and_identities() {
        let p = params_one();
        let mut g = p.zeros_like();
        g.set("p", crate::value::Value::Vector(array![2.0, 2.0])).unwrap();
        let next = sgd_step(&p, &g, 0.5).unwrap();
        assert_eq!(next.get("p").unwrap().as_vector().unwrap(), array![0.0, 0.0]);
        // lr = 0 and g = 0 both leave params unchanged.
        assert_eq!(sgd_step(&p, &g, 0.0).unwrap(), p);
        assert_eq!(sgd_step(&p, &p.zeros_like(), 0.7).unwrap(), p);
    }

    #[test]
    fn sgd_incompatible_is_config_error() {
        let p = params_one();
        let mut q = ParamVector::new();
        q.insert("q", array![1.0, 1.0]).unwrap();
        assert!(sgd_step(&p, &q, 0.1).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_about_lr() {
        // With g=1 everywhere, bias correction makes the first update
        // m̂/(√v̂+ε) = 1/(1+ε) ≈ 1, so Δp ≈ −lr.
        let p = params_one();
        let mut g = p.zeros_like();
        g.set("p", crate::value::Value::Vector(array![1.0, 1.0])).unwrap();
        let st = AdamState::new(&p);
        let (next, st2) = adam_step(&st, &p, &g, 0.001, 0.9, 0.999, 1e-8).unwrap();
        let moved = next.get("p").unwrap().as_vector().unwrap();
        for x in moved.iter() {
            assert!((x - (1.0 - 0.001)).abs() < 1e-9, "got {x}");
        }
        assert_eq!(st2.t, 1);
    }

    #[test]
    fn adam_zero_grad_fresh_state_is_identity() {
        let p = params_one();
        let st = AdamState::new(&p);
        let (next, _) = adam_step(&st, &p, &p.zeros_like(), 0.01, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(next, p);
    }

    #[test]
    fn adam_is_deterministic() {
        let p = params_one();
        let mut g = p.zeros_like();
        g.set("p", crate::value::Value::Vector(array![0.3, -0.2])).unwrap();
        let st = AdamState::new(&p);
        let a = adam_step(&st, &p, &g, 0.01, 0.9, 0.999, 1e-8).unwrap();
        let b = adam_step(&st, &p, &g, 0.01, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.m, b.1.m);
        assert_eq!(a.1.v, b.1.v);
    }

    #[test]
    fn non_finite_result_is_rejected() {
        let p = params_one();
        let mut g = p.zeros_like();
        g.set("p", crate::value::Value::Vector(array![f64::INFINITY, 0.0])).unwrap();
        assert!(matches!(sgd_step(&p, &g, 0.1), Err(Error::NonFinite(_))));
    }
}
