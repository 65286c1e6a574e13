use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 3e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self { learning_rate, ..Self::default() }
    }
}

/// First/second moment estimates for every parameter of one store.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || store.iter().map(|p| Tensor::zeros(p.value.shape())).collect::<Vec<_>>();
        Self { config, first_moment: zeros(), second_moment: zeros(), step_count: 0 }
    }

    /// One bias-corrected Adam update from the gradients held in `store`.
    ///
    /// Nothing is modified if any gradient is non-finite; the error names
    /// the first offending parameter.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.config.learning_rate <= 0.0 {
            return Err(Error::Config("Adam learning rate must be positive".into()));
        }
        if store.len() != self.first_moment.len() {
            return Err(Error::dim("Adam state does not match the parameter store"));
        }
        if let Some(bad) = store.iter().find(|p| !p.grad.is_finite()) {
            return Err(Error::Training { param: bad.name.clone(), reason: "non-finite gradient".into() });
        }
        self.step_count += 1;
        let AdamConfig { learning_rate: lr, beta1: b1, beta2: b2, epsilon: eps } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for ((p, m), v) in store.iter_mut().zip(&mut self.first_moment).zip(&mut self.second_moment) {
            let g = p.grad.data();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (k, w) in p.value.data_mut().iter_mut().enumerate() {
                md[k] = b1 * md[k] + (1.0 - b1) * g[k];
                vd[k] = b2 * vd[k] + (1.0 - b2) * g[k] * g[k];
                let m_hat = md[k] / c1;
                let v_hat = vd[k] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(value: f64, grad: f64) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(value));
        s.get_mut(id).grad = Tensor::scalar(grad);
        s
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut s = store_with(1.5, 0.0);
        let mut adam = AdamState::new(&s, AdamConfig::default());
        adam.first_moment[0] = Tensor::scalar(0.2);
        adam.second_moment[0] = Tensor::scalar(0.04);
        adam.step(&mut s).unwrap();
        // The parameter still moves by the decayed momentum; with zero moments
        // it must not move at all.
        let mut s2 = store_with(1.5, 0.0);
        let mut fresh = AdamState::new(&s2, AdamConfig::default());
        fresh.step(&mut s2).unwrap();
        assert_eq!(s2.iter().next().unwrap().value.item(), 1.5);
        assert!(adam.first_moment[0].item() < 0.2);
        assert!(adam.second_moment[0].item() < 0.04);
        assert_eq!(fresh.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate_times_sign() {
        for g in [3.0, -0.25, 1e-3] {
            let mut s = store_with(0.0, g);
            let mut adam = AdamState::new(&s, AdamConfig::with_lr(0.01));
            adam.step(&mut s).unwrap();
            let w = s.iter().next().unwrap().value.item();
            // m_hat/sqrt(v_hat) = g/|g|; eps perturbs only the 1e-8 scale.
            assert!((w + 0.01 * g.signum()).abs() < 1e-7, "g={g} w={w}");
        }
    }

    #[test]
    fn two_constant_gradient_steps_match_scalar_oracle() {
        let (lr, b1, b2, eps, g) = (0.05, 0.9, 0.999, 1e-8, 0.7);
        let mut s = store_with(2.0, g);
        let mut adam = AdamState::new(&s, AdamConfig { learning_rate: lr, beta1: b1, beta2: b2, epsilon: eps });
        adam.step(&mut s).unwrap();
        adam.step(&mut s).unwrap();

        let (mut w, mut m, mut v) = (2.0f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            w -= lr * mh / (vh.sqrt() + eps);
        }
        assert_eq!(s.iter().next().unwrap().value.item(), w);
        assert_eq!(adam.step_count, 2);
    }

    #[test]
    fn non_finite_gradient_aborts_and_names_parameter() {
        let mut s = ParamStore::new();
        s.add("fine", Tensor::scalar(1.0));
        let bad = s.add("bad", Tensor::scalar(1.0));
        s.get_mut(bad).grad = Tensor::from_raw(vec![1, 1], vec![f64::NAN]);
        let mut adam = AdamState::new(&s, AdamConfig::default());
        match adam.step(&mut s) {
            Err(Error::Training { param, .. }) => assert_eq!(param, "bad"),
            other => panic!("expected training error, got {other:?}"),
        }
        assert_eq!(adam.step_count, 0);
        assert_eq!(s.iter().next().unwrap().value.item(), 1.0);
    }
}
