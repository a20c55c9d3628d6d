//! Adaptive-moment optimizer with a trainability mask.
//!
//! Masked-out parameters are skipped entirely: no moment update, no step
//! count, no write. Each parameter keeps its own update count for bias
//! correction, so a tensor that unfreezes late behaves exactly like one
//! whose training started at that step.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::nn::store::{ParamId, ParameterStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.98, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    /// First moments, indexed like the store.
    pub m: Vec<Array2<f64>>,
    /// Second moments, indexed like the store.
    pub v: Vec<Array2<f64>>,
    /// Per-parameter update counts.
    pub t: Vec<u64>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, store: &ParameterStore) -> Adam {
        let m = store.iter().map(|(_, p)| Array2::zeros(p.value.dim())).collect::<Vec<_>>();
        let v = m.clone();
        let t = vec![0; m.len()];
        Adam { cfg, m, v, t }
    }

    /// Applies one update from the gradients currently accumulated in the
    /// store to every parameter the mask admits.
    pub fn step<F: Fn(ParamId, &str) -> bool>(
        &mut self,
        store: &mut ParameterStore,
        lr: f64,
        trainable: F,
    ) {
        let ids: Vec<ParamId> = store.ids().collect();
        for id in ids {
            if !trainable(id, store.name(id)) {
                continue;
            }
            let idx = id.index();
            let grad = store.grad(id).clone();
            let t = self.t[idx] + 1;
            self.t[idx] = t;
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            *m *= self.cfg.beta1;
            m.scaled_add(1.0 - self.cfg.beta1, &grad);
            *v *= self.cfg.beta2;
            v.scaled_add(1.0 - self.cfg.beta2, &(&grad * &grad));
            let bias1 = 1.0 - self.cfg.beta1.powi(t as i32);
            let bias2 = 1.0 - self.cfg.beta2.powi(t as i32);
            let value = store.value_mut(id);
            ndarray::Zip::from(value).and(&*m).and(&*v).for_each(|p, &mi, &vi| {
                let m_hat = mi / bias1;
                let v_hat = vi / bias2;
                *p -= lr * m_hat / (v_hat.sqrt() + self.cfg.epsilon);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_grad_store(value: f64, grad: f64) -> (ParameterStore, ParamId) {
        let mut store = ParameterStore::new();
        let id = store.add("w", Array2::from_elem((1, 1), value));
        *store.grad_mut(id) = Array2::from_elem((1, 1), grad);
        (store, id)
    }

    #[test]
    fn a_constant_gradient_moves_by_the_learning_rate_per_step() {
        // With bias correction, a constant gradient g gives m_hat = g and
        // v_hat = g^2 at every step, so each update is lr·sign(g) up to the
        // epsilon in the denominator.
        let (mut store, id) = constant_grad_store(1.0, 0.25);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        for _ in 0..10 {
            adam.step(&mut store, 1e-2, |_, _| true);
        }
        let got = store.value(id)[[0, 0]];
        assert!((got - (1.0 - 10.0 * 1e-2)).abs() < 1e-6, "{got}");
    }

    #[test]
    fn hand_computed_two_step_trajectory() {
        // Gradient 2, then 1, lr 0.1, default betas. Step one: m=0.2,
        // v=0.08, m_hat=2, v_hat=4, delta=0.1·2/(2+1e-8). Step two: m=0.28,
        // v=0.0984, m_hat=0.28/0.19, v_hat=0.0984/0.0396.
        let (mut store, id) = constant_grad_store(0.0, 2.0);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        adam.step(&mut store, 0.1, |_, _| true);
        let after1 = store.value(id)[[0, 0]];
        let want1 = -0.1 * 2.0 / (2.0 + 1e-8);
        assert!((after1 - want1).abs() < 1e-15, "{after1} vs {want1}");
        *store.grad_mut(id) = Array2::from_elem((1, 1), 1.0);
        adam.step(&mut store, 0.1, |_, _| true);
        let m_hat = (0.9 * 0.2 + 0.1 * 1.0) / (1.0 - 0.9f64.powi(2));
        let v_hat = (0.98 * 0.08 + 0.02 * 1.0) / (1.0 - 0.98f64.powi(2));
        let want2 = want1 - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        let after2 = store.value(id)[[0, 0]];
        assert!((after2 - want2).abs() < 1e-15, "{after2} vs {want2}");
    }

    #[test]
    fn masked_parameters_are_bitwise_untouched() {
        let mut store = ParameterStore::new();
        let a = store.add("group_a.w", Array2::from_elem((2, 3), 0.5));
        let b = store.add("group_b.w", Array2::from_elem((3, 2), -0.25));
        *store.grad_mut(a) = Array2::from_elem((2, 3), 1.0);
        *store.grad_mut(b) = Array2::from_elem((3, 2), 1.0);
        let before_b = store.tensor_hash(b);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        adam.step(&mut store, 0.1, |_, name| name.starts_with("group_a"));
        assert_ne!(store.value(a)[[0, 0]], 0.5);
        assert_eq!(store.tensor_hash(b), before_b);
        assert_eq!(adam.t, vec![1, 0]);
        assert_eq!(adam.m[b.index()][[0, 0]], 0.0);
    }

    #[test]
    fn late_unfreezing_restarts_bias_correction() {
        // A parameter admitted only from the third step gets the same first
        // update a fresh parameter would.
        let (mut store, id) = constant_grad_store(1.0, 0.5);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        adam.step(&mut store, 0.1, |_, _| false);
        adam.step(&mut store, 0.1, |_, _| false);
        adam.step(&mut store, 0.1, |_, _| true);
        let gated = store.value(id)[[0, 0]];
        let (mut fresh_store, fresh_id) = constant_grad_store(1.0, 0.5);
        let mut fresh = Adam::new(AdamConfig::default(), &fresh_store);
        fresh.step(&mut fresh_store, 0.1, |_, _| true);
        assert_eq!(gated.to_bits(), fresh_store.value(fresh_id)[[0, 0]].to_bits());
    }

    #[test]
    fn updates_are_deterministic() {
        let run = || {
            let (mut store, id) = constant_grad_store(0.3, -0.7);
            let mut adam = Adam::new(AdamConfig::default(), &store);
            for _ in 0..5 {
                adam.step(&mut store, 3e-3, |_, _| true);
            }
            store.value(id)[[0, 0]].to_bits()
        };
        assert_eq!(run(), run());
    }
}
