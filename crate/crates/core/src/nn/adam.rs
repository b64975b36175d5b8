use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one [`ParamStore`]. Must be initialised against the
/// store before the first step.
#[derive(Clone, Debug)]
pub struct AdamState {
    config: AdamConfig,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    step: u64,
    initialised: bool,
}

impl AdamState {
    /// An uninitialised state; [`AdamState::step`] fails until [`AdamState::init`].
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
            initialised: false,
        }
    }

    pub fn for_store(config: AdamConfig, store: &ParamStore) -> Self {
        let mut s = Self::new(config);
        s.init(store);
        s
    }

    pub fn init(&mut self, store: &ParamStore) {
        let zeros = || {
            store
                .iter()
                .map(|(_, p)| Matrix::zeros(p.shape().0, p.shape().1))
                .collect::<Vec<_>>()
        };
        self.first = zeros();
        self.second = zeros();
        self.step = 0;
        self.initialised = true;
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update using the gradients held in `store`.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if !self.initialised {
            return Err(Error::contract("adam state used before initialisation"));
        }
        if self.first.len() != store.len()
            || store
                .iter()
                .zip(&self.first)
                .any(|((_, p), m)| p.shape() != m.shape())
        {
            return Err(Error::contract("adam moments do not match the parameter store"));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((param, m), v) in store
            .params_mut()
            .iter_mut()
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            let (value, grad) = param.parts_mut();
            for (((x, &g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> (ParamStore, super::super::ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("x", Matrix::row_vector(&[x])).unwrap();
        (store, id)
    }

    #[test]
    fn zero_grads_leave_parameters_unchanged() {
        let (mut store, id) = scalar_store(1.25);
        let mut adam = AdamState::for_store(AdamConfig::default(), &store);
        adam.step(&mut store).unwrap();
        assert_eq!(store.value(id).data(), &[1.25]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut store, id) = scalar_store(0.0);
        store.set_grad(id, Matrix::row_vector(&[-3.7]));
        let cfg = AdamConfig::default();
        let mut adam = AdamState::for_store(cfg, &store);
        adam.step(&mut store).unwrap();
        // m̂ = g, v̂ = g², so the move is lr·g/(|g|+ε)
        let moved = store.value(id).data()[0];
        assert!((moved - cfg.lr).abs() < cfg.lr * 1e-7);
    }

    #[test]
    fn uninitialised_state_is_rejected() {
        let (mut store, _) = scalar_store(0.0);
        let mut adam = AdamState::new(AdamConfig::default());
        assert!(matches!(adam.step(&mut store), Err(Error::Contract(_))));
    }

    #[test]
    fn three_step_trace_on_quadratic() {
        // f(x) = x², g = 2x, lr = 0.1, starting at x = 1.
        let (mut store, id) = scalar_store(1.0);
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::for_store(cfg, &store);

        // Hand trace, written out independently of the implementation.
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8f64, 0.1f64);
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut expected = Vec::new();
        for t in 1..=3 {
            let g = 2.0 * x;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
            expected.push(x);
        }
        for want in expected {
            store.zero_grads();
            let x = store.value(id).data()[0];
            store.set_grad(id, Matrix::row_vector(&[2.0 * x]));
            adam.step(&mut store).unwrap();
            assert!((store.value(id).data()[0] - want).abs() < 1e-10);
        }
        assert_eq!(adam.steps(), 3);
    }
}
