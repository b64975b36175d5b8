use rand::Rng;
use rand_distr::StandardNormal;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Index of a [`Parameter`] inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named trainable array together with its gradient accumulator.
#[derive(Clone, Debug)]
pub struct Parameter {
    name: String,
    value: Matrix,
    grad: Matrix,
}

impl Parameter {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Matrix {
        &self.value
    }

    pub fn grad(&self) -> &Matrix {
        &self.grad
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }
}

/// Flat collection of parameters. Names are unique and stable, which is what
/// checkpoints key on.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::config(format!("duplicate parameter name `{name}`")));
        }
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.params.push(Parameter { name, value, grad });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].grad
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Adds a gradient buffer produced by [`super::Tape::backward`].
    pub fn accumulate(&mut self, grads: &Grads) -> Result<()> {
        if grads.0.len() != self.params.len() {
            return Err(Error::contract("gradient buffer belongs to a different store"));
        }
        for (p, g) in self.params.iter_mut().zip(&grads.0) {
            p.grad.axpy(1.0, g);
        }
        Ok(())
    }

    pub fn grad_norm(&self) -> f64 {
        self.params.iter().map(|p| p.grad.sum_sq()).sum::<f64>().sqrt()
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            for p in &mut self.params {
                p.grad.data_mut().iter_mut().for_each(|g| *g *= scale);
            }
        }
        norm
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    #[cfg(test)]
    pub(crate) fn set_grad(&mut self, id: ParamId, grad: Matrix) {
        assert_eq!(grad.shape(), self.params[id.0].value.shape());
        self.params[id.0].grad = grad;
    }
}

impl Parameter {
    pub(crate) fn parts_mut(&mut self) -> (&mut Matrix, &Matrix) {
        (&mut self.value, &self.grad)
    }
}

/// Gradient buffer aligned with a [`ParamStore`], filled by a backward pass.
#[derive(Clone, Debug)]
pub struct Grads(pub(crate) Vec<Matrix>);

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Grads(
            store
                .params
                .iter()
                .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect(),
        )
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.0[id.0]
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.axpy(1.0, b);
        }
    }
}

/// Orthogonal initialisation: a Gaussian matrix orthonormalised by modified
/// Gram-Schmidt, scaled by `gain`.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Matrix {
    let (long, short) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    // `short` column vectors of length `long`
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    let mut out = Matrix::zeros(rows, cols);
    for (j, b) in basis.iter().enumerate() {
        for (i, &x) in b.iter().enumerate() {
            if rows >= cols {
                out.set(i, j, gain * x);
            } else {
                out.set(j, i, gain * x);
            }
        }
    }
    out
}

pub fn normal<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized above")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_columns_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = orthogonal(6, 4, 1.0, &mut rng);
        let gram = w.matmul_tn(&w);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram.get(i, j) - expect).abs() < 1e-10);
            }
        }
        let wide = orthogonal(3, 5, 2.0, &mut rng);
        let gram = wide.matmul_nt(&wide);
        for i in 0..3 {
            assert!((gram.get(i, i) - 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_grads_clears_everything() {
        let mut store = ParamStore::new();
        let id = store.add("w", Matrix::filled(2, 2, 1.0)).unwrap();
        store.set_grad(id, Matrix::filled(2, 2, 3.0));
        store.zero_grads();
        assert!(store.grad(id).data().iter().all(|&g| g == 0.0));
        assert_eq!(store.grad(id).shape(), store.value(id).shape());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::new();
        store.add("w", Matrix::zeros(1, 1)).unwrap();
        assert!(store.add("w", Matrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn clip_grad_norm_rescales() {
        let mut store = ParamStore::new();
        let id = store.add("w", Matrix::zeros(1, 2)).unwrap();
        store.set_grad(id, Matrix::row_vector(&[3.0, 4.0]));
        let before = store.clip_grad_norm(0.5);
        assert_eq!(before, 5.0);
        assert!((store.grad_norm() - 0.5).abs() < 1e-12);
    }
}
