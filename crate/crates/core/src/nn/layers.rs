//! Parameterised blocks. Each block has a tape path (`forward`) used for
//! training and a plain inference path (`apply`) used during rollouts.

use std::rc::Rc;

use rand::Rng;

use super::matrix::Matrix;
use super::params::{normal, orthogonal, ParamId, ParamStore};
use super::tape::{log_sum_exp, masked_softmax_rows, matmul_acc, Tape, Var};
use crate::error::{Error, Result};

/// Affine map on row vectors: `y = x · W + b` with `W` of shape `in x out`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    in_dim: usize,
    out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::config(format!("linear layer `{name}` with zero width")));
        }
        let weight = store.add(format!("{name}.weight"), orthogonal(in_dim, out_dim, gain, rng))?;
        let bias = store.add(format!("{name}.bias"), Matrix::zeros(1, out_dim))?;
        Ok(Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn check(&self, cols: usize) -> Result<()> {
        if cols != self.in_dim {
            return Err(Error::config(format!(
                "linear layer expects input width {}, got {cols}",
                self.in_dim
            )));
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        self.check(tape.shape(x).1)?;
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let xw = tape.matmul(x, w)?;
        tape.add_row(xw, b)
    }

    /// Applies the layer to every row of `x`.
    pub fn apply(&self, store: &ParamStore, x: &Matrix) -> Result<Matrix> {
        self.check(x.cols())?;
        let bias = store.value(self.bias).data();
        let mut out = Matrix::zeros(x.rows(), self.out_dim);
        for r in 0..x.rows() {
            out.row_mut(r).copy_from_slice(bias);
        }
        matmul_acc(x, store.value(self.weight), &mut out);
        Ok(out)
    }
}

/// Single-vector form of [`Linear::apply`].
pub fn linear_forward(store: &ParamStore, layer: &Linear, x: &[f64]) -> Result<Vec<f64>> {
    Ok(layer.apply(store, &Matrix::row_vector(x))?.into_data())
}

/// Stack of linear layers with `tanh` between them. The last layer is
/// linear unless `final_tanh` is set.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Linear>,
    final_tanh: bool,
}

impl Mlp {
    /// `widths = [in, hidden..., out]`; `out_gain` scales the last layer's init.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        out_gain: f64,
        final_tanh: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::config("mlp needs at least one layer"));
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let gain = if i == last { out_gain } else { 1.0 };
                Linear::new(store, &format!("{name}.{i}"), w[0], w[1], gain, rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Mlp { layers, final_tanh })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    fn activated(&self, i: usize) -> bool {
        i + 1 < self.layers.len() || self.final_tanh
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h)?;
            if self.activated(i) {
                h = tape.tanh(h);
            }
        }
        Ok(h)
    }

    pub fn apply(&self, store: &ParamStore, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(store, &h)?;
            if self.activated(i) {
                h.data_mut().iter_mut().for_each(|v| *v = v.tanh());
            }
        }
        Ok(h)
    }
}

/// Learnt lookup table.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    count: usize,
    width: usize,
}

impl Embedding {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        count: usize,
        width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let table = store.add(format!("{name}.table"), normal(count, width, 0.1, rng))?;
        Ok(Embedding { table, count, width })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn check(&self, indices: &[usize]) -> Result<()> {
        match indices.iter().find(|&&i| i >= self.count) {
            Some(bad) => Err(Error::Capacity(format!(
                "embedding index {bad} beyond table size {}",
                self.count
            ))),
            None => Ok(()),
        }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, indices: Rc<[usize]>) -> Result<Var> {
        self.check(&indices)?;
        let t = tape.param(self.table);
        tape.gather_rows(t, indices)
    }

    pub fn row<'a>(&self, store: &'a ParamStore, index: usize) -> Result<&'a [f64]> {
        self.check(&[index])?;
        Ok(store.value(self.table).row(index))
    }
}

/// Boolean attention mask: `allowed[q * keys + k]`.
#[derive(Clone, Debug)]
pub struct AttentionMask {
    queries: usize,
    keys: usize,
    allowed: Rc<[bool]>,
}

impl AttentionMask {
    pub fn new(queries: usize, keys: usize, allowed: Vec<bool>) -> Result<Self> {
        if allowed.len() != queries * keys {
            return Err(Error::config("attention mask size mismatch"));
        }
        Ok(AttentionMask {
            queries,
            keys,
            allowed: allowed.into(),
        })
    }

    pub fn full(queries: usize, keys: usize) -> Self {
        AttentionMask {
            queries,
            keys,
            allowed: vec![true; queries * keys].into(),
        }
    }

    pub fn queries(&self) -> usize {
        self.queries
    }

    pub fn keys(&self) -> usize {
        self.keys
    }

    pub fn allowed(&self, q: usize, k: usize) -> bool {
        self.allowed[q * self.keys + k]
    }
}

/// Multi-head scaled dot-product attention with query/key/value/output
/// projections. No feed-forward sublayer.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    heads: usize,
    width: usize,
}

/// Result of an inference-path attention call.
#[derive(Clone, Debug)]
pub struct AttentionOutput {
    pub output: Matrix,
    /// One `queries x keys` weight matrix per head.
    pub weights: Vec<Matrix>,
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        query_in: usize,
        width: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || width % heads != 0 {
            return Err(Error::config(format!(
                "attention width {width} not divisible by {heads} heads"
            )));
        }
        Ok(MultiHeadAttention {
            query: Linear::new(store, &format!("{name}.query"), query_in, width, 1.0, rng)?,
            key: Linear::new(store, &format!("{name}.key"), width, width, 1.0, rng)?,
            value: Linear::new(store, &format!("{name}.value"), width, width, 1.0, rng)?,
            output: Linear::new(store, &format!("{name}.output"), width, width, 1.0, rng)?,
            heads,
            width,
        })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    fn check_mask(&self, q: usize, k: usize, mask: &AttentionMask) -> Result<()> {
        if k == 0 {
            return Err(Error::NoAttendableInput);
        }
        if mask.queries != q || mask.keys != k {
            return Err(Error::config("attention mask does not match query/key counts"));
        }
        Ok(())
    }

    /// Tape path. `queries` is `q x query_in`; `keys`/`values` are `k x width`.
    pub fn forward(
        &self,
        tape: &mut Tape<'_>,
        queries: Var,
        keys: Var,
        values: Var,
        mask: &AttentionMask,
    ) -> Result<Var> {
        let (nq, nk) = (tape.shape(queries).0, tape.shape(keys).0);
        self.check_mask(nq, nk, mask)?;
        if tape.shape(values).0 != nk {
            return Err(Error::config("attention keys and values differ in length"));
        }
        let q = self.query.forward(tape, queries)?;
        let k = self.key.forward(tape, keys)?;
        let v = self.value.forward(tape, values)?;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let scores = tape.matmul_nt(qh, kh)?;
            let scores = tape.scale(scores, scale);
            let weights = tape.masked_softmax(scores, mask.allowed.clone())?;
            heads.push(tape.matmul(weights, vh)?);
        }
        let joined = tape.concat_cols(&heads)?;
        self.output.forward(tape, joined)
    }

    /// Projects raw key/value inputs; rollouts cache these rows.
    pub fn project_keys_values(&self, store: &ParamStore, keys: &Matrix, values: &Matrix) -> Result<(Matrix, Matrix)> {
        Ok((self.key.apply(store, keys)?, self.value.apply(store, values)?))
    }

    /// Inference path over already-projected keys and values.
    pub fn attend_projected(
        &self,
        store: &ParamStore,
        queries: &Matrix,
        keys_proj: &Matrix,
        values_proj: &Matrix,
        mask: &AttentionMask,
    ) -> Result<AttentionOutput> {
        self.check_mask(queries.rows(), keys_proj.rows(), mask)?;
        let q = self.query.apply(store, queries)?;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let (nq, nk) = (q.rows(), keys_proj.rows());
        let mut joined = Matrix::zeros(nq, self.width);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = h * dh..(h + 1) * dh;
            let mut scores = Matrix::zeros(nq, nk);
            for i in 0..nq {
                let qi = &q.row(i)[cols.clone()];
                for j in 0..nk {
                    let kj = &keys_proj.row(j)[cols.clone()];
                    let dot: f64 = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
                    scores.set(i, j, dot * scale);
                }
            }
            let w = masked_softmax_rows(&scores, &mask.allowed)?;
            for i in 0..nq {
                let out = &mut joined.row_mut(i)[cols.clone()];
                for j in 0..nk {
                    let wij = w.get(i, j);
                    if wij != 0.0 {
                        let vj = &values_proj.row(j)[cols.clone()];
                        out.iter_mut().zip(vj).for_each(|(o, v)| *o += wij * v);
                    }
                }
            }
            weights.push(w);
        }
        Ok(AttentionOutput {
            output: self.output.apply(store, &joined)?,
            weights,
        })
    }

    /// Inference path from raw inputs.
    pub fn attend(
        &self,
        store: &ParamStore,
        queries: &Matrix,
        keys: &Matrix,
        values: &Matrix,
        mask: &AttentionMask,
    ) -> Result<AttentionOutput> {
        if keys.rows() == 0 {
            return Err(Error::NoAttendableInput);
        }
        let (k, v) = self.project_keys_values(store, keys, values)?;
        self.attend_projected(store, queries, &k, &v, mask)
    }
}

/// Unmasked multi-head attention over sequences of vectors.
pub fn attention_forward(
    store: &ParamStore,
    block: &MultiHeadAttention,
    queries: &[Vec<f64>],
    keys: &[Vec<f64>],
    values: &[Vec<f64>],
) -> Result<AttentionOutput> {
    if keys.is_empty() || values.is_empty() {
        return Err(Error::NoAttendableInput);
    }
    let q = Matrix::from_rows(queries)?;
    let k = Matrix::from_rows(keys)?;
    let v = Matrix::from_rows(values)?;
    block.attend(store, &q, &k, &v, &AttentionMask::full(q.rows(), k.rows()))
}

/// Probabilities and log-probabilities of a categorical distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Categorical {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
}

impl Categorical {
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .zip(&self.log_probs)
            .map(|(p, lp)| p * lp)
            .sum::<f64>()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Inverse-CDF sample from a uniform draw `u ∈ [0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

/// Max-shifted softmax with matching log-probabilities.
pub fn categorical_head(logits: &[f64]) -> Result<Categorical> {
    if logits.is_empty() {
        return Err(Error::config("categorical head over zero actions"));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite logit".into()));
    }
    let lse = log_sum_exp(logits);
    let log_probs: Vec<f64> = logits.iter().map(|x| x - lse).collect();
    let probs = log_probs.iter().map(|lp| lp.exp()).collect();
    Ok(Categorical { probs, log_probs })
}
