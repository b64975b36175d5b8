//! Reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation applied during a forward pass. Nodes
//! referring to parameters borrow the [`ParamStore`] instead of copying it.
//! [`Tape::backward`] may run once per tape; a second call is rejected.

use std::rc::Rc;

use super::matrix::{gemm, Matrix};
use super::params::{Grads, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Exp(Var),
    Clamp(Var, f64, f64),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Rc<[usize]>),
    PickCols(Var, Rc<[usize]>),
    MaskedSoftmax(Var),
    LogSoftmax(Var),
    RowSum(Var),
    WeightedSum(Var, Rc<[f64]>),
}

struct Node {
    // `None` for parameter nodes: their value lives in the store.
    value: Option<Matrix>,
    op: Op,
    needs_grad: bool,
}

pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    backward_done: bool,
}

fn shape_err(op: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::config(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.store.value(*id),
            _ => unreachable!("only parameter nodes omit their value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(shape_err("matmul", sa, sb));
        }
        let out = self.value(a).matmul(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.1 {
            return Err(shape_err("matmul_nt", sa, sb));
        }
        let out = self.value(a).matmul_nt(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMulNt(a, b), ng))
    }

    /// Adds the `1 x c` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.0 != 1 || sa.1 != sb.1 {
            return Err(shape_err("add_row", sa, sb));
        }
        let mut out = self.value(a).clone();
        let row = self.value(b).data();
        for r in 0..sa.0 {
            out.row_mut(r).iter_mut().zip(row).for_each(|(x, y)| *x += y);
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::AddRow(a, b), ng))
    }

    fn elementwise(&mut self, name: &str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(name, sa, sb));
        }
        Ok(self.value(a).zip_map(self.value(b), f))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.elementwise("add", a, b, |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.elementwise("sub", a, b, |x, y| x - y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.elementwise("mul", a, b, |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    /// Elementwise minimum; on ties the gradient flows to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.elementwise("min", a, b, |x, y| if x <= y { x } else { y })?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Min(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, factor), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let ng = self.ng(a);
        self.push(out, Op::Tanh(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        let ng = self.ng(a);
        self.push(out, Op::Exp(a), ng)
    }

    /// Clamps into `[lo, hi]`; gradient passes where `lo <= x <= hi`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        let ng = self.ng(a);
        self.push(out, Op::Clamp(a, lo, hi), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start + len > c {
            return Err(Error::config(format!("slice_cols {start}+{len} exceeds {c} columns")));
        }
        let src = self.value(a);
        let mut out = Matrix::zeros(r, len);
        for i in 0..r {
            out.row_mut(i).copy_from_slice(&src.row(i)[start..start + len]);
        }
        let ng = self.ng(a);
        Ok(self.push(out, Op::SliceCols(a, start), ng))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start + len > r {
            return Err(Error::config(format!("slice_rows {start}+{len} exceeds {r} rows")));
        }
        let data = self.value(a).data()[start * c..(start + len) * c].to_vec();
        let out = Matrix::from_vec(len, c, data)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::SliceRows(a, start), ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&p| self.shape(p).0)
            .ok_or_else(|| Error::config("concat_cols of nothing"))?;
        if parts.iter().any(|&p| self.shape(p).0 != rows) {
            return Err(Error::config("concat_cols: row counts differ"));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts
            .first()
            .map(|&p| self.shape(p).1)
            .ok_or_else(|| Error::config("concat_rows of nothing"))?;
        if parts.iter().any(|&p| self.shape(p).1 != cols) {
            return Err(Error::config("concat_rows: column counts differ"));
        }
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
            rows += self.shape(p).0;
        }
        let out = Matrix::from_vec(rows, cols, data)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), ng))
    }

    /// `out[r] = table[indices[r]]` (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, indices: Rc<[usize]>) -> Result<Var> {
        let (n, c) = self.shape(table);
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::Capacity(format!("row index {bad} outside table of {n} rows")));
        }
        let src = self.value(table);
        let mut out = Matrix::zeros(indices.len(), c);
        for (r, &i) in indices.iter().enumerate() {
            out.row_mut(r).copy_from_slice(src.row(i));
        }
        let ng = self.ng(table);
        Ok(self.push(out, Op::GatherRows(table, indices), ng))
    }

    /// `out[r, 0] = a[r, cols[r]]`.
    pub fn pick_cols(&mut self, a: Var, cols: Rc<[usize]>) -> Result<Var> {
        let (r, c) = self.shape(a);
        if cols.len() != r || cols.iter().any(|&j| j >= c) {
            return Err(Error::config("pick_cols: index list does not match rows/columns"));
        }
        let src = self.value(a);
        let data = cols.iter().enumerate().map(|(i, &j)| src.get(i, j)).collect();
        let out = Matrix::from_vec(r, 1, data)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::PickCols(a, cols), ng))
    }

    /// Row-wise softmax over entries where `mask` is true; masked entries
    /// are exactly 0. A row with no unmasked entry is an error.
    pub fn masked_softmax(&mut self, a: Var, mask: Rc<[bool]>) -> Result<Var> {
        let (r, c) = self.shape(a);
        if mask.len() != r * c {
            return Err(Error::config("masked_softmax: mask size mismatch"));
        }
        let out = masked_softmax_rows(self.value(a), &mask)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::MaskedSoftmax(a), ng))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        if !src.all_finite() {
            return Err(Error::Numerical("non-finite logit".into()));
        }
        let mut out = src.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|x| *x -= lse);
        }
        let ng = self.ng(a);
        Ok(self.push(out, Op::LogSoftmax(a), ng))
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let data: Vec<f64> = (0..src.rows()).map(|r| src.row(r).iter().sum()).collect();
        let out = Matrix::from_vec(data.len(), 1, data).expect("sized");
        let ng = self.ng(a);
        self.push(out, Op::RowSum(a), ng)
    }

    /// `Σ w_i a_i` over all entries, as a `1 x 1` node.
    pub fn weighted_sum(&mut self, a: Var, weights: Rc<[f64]>) -> Result<Var> {
        let src = self.value(a);
        if weights.len() != src.len() {
            return Err(Error::config("weighted_sum: weight count mismatch"));
        }
        let s: f64 = src.data().iter().zip(weights.iter()).map(|(x, w)| x * w).sum();
        let ng = self.ng(a);
        Ok(self.push(Matrix::filled(1, 1, s), Op::WeightedSum(a, weights), ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        self.weighted_sum(a, vec![1.0; n].into()).expect("sized")
    }

    /// Accumulates `∂loss/∂θ` into `grads` for every reachable parameter.
    pub fn backward_into(&mut self, loss: Var, grads: &mut Grads) -> Result<()> {
        if self.backward_done {
            return Err(Error::contract("backward already ran on this tape; rebuild the forward pass"));
        }
        if self.shape(loss) != (1, 1) {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if grads.0.len() != self.store.len() {
            return Err(Error::contract("gradient buffer belongs to a different store"));
        }
        self.backward_done = true;

        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            self.propagate(idx, g, &mut adj, grads);
        }
        Ok(())
    }

    /// Convenience wrapper that accumulates straight into the store.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let mut grads = Grads::zeros_like(self.store);
        self.backward_into(loss, &mut grads)?;
        store.accumulate(&grads)
    }

    fn propagate(&self, idx: usize, g: Matrix, adj: &mut [Option<Matrix>], grads: &mut Grads) {
        let send = |v: Var, m: Matrix, adj: &mut [Option<Matrix>]| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(acc) => acc.axpy(1.0, &m),
                slot @ None => *slot = Some(m),
            }
        };
        let value = |v: Var| self.value(v);

        match &self.nodes[idx].op {
            Op::Constant => {}
            Op::Param(id) => grads.0[id.0].axpy(1.0, &g),
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    send(*a, g.matmul_nt(value(*b)), adj);
                }
                if self.ng(*b) {
                    send(*b, value(*a).matmul_tn(&g), adj);
                }
            }
            Op::MatMulNt(a, b) => {
                if self.ng(*a) {
                    send(*a, g.matmul(value(*b)), adj);
                }
                if self.ng(*b) {
                    send(*b, g.matmul_tn(value(*a)), adj);
                }
            }
            Op::AddRow(a, b) => {
                if self.ng(*b) {
                    let mut acc = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        acc.data_mut().iter_mut().zip(g.row(r)).for_each(|(x, y)| *x += y);
                    }
                    send(*b, acc, adj);
                }
                send(*a, g, adj);
            }
            Op::Add(a, b) => {
                send(*b, g.clone(), adj);
                send(*a, g, adj);
            }
            Op::Sub(a, b) => {
                send(*b, g.map(|x| -x), adj);
                send(*a, g, adj);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (value(*a), value(*b));
                if self.ng(*a) {
                    send(*a, g.zip_map(vb, |x, y| x * y), adj);
                }
                if self.ng(*b) {
                    send(*b, g.zip_map(va, |x, y| x * y), adj);
                }
            }
            Op::Min(a, b) => {
                let (va, vb) = (value(*a), value(*b));
                let pick_a = va.zip_map(vb, |x, y| if x <= y { 1.0 } else { 0.0 });
                send(*a, g.zip_map(&pick_a, |x, m| x * m), adj);
                send(*b, g.zip_map(&pick_a, |x, m| x * (1.0 - m)), adj);
            }
            Op::Scale(a, f) => send(*a, g.map(|x| x * f), adj),
            Op::Tanh(a) => {
                let y = self.value(Var(idx));
                send(*a, g.zip_map(y, |x, t| x * (1.0 - t * t)), adj);
            }
            Op::Exp(a) => {
                let y = self.value(Var(idx));
                send(*a, g.zip_map(y, |x, e| x * e), adj);
            }
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                let x = value(*a);
                send(*a, g.zip_map(x, |d, v| if v >= lo && v <= hi { d } else { 0.0 }), adj);
            }
            Op::SliceCols(a, start) => {
                let (r, c) = self.shape(*a);
                let mut out = Matrix::zeros(r, c);
                for i in 0..r {
                    out.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                }
                send(*a, out, adj);
            }
            Op::SliceRows(a, start) => {
                let (r, c) = self.shape(*a);
                let mut out = Matrix::zeros(r, c);
                out.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                send(*a, out, adj);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if self.ng(p) {
                        let mut out = Matrix::zeros(r, c);
                        for i in 0..r {
                            out.row_mut(i).copy_from_slice(&g.row(i)[off..off + c]);
                        }
                        send(p, out, adj);
                    }
                    off += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if self.ng(p) {
                        let data = g.data()[off * c..(off + r) * c].to_vec();
                        send(p, Matrix::from_vec(r, c, data).expect("sized"), adj);
                    }
                    off += r;
                }
            }
            Op::GatherRows(table, indices) => {
                let (n, c) = self.shape(*table);
                let mut out = Matrix::zeros(n, c);
                for (r, &i) in indices.iter().enumerate() {
                    out.row_mut(i).iter_mut().zip(g.row(r)).for_each(|(x, y)| *x += y);
                }
                send(*table, out, adj);
            }
            Op::PickCols(a, cols) => {
                let (r, c) = self.shape(*a);
                let mut out = Matrix::zeros(r, c);
                for (i, &j) in cols.iter().enumerate() {
                    out.set(i, j, g.get(i, 0));
                }
                send(*a, out, adj);
            }
            Op::MaskedSoftmax(a) => {
                let p = self.value(Var(idx));
                let mut out = Matrix::zeros(p.rows(), p.cols());
                for r in 0..p.rows() {
                    let (pr, gr) = (p.row(r), g.row(r));
                    let dot: f64 = pr.iter().zip(gr).map(|(x, y)| x * y).sum();
                    out.row_mut(r)
                        .iter_mut()
                        .zip(pr.iter().zip(gr))
                        .for_each(|(o, (pi, gi))| *o = pi * (gi - dot));
                }
                send(*a, out, adj);
            }
            Op::LogSoftmax(a) => {
                let y = self.value(Var(idx));
                let mut out = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let gs: f64 = g.row(r).iter().sum();
                    out.row_mut(r)
                        .iter_mut()
                        .zip(y.row(r).iter().zip(g.row(r)))
                        .for_each(|(o, (ly, gi))| *o = gi - ly.exp() * gs);
                }
                send(*a, out, adj);
            }
            Op::RowSum(a) => {
                let (r, c) = self.shape(*a);
                let mut out = Matrix::zeros(r, c);
                for i in 0..r {
                    let gi = g.get(i, 0);
                    out.row_mut(i).iter_mut().for_each(|x| *x = gi);
                }
                send(*a, out, adj);
            }
            Op::WeightedSum(a, w) => {
                let (r, c) = self.shape(*a);
                let g0 = g.data()[0];
                let data = w.iter().map(|wi| wi * g0).collect();
                send(*a, Matrix::from_vec(r, c, data).expect("sized"), adj);
            }
        }
    }
}

/// Accumulating form of `gemm` exposed to the layer code for inference.
pub(crate) fn matmul_acc(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    gemm(a, false, b, false, out, true);
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = row.iter().map(|x| (x - max).exp()).sum();
    max + s.ln()
}

pub(crate) fn masked_softmax_rows(src: &Matrix, mask: &[bool]) -> Result<Matrix> {
    let (r, c) = src.shape();
    let mut out = Matrix::zeros(r, c);
    for i in 0..r {
        let row = src.row(i);
        let m = &mask[i * c..(i + 1) * c];
        let max = row
            .iter()
            .zip(m)
            .filter(|(_, &keep)| keep)
            .map(|(&x, _)| x)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::NoAttendableInput);
        }
        if !max.is_finite() {
            return Err(Error::Numerical("non-finite attention score".into()));
        }
        let dst = out.row_mut(i);
        let mut total = 0.0;
        for j in 0..c {
            if m[j] {
                let e = (row[j] - max).exp();
                dst[j] = e;
                total += e;
            }
        }
        dst.iter_mut().for_each(|x| *x /= total);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_loss_leaves_grads_zero() {
        let mut store = ParamStore::new();
        let id = store.add("p", Matrix::row_vector(&[1.0, 2.0])).unwrap();
        let mut tape = Tape::new(&store);
        let c = tape.constant(Matrix::filled(1, 1, 3.0));
        let mut grads = Grads::zeros_like(&store);
        tape.backward_into(c, &mut grads).unwrap();
        assert!(grads.get(id).data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn sum_of_squares_gives_twice_the_value() {
        let mut store = ParamStore::new();
        let id = store.add("p", Matrix::row_vector(&[1.5, -2.0, 0.25])).unwrap();
        let mut grads = Grads::zeros_like(&store);
        {
            let mut tape = Tape::new(&store);
            let p = tape.param(id);
            let sq = tape.mul(p, p).unwrap();
            let loss = tape.sum(sq);
            tape.backward_into(loss, &mut grads).unwrap();
        }
        assert_eq!(grads.get(id).data(), &[3.0, -4.0, 0.5]);
    }

    #[test]
    fn backward_twice_is_rejected() {
        let mut store = ParamStore::new();
        let id = store.add("p", Matrix::row_vector(&[1.0])).unwrap();
        let snapshot = store.clone();
        let mut tape = Tape::new(&snapshot);
        let p = tape.param(id);
        let loss = tape.sum(p);
        tape.backward(loss, &mut store).unwrap();
        assert!(matches!(tape.backward(loss, &mut store), Err(Error::Contract(_))));
        assert_eq!(store.grad(id).data(), &[1.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let v = tape.constant(Matrix::zeros(2, 1));
        let mut grads = Grads::zeros_like(&store);
        assert!(matches!(tape.backward_into(v, &mut grads), Err(Error::Contract(_))));
    }

    #[test]
    fn fully_masked_row_has_nothing_to_attend() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let s = tape.constant(Matrix::zeros(1, 2));
        let err = tape.masked_softmax(s, vec![false, false].into()).unwrap_err();
        assert!(matches!(err, Error::NoAttendableInput));
    }

    #[test]
    fn log_softmax_rejects_nan() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let s = tape.constant(Matrix::row_vector(&[0.0, f64::NAN]));
        assert!(matches!(tape.log_softmax(s), Err(Error::Numerical(_))));
    }
}
