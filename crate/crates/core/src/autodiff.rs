//! Tape-based reverse-mode differentiation over [`Tensor2`] values.
//!
//! A [`Graph`] records every operation eagerly: values are available as soon
//! as an op is pushed, which lets rollouts make decisions on forward values
//! while the same tape later yields gradients for the episode loss.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{dot, Tensor2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var, usize),
    Tanh(Var),
    RowSoftmax(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Transpose(Var),
    MeanRows(Var),
    GatherRows(Var, Vec<usize>),
    GatherCols(Var, Vec<usize>),
    Sum(Var),
    NegLogPick { p: Var, row: usize, col: usize, floor: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor2,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
    param_index: HashMap<String, Var>,
}

/// Gradients of one scalar output with respect to every node on the tape.
pub struct Gradients {
    grads: Vec<Option<Tensor2>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor2> {
        self.grads[v.0].as_ref()
    }
}

fn shape_err(op: &'static str, a: &Tensor2, b: &Tensor2) -> Error {
    Error::Shape {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

fn accumulate(slot: &mut Option<Tensor2>, delta: Tensor2) {
    match slot {
        Some(g) => g.add_assign(&delta),
        None => *slot = Some(delta),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor2, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, t: Tensor2) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Binds a stored parameter as a leaf; repeated calls share one leaf.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.param_index.get(name) {
            return Ok(v);
        }
        let value = store.value(name)?.clone();
        let v = self.push(value, Op::Leaf);
        self.params.push((name.to_string(), v));
        self.param_index.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).matmul(self.value(b))?;
        Ok(self.push(y, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(y, Op::MatMulT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("add", va, vb));
        }
        let mut y = va.clone();
        y.add_assign(vb);
        Ok(self.push(y, Op::Add(a, b)))
    }

    /// Adds a `1 × c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(shape_err("add_row", va, vr));
        }
        let mut y = va.clone();
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(vr.data()) {
                *v += b;
            }
        }
        Ok(self.push(y, Op::AddRow(a, row)))
    }

    /// Multiplies every row of `a` elementwise by a `1 × c` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(shape_err("mul_row", va, vr));
        }
        let mut y = va.clone();
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(vr.data()) {
                *v *= b;
            }
        }
        Ok(self.push(y, Op::MulRow(a, row)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("mul", va, vb));
        }
        let mut y = va.clone();
        for (v, w) in y.data_mut().iter_mut().zip(vb.data()) {
            *v *= w;
        }
        Ok(self.push(y, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let y = self.value(a).scale(s);
        self.push(y, Op::Scale(a, s))
    }

    /// `weights[0, index] · x`, differentiable in both.
    pub fn scale_by(&mut self, x: Var, weights: Var, index: usize) -> Result<Var> {
        let w = self.value(weights);
        if w.rows() != 1 || index >= w.cols() {
            return Err(Error::Index {
                what: "scale_by weight",
                index,
                limit: w.cols(),
            });
        }
        let y = self.value(x).scale(w.get(0, index));
        Ok(self.push(y, Op::ScaleBy(x, weights, index)))
    }

    pub fn affine(&mut self, x: Var, weights: Var, bias: Var) -> Result<Var> {
        let xw = self.matmul(x, weights)?;
        self.add_row(xw, bias)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let y = self.value(a).map(f64::tanh);
        self.push(y, Op::Tanh(a))
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let y = self.value(a).row_softmax()?;
        Ok(self.push(y, Op::RowSoftmax(a)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::Empty("concat_rows"))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(shape_err("concat_rows", self.value(*first), v));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let y = Tensor2::from_vec(rows, cols, data)?;
        Ok(self.push(y, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::Empty("concat_cols"))?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(shape_err("concat_cols", self.value(*first), v));
            }
            cols += v.cols();
        }
        let mut y = Tensor2::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let v = self.value(p);
                y.row_mut(r)[offset..offset + v.cols()].copy_from_slice(v.row(r));
                offset += v.cols();
            }
        }
        Ok(self.push(y, Op::ConcatCols(parts.to_vec())))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let y = self.value(a).transpose();
        self.push(y, Op::Transpose(a))
    }

    /// Column means, as a `1 × c` row.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if v.rows() == 0 {
            return Err(Error::Empty("mean_rows"));
        }
        let mut y = Tensor2::zeros(1, v.cols());
        for r in 0..v.rows() {
            for (o, x) in y.data_mut().iter_mut().zip(v.row(r)) {
                *o += x;
            }
        }
        let n = v.rows() as f64;
        y.data_mut().iter_mut().for_each(|o| *o /= n);
        Ok(self.push(y, Op::MeanRows(a)))
    }

    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let mut y = Tensor2::zeros(indices.len(), t.cols());
        for (i, &idx) in indices.iter().enumerate() {
            if idx >= t.rows() {
                return Err(Error::Index {
                    what: "gather_rows",
                    index: idx,
                    limit: t.rows(),
                });
            }
            y.row_mut(i).copy_from_slice(t.row(idx));
        }
        Ok(self.push(y, Op::GatherRows(table, indices.to_vec())))
    }

    pub fn gather_cols(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let mut y = Tensor2::zeros(t.rows(), indices.len());
        for (j, &idx) in indices.iter().enumerate() {
            if idx >= t.cols() {
                return Err(Error::Index {
                    what: "gather_cols",
                    index: idx,
                    limit: t.cols(),
                });
            }
            for r in 0..t.rows() {
                y.set(r, j, t.get(r, idx));
            }
        }
        Ok(self.push(y, Op::GatherCols(x, indices.to_vec())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let y = Tensor2::scalar(self.value(a).sum());
        self.push(y, Op::Sum(a))
    }

    /// Sum of several scalars (an empty list gives a zero constant).
    pub fn add_scalars(&mut self, terms: &[Var]) -> Result<Var> {
        let mut iter = terms.iter();
        let Some(&first) = iter.next() else {
            return Ok(self.constant(Tensor2::scalar(0.0)));
        };
        iter.try_fold(first, |acc, &t| self.add(acc, t))
    }

    /// `-ln(max(p[row, col], floor))`; the gradient is zero below the floor.
    pub fn neg_log_pick(&mut self, p: Var, row: usize, col: usize, floor: f64) -> Result<Var> {
        let v = self.value(p);
        if row >= v.rows() || col >= v.cols() {
            return Err(Error::Index {
                what: "neg_log_pick",
                index: row * v.cols() + col,
                limit: v.rows() * v.cols(),
            });
        }
        let y = Tensor2::scalar(-v.get(row, col).max(floor).ln());
        Ok(self.push(y, Op::NegLogPick { p, row, col, floor }))
    }

    /// Reverse sweep from a `1 × 1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).shape() != (1, 1) {
            return Err(Error::contract("backward requires a scalar output"));
        }
        let mut grads: Vec<Option<Tensor2>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor2::scalar(1.0));
        for idx in (0..=output.0).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &gy, &mut grads)?;
            grads[idx] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, gy: &Tensor2, grads: &mut [Option<Tensor2>]) -> Result<()> {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                accumulate(&mut grads[a.0], gy.matmul_t(val(*b))?);
                accumulate(&mut grads[b.0], val(*a).t_matmul(gy)?);
            }
            Op::MatMulT(a, b) => {
                accumulate(&mut grads[a.0], gy.matmul(val(*b))?);
                accumulate(&mut grads[b.0], gy.t_matmul(val(*a))?);
            }
            Op::Add(a, b) => {
                accumulate(&mut grads[a.0], gy.clone());
                accumulate(&mut grads[b.0], gy.clone());
            }
            Op::AddRow(a, row) => {
                accumulate(&mut grads[a.0], gy.clone());
                accumulate(&mut grads[row.0], column_sums(gy));
            }
            Op::MulRow(a, row) => {
                let (va, vr) = (val(*a), val(*row));
                let mut ga = gy.clone();
                let mut gr = Tensor2::zeros(1, vr.cols());
                for r in 0..ga.rows() {
                    for c in 0..ga.cols() {
                        gr.data_mut()[c] += gy.get(r, c) * va.get(r, c);
                        ga.set(r, c, gy.get(r, c) * vr.get(0, c));
                    }
                }
                accumulate(&mut grads[a.0], ga);
                accumulate(&mut grads[row.0], gr);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let mut ga = gy.clone();
                let mut gb = gy.clone();
                for ((g_a, g_b), (x, y)) in ga
                    .data_mut()
                    .iter_mut()
                    .zip(gb.data_mut().iter_mut())
                    .zip(va.data().iter().zip(vb.data()))
                {
                    *g_a *= y;
                    *g_b *= x;
                }
                accumulate(&mut grads[a.0], ga);
                accumulate(&mut grads[b.0], gb);
            }
            Op::Scale(a, s) => accumulate(&mut grads[a.0], gy.scale(*s)),
            Op::ScaleBy(x, w, j) => {
                let (vx, vw) = (val(*x), val(*w));
                accumulate(&mut grads[x.0], gy.scale(vw.get(0, *j)));
                let mut gw = Tensor2::zeros(1, vw.cols());
                gw.set(0, *j, dot(gy.data(), vx.data()));
                accumulate(&mut grads[w.0], gw);
            }
            Op::Tanh(a) => {
                let mut ga = gy.clone();
                for (g, y) in ga.data_mut().iter_mut().zip(node.value.data()) {
                    *g *= 1.0 - y * y;
                }
                accumulate(&mut grads[a.0], ga);
            }
            Op::RowSoftmax(a) => {
                let y = &node.value;
                let mut ga = gy.clone();
                for r in 0..y.rows() {
                    let inner = dot(gy.row(r), y.row(r));
                    for (g, s) in ga.row_mut(r).iter_mut().zip(y.row(r)) {
                        *g = s * (*g - inner);
                    }
                }
                accumulate(&mut grads[a.0], ga);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let (rows, cols) = val(*p).shape();
                    let slice = gy.data()[offset * cols..(offset + rows) * cols].to_vec();
                    accumulate(&mut grads[p.0], Tensor2::from_vec(rows, cols, slice)?);
                    offset += rows;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let (rows, cols) = val(*p).shape();
                    let mut gp = Tensor2::zeros(rows, cols);
                    for r in 0..rows {
                        gp.row_mut(r).copy_from_slice(&gy.row(r)[offset..offset + cols]);
                    }
                    accumulate(&mut grads[p.0], gp);
                    offset += cols;
                }
            }
            Op::Transpose(a) => accumulate(&mut grads[a.0], gy.transpose()),
            Op::MeanRows(a) => {
                let (rows, cols) = val(*a).shape();
                let mut ga = Tensor2::zeros(rows, cols);
                let n = rows as f64;
                for r in 0..rows {
                    for (g, y) in ga.row_mut(r).iter_mut().zip(gy.data()) {
                        *g = y / n;
                    }
                }
                accumulate(&mut grads[a.0], ga);
            }
            Op::GatherRows(table, indices) => {
                let (rows, cols) = val(*table).shape();
                let mut gt = Tensor2::zeros(rows, cols);
                for (i, &idx) in indices.iter().enumerate() {
                    for (g, y) in gt.row_mut(idx).iter_mut().zip(gy.row(i)) {
                        *g += y;
                    }
                }
                accumulate(&mut grads[table.0], gt);
            }
            Op::GatherCols(x, indices) => {
                let (rows, cols) = val(*x).shape();
                let mut gx = Tensor2::zeros(rows, cols);
                for (j, &idx) in indices.iter().enumerate() {
                    for r in 0..rows {
                        let cur = gx.get(r, idx);
                        gx.set(r, idx, cur + gy.get(r, j));
                    }
                }
                accumulate(&mut grads[x.0], gx);
            }
            Op::Sum(a) => {
                let (rows, cols) = val(*a).shape();
                accumulate(&mut grads[a.0], Tensor2::filled(rows, cols, gy.item()));
            }
            Op::NegLogPick { p, row, col, floor } => {
                let vp = val(*p);
                let (rows, cols) = vp.shape();
                let mut gp = Tensor2::zeros(rows, cols);
                let pv = vp.get(*row, *col);
                if pv > *floor {
                    gp.set(*row, *col, -gy.item() / pv);
                }
                accumulate(&mut grads[p.0], gp);
            }
        }
        Ok(())
    }

    /// Gradients of every bound parameter, in binding order.
    pub fn param_gradients(&self, grads: &Gradients) -> Vec<(String, Tensor2)> {
        self.params
            .iter()
            .filter_map(|(name, v)| grads.wrt(*v).map(|g| (name.clone(), g.clone())))
            .collect()
    }

    pub fn bound_params(&self) -> impl Iterator<Item = (&str, Var)> {
        self.params.iter().map(|(n, v)| (n.as_str(), *v))
    }
}

fn column_sums(t: &Tensor2) -> Tensor2 {
    let mut out = Tensor2::zeros(1, t.cols());
    for r in 0..t.rows() {
        for (o, v) in out.data_mut().iter_mut().zip(t.row(r)) {
            *o += v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_gradients_by_hand() {
        let mut g = Graph::new();
        let a = g.constant(Tensor2::from_rows(&[[1.0, 2.0]]));
        let b = g.constant(Tensor2::from_rows(&[[3.0], [4.0]]));
        let y = g.matmul(a, b).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.wrt(a).unwrap().data(), &[3.0, 4.0]);
        assert_eq!(grads.wrt(b).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn shared_use_accumulates() {
        let mut g = Graph::new();
        let a = g.constant(Tensor2::scalar(3.0));
        let y = g.mul(a, a).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.wrt(a).unwrap().item(), 6.0);
    }

    #[test]
    fn neg_log_pick_is_floored() {
        let mut g = Graph::new();
        let p = g.constant(Tensor2::row_vector(&[0.0, 1.0]));
        let y = g.neg_log_pick(p, 0, 0, 1e-12).unwrap();
        assert!((g.value(y).item() - 1e12f64.ln()).abs() < 1e-9);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.wrt(p).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_needs_scalar() {
        let mut g = Graph::new();
        let a = g.constant(Tensor2::zeros(2, 2));
        assert!(g.backward(a).is_err());
    }
}
