//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records each operation as it is evaluated. [`Tape::backward`]
//! walks the record in reverse and accumulates gradients into every
//! parameter leaf. The op set is the one the motif models need; it is not a
//! general autodiff engine.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Named trainable tensors. Order of registration is the order of gradients
/// and optimizer state.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Row-normalized sparse weights for neighbor aggregation:
/// `out[i] = sum_j w_ij * x[j]`.
#[derive(Debug, Clone, Default)]
pub struct Adjacency {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Adjacency {
    /// Mean over each node's neighbor list; an empty list yields a zero row.
    pub fn mean(neighbors: &[Vec<usize>]) -> Self {
        let rows = neighbors
            .iter()
            .map(|nb| {
                let w = if nb.is_empty() { 0.0 } else { 1.0 / nb.len() as f64 };
                nb.iter().map(|&j| (j, w)).collect()
            })
            .collect();
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

enum Op {
    Leaf,
    Param(ParamId),
    Linear { x: Var, w: Var, b: Var },
    Relu(Var),
    Sigmoid(Var),
    Dropout { x: Var, mask: Vec<f64> },
    Aggregate { x: Var, adj: Arc<Adjacency> },
    Concat(Var, Var),
    Gather { x: Var, idx: Vec<usize> },
    Mul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Affine { x: Var, scale: f64 },
    Clamp { x: Var, lo: f64, hi: f64 },
    Log(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

pub struct Tape<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every parameter of the store.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    /// Gradients aligned with a store's registration order.
    pub fn from_tensors(grads: Vec<Tensor>) -> Self {
        Self { grads }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

fn check(value: Tensor, what: &str) -> Result<Tensor> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        let value = check(value, "constant")?;
        Ok(self.push(value, Op::Leaf))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.push(self.store.get(id).clone(), Op::Param(id))
    }

    /// `x W^T + b` for `x: [n, in]`, `W: [out, in]`, `b: [1, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (n, din) = (xv.rows(), xv.cols());
        let dout = wv.rows();
        if wv.cols() != din || bv.len() != dout {
            return Err(Error::Shape(format!(
                "linear: input [{n}, {din}] with weight {:?} and bias {:?}",
                wv.shape(),
                bv.shape()
            )));
        }
        let (xd, wd, bd) = (xv.data(), wv.data(), bv.data());
        let mut out = vec![0.0; n * dout];
        for r in 0..n {
            let xr = &xd[r * din..(r + 1) * din];
            for o in 0..dout {
                let wr = &wd[o * din..(o + 1) * din];
                out[r * dout + o] = bd[o] + xr.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let value = check(Tensor::matrix(n, dout, out)?, "linear")?;
        Ok(self.push(value, Op::Linear { x, w, b }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        self.push(value, Op::Sigmoid(x))
    }

    /// Inverted dropout: survivors are scaled by `1 / (1 - rate)`. Without a
    /// generator (evaluation mode) or at rate 0 this is the identity and
    /// records nothing.
    pub fn dropout(&mut self, x: Var, rate: f64, rng: Option<&mut Rng>) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidConfig(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        let Some(rng) = rng else { return Ok(x) };
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let mut value = self.value(x).clone();
        value.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        Ok(self.push(value, Op::Dropout { x, mask }))
    }

    pub fn aggregate(&mut self, x: Var, adj: Arc<Adjacency>) -> Result<Var> {
        let xv = self.value(x);
        if adj.len() != xv.rows() {
            return Err(Error::Shape(format!(
                "aggregate: {} adjacency rows for {} nodes",
                adj.len(),
                xv.rows()
            )));
        }
        let c = xv.cols();
        let mut out = Tensor::zeros(xv.rows(), c);
        for (i, row) in adj.rows.iter().enumerate() {
            for &(j, w) in row {
                let src = xv.row_slice(j);
                let dst = &mut out.data_mut()[i * c..(i + 1) * c];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += w * s);
            }
        }
        Ok(self.push(out, Op::Aggregate { x, adj }))
    }

    /// Column-wise concatenation `[a | b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(Error::Shape(format!("concat: {} rows vs {}", av.rows(), bv.rows())));
        }
        let (n, ca, cb) = (av.rows(), av.cols(), bv.cols());
        let mut out = Vec::with_capacity(n * (ca + cb));
        for r in 0..n {
            out.extend_from_slice(av.row_slice(r));
            out.extend_from_slice(bv.row_slice(r));
        }
        let value = Tensor::matrix(n, ca + cb, out)?;
        Ok(self.push(value, Op::Concat(a, b)))
    }

    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= xv.rows()) {
            return Err(Error::Shape(format!("gather: row {bad} of {}", xv.rows())));
        }
        if idx.is_empty() {
            return Err(Error::Shape("gather: empty index".into()));
        }
        let mut out = Vec::with_capacity(idx.len() * xv.cols());
        for &i in idx {
            out.extend_from_slice(xv.row_slice(i));
        }
        let value = Tensor::matrix(idx.len(), xv.cols(), out)?;
        Ok(self.push(value, Op::Gather { x, idx: idx.to_vec() }))
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.same_shape(bv) {
            return Err(Error::Shape(format!("{name}: {:?} vs {:?}", av.shape(), bv.shape())));
        }
        check(av.zip_map(bv, f), name)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(x).map(|v| scale * v + shift);
        self.push(value, Op::Affine { x, scale })
    }

    /// Elementwise clamp; the gradient is zero where the input was clipped.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(x).map(|v| v.clamp(lo, hi));
        self.push(value, Op::Clamp { x, lo, hi })
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let value = check(self.value(x).map(f64::ln), "log")?;
        Ok(self.push(value, Op::Log(x)))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        self.push(value, Op::Square(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).data().iter().sum());
        self.push(value, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let value = Tensor::scalar(v.data().iter().sum::<f64>() / v.len() as f64);
        self.push(value, Op::Mean(x))
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let Some(node) = self.nodes.get(loss.0) else {
            return Err(Error::Shape("backward: no recorded forward pass for this value".into()));
        };
        if node.value.len() != 1 {
            return Err(Error::Shape(format!("backward needs a scalar, got {:?}", node.value.shape())));
        }
        if !node.value.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out: Vec<Tensor> = self
            .store
            .ids()
            .map(|id| self.store.get(id).zeros_like())
            .collect();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let mut acc = |v: Var, delta: Tensor| match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out[id.0].add_assign(&g),
                Op::Linear { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (n, din, dout) = (xv.rows(), xv.cols(), wv.rows());
                    let (gd, xd, wd) = (g.data(), xv.data(), wv.data());
                    let mut dx = vec![0.0; n * din];
                    let mut dw = vec![0.0; dout * din];
                    let mut db = vec![0.0; dout];
                    for r in 0..n {
                        for o in 0..dout {
                            let go = gd[r * dout + o];
                            if go == 0.0 {
                                continue;
                            }
                            db[o] += go;
                            for k in 0..din {
                                dx[r * din + k] += go * wd[o * din + k];
                                dw[o * din + k] += go * xd[r * din + k];
                            }
                        }
                    }
                    let bshape = self.value(*b).shape().to_vec();
                    acc(*x, Tensor::new(xv.shape().to_vec(), dx)?);
                    acc(*w, Tensor::new(wv.shape().to_vec(), dw)?);
                    acc(*b, Tensor::new(bshape, db)?);
                }
                Op::Relu(x) => {
                    let d = self.value(*x).zip_map(&g, |v, gv| if v > 0.0 { gv } else { 0.0 });
                    acc(*x, d);
                }
                Op::Sigmoid(x) => {
                    let d = node.value.zip_map(&g, |s, gv| gv * s * (1.0 - s));
                    acc(*x, d);
                }
                Op::Dropout { x, mask } => {
                    let mut d = g;
                    d.data_mut().iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
                    acc(*x, d);
                }
                Op::Aggregate { x, adj } => {
                    let xv = self.value(*x);
                    let c = xv.cols();
                    let mut d = xv.zeros_like();
                    for (r, row) in adj.rows.iter().enumerate() {
                        let gr = &g.data()[r * c..(r + 1) * c];
                        for &(j, w) in row {
                            let dst = &mut d.data_mut()[j * c..(j + 1) * c];
                            dst.iter_mut().zip(gr).for_each(|(dv, gv)| *dv += w * gv);
                        }
                    }
                    acc(*x, d);
                }
                Op::Concat(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (ca, cb) = (av.cols(), bv.cols());
                    let mut da = Vec::with_capacity(av.len());
                    let mut db = Vec::with_capacity(bv.len());
                    for r in 0..av.rows() {
                        let gr = g.row_slice(r);
                        da.extend_from_slice(&gr[..ca]);
                        db.extend_from_slice(&gr[ca..ca + cb]);
                    }
                    let (sa, sb) = (av.shape().to_vec(), bv.shape().to_vec());
                    acc(*a, Tensor::new(sa, da)?);
                    acc(*b, Tensor::new(sb, db)?);
                }
                Op::Gather { x, idx } => {
                    let xv = self.value(*x);
                    let c = xv.cols();
                    let mut d = xv.zeros_like();
                    for (r, &i) in idx.iter().enumerate() {
                        let gr = g.row_slice(r);
                        let dst = &mut d.data_mut()[i * c..(i + 1) * c];
                        dst.iter_mut().zip(gr).for_each(|(dv, gv)| *dv += gv);
                    }
                    acc(*x, d);
                }
                Op::Mul(a, b) => {
                    let da = self.value(*b).zip_map(&g, |v, gv| v * gv);
                    let db = self.value(*a).zip_map(&g, |v, gv| v * gv);
                    acc(*a, da);
                    acc(*b, db);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.map(|v| -v));
                    acc(*a, g);
                }
                Op::Affine { x, scale } => acc(*x, g.map(|v| v * scale)),
                Op::Clamp { x, lo, hi } => {
                    let d = self
                        .value(*x)
                        .zip_map(&g, |v, gv| if v < *lo || v > *hi { 0.0 } else { gv });
                    acc(*x, d);
                }
                Op::Log(x) => acc(*x, self.value(*x).zip_map(&g, |v, gv| gv / v)),
                Op::Square(x) => acc(*x, self.value(*x).zip_map(&g, |v, gv| 2.0 * v * gv)),
                Op::Sum(x) => {
                    let gv = g.data()[0];
                    acc(*x, self.value(*x).map(|_| gv));
                }
                Op::Mean(x) => {
                    let xv = self.value(*x);
                    let gv = g.data()[0] / xv.len() as f64;
                    acc(*x, xv.map(|_| gv));
                }
            }
        }
        for (id, g) in out.iter().enumerate() {
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", self.store.name(ParamId(id)))));
            }
        }
        Ok(Gradients { grads: out })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
