//! Reverse-mode tape over dense 2-D tensors.

use std::collections::HashMap;
use std::rc::Rc;

use super::params::ParamSet;
use super::tensor::{axpy, dot, sorted_sum, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq)]
enum Unary {
    Tanh,
    Relu,
    Exp,
    Log,
    Softplus,
    Square,
    Sigmoid,
    /// `c * tanh(x / c)`
    SoftClamp(f64),
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    Linear { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    MulConst(Var, usize),
    AddConst(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Unary(Var, Unary),
    SumAll(Var),
    SumCols(Var),
    LogSumExpCols(Var),
    LogSoftmaxCols(Var),
    SegmentSum(Var, Rc<[usize]>),
    SegmentSoftmax(Var, Rc<[usize]>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Rc<[Option<usize>]>),
    Reshape(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations and computes gradients by reverse accumulation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    consts: Vec<Tensor>,
    params: HashMap<usize, Var>,
    grads: Vec<Option<Tensor>>,
}

fn shape_err(what: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::ShapeMismatch(format!("{what}: {}x{} vs {}x{}", a.0, a.1, b.0, b.1))
}

fn softplus(x: f64) -> f64 {
    crate::scm::expr::softplus(x)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; no gradient is tracked.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Input whose gradient is wanted after [`Graph::backward`].
    pub fn input_with_grad(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Parameter `id` of `ps`; repeated requests return the same node.
    pub fn param(&mut self, ps: &ParamSet, id: usize) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(ps.value(id).clone(), Op::Param, true);
        self.params.insert(id, v);
        v
    }

    /// `x · wᵀ + b` with `w` stored as `out × in`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.cols != wv.cols {
            return Err(shape_err("linear", xv.shape(), wv.shape()));
        }
        let (n, out) = (xv.rows, wv.rows);
        let mut y = Tensor::zeros(n, out);
        for r in 0..n {
            let xr = xv.row(r);
            let yr = y.row_mut(r);
            for (o, yo) in yr.iter_mut().enumerate() {
                *yo = dot(xr, wv.row(o));
            }
        }
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.shape() != (1, out) {
                return Err(shape_err("bias", bv.shape(), (1, out)));
            }
            for r in 0..n {
                for (yo, bo) in y.row_mut(r).iter_mut().zip(&bv.data) {
                    *yo += bo;
                }
            }
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(y, Op::Linear { x, w, b }, rg))
    }

    fn binary(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(what, av.shape(), bv.shape()));
        }
        let data = av.data.iter().zip(&bv.data).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor {
            rows: av.rows,
            cols: av.cols,
            data,
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "div", |x, y| x / y, Op::Div(a, b))
    }

    /// Elementwise product with a constant tensor (e.g. an input mask).
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        let av = self.value(a);
        if av.shape() != c.shape() {
            return Err(shape_err("mul_const", av.shape(), c.shape()));
        }
        let data = av.data.iter().zip(&c.data).map(|(x, y)| x * y).collect();
        let t = Tensor {
            rows: av.rows,
            cols: av.cols,
            data,
        };
        self.consts.push(c);
        let rg = self.rg(a);
        Ok(self.push(t, Op::MulConst(a, self.consts.len() - 1), rg))
    }

    pub fn add_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        let av = self.value(a);
        if av.shape() != c.shape() {
            return Err(shape_err("add_const", av.shape(), c.shape()));
        }
        let data = av.data.iter().zip(&c.data).map(|(x, y)| x + y).collect();
        let t = Tensor {
            rows: av.rows,
            cols: av.cols,
            data,
        };
        let rg = self.rg(a);
        Ok(self.push(t, Op::AddConst(a), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(t, Op::Scale(a, s), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a).map(|x| x + s);
        let rg = self.rg(a);
        self.push(t, Op::AddScalar(a), rg)
    }

    fn unary(&mut self, a: Var, u: Unary) -> Var {
        let f: Box<dyn Fn(f64) -> f64> = match u {
            Unary::Tanh => Box::new(f64::tanh),
            Unary::Relu => Box::new(|x: f64| x.max(0.0)),
            Unary::Exp => Box::new(f64::exp),
            Unary::Log => Box::new(f64::ln),
            Unary::Softplus => Box::new(softplus),
            Unary::Square => Box::new(|x| x * x),
            Unary::Sigmoid => Box::new(sigmoid),
            Unary::SoftClamp(c) => Box::new(move |x: f64| c * (x / c).tanh()),
        };
        let t = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(t, Op::Unary(a, u), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Relu)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Log)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Softplus)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Square)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sigmoid)
    }

    /// `c · tanh(x / c)`: smooth clamp to `(-c, c)`.
    pub fn soft_clamp(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Unary::SoftClamp(c))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::SumAll(a), rg)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Row sums, `r × 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = (0..av.rows).map(|r| av.row(r).iter().sum()).collect();
        let t = Tensor {
            rows: av.rows,
            cols: 1,
            data,
        };
        let rg = self.rg(a);
        self.push(t, Op::SumCols(a), rg)
    }

    /// Row-wise log-sum-exp, `r × 1`.
    pub fn logsumexp_cols(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = (0..av.rows).map(|r| logsumexp(av.row(r))).collect();
        let t = Tensor {
            rows: av.rows,
            cols: 1,
            data,
        };
        let rg = self.rg(a);
        self.push(t, Op::LogSumExpCols(a), rg)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax_cols(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut t = av.clone();
        for r in 0..t.rows {
            let l = logsumexp(av.row(r));
            t.row_mut(r).iter_mut().for_each(|x| *x -= l);
        }
        let rg = self.rg(a);
        self.push(t, Op::LogSoftmaxCols(a), rg)
    }

    fn check_offsets(&self, a: Var, offsets: &[usize]) -> Result<()> {
        let rows = self.value(a).rows;
        if offsets.first() != Some(&0) || offsets.last() != Some(&rows) || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::ShapeMismatch(format!("segment offsets do not cover {rows} rows")));
        }
        Ok(())
    }

    /// Column-wise sums over row segments `offsets[s]..offsets[s+1]`. The
    /// result does not depend on row order within a segment.
    pub fn segment_sum(&mut self, a: Var, offsets: Rc<[usize]>) -> Result<Var> {
        self.check_offsets(a, &offsets)?;
        let av = self.value(a);
        let s = offsets.len() - 1;
        let mut t = Tensor::zeros(s, av.cols);
        let mut buf = Vec::new();
        for seg in 0..s {
            for c in 0..av.cols {
                buf.clear();
                buf.extend((offsets[seg]..offsets[seg + 1]).map(|r| av.get(r, c)));
                t.set(seg, c, sorted_sum(&mut buf));
            }
        }
        let rg = self.rg(a);
        Ok(self.push(t, Op::SegmentSum(a, offsets), rg))
    }

    /// Column-wise softmax within each row segment; order-independent.
    pub fn segment_softmax(&mut self, a: Var, offsets: Rc<[usize]>) -> Result<Var> {
        self.check_offsets(a, &offsets)?;
        let av = self.value(a);
        let mut t = Tensor::zeros(av.rows, av.cols);
        let mut buf = Vec::new();
        for seg in 0..offsets.len() - 1 {
            let rows = offsets[seg]..offsets[seg + 1];
            for c in 0..av.cols {
                let m = rows.clone().map(|r| av.get(r, c)).fold(f64::NEG_INFINITY, f64::max);
                buf.clear();
                buf.extend(rows.clone().map(|r| (av.get(r, c) - m).exp()));
                let z = sorted_sum(&mut buf);
                for r in rows.clone() {
                    t.set(r, c, (av.get(r, c) - m).exp() / z);
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(t, Op::SegmentSoftmax(a, offsets), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(*parts.first().ok_or(Error::EmptyInput)?).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut t = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.rows != rows {
                return Err(shape_err("concat_cols", pv.shape(), (rows, pv.cols)));
            }
            for r in 0..rows {
                t.row_mut(r)[off..off + pv.cols].copy_from_slice(pv.row(r));
            }
            off += pv.cols;
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(t, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if start + len > av.cols {
            return Err(shape_err("slice_cols", av.shape(), (av.rows, start + len)));
        }
        let mut t = Tensor::zeros(av.rows, len);
        for r in 0..av.rows {
            t.row_mut(r).copy_from_slice(&av.row(r)[start..start + len]);
        }
        let rg = self.rg(a);
        Ok(self.push(t, Op::SliceCols(a, start), rg))
    }

    /// Output row `i` is input row `idx[i]`, or zeros for `None`.
    pub fn gather_rows(&mut self, a: Var, idx: Rc<[Option<usize>]>) -> Result<Var> {
        let av = self.value(a);
        let mut t = Tensor::zeros(idx.len(), av.cols);
        for (i, src) in idx.iter().enumerate() {
            if let Some(s) = *src {
                if s >= av.rows {
                    return Err(Error::ShapeMismatch(format!("gather row {s} of {}", av.rows)));
                }
                t.row_mut(i).copy_from_slice(av.row(s));
            }
        }
        let rg = self.rg(a);
        Ok(self.push(t, Op::GatherRows(a, idx), rg))
    }

    /// Reinterprets the row-major buffer with a new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let av = self.value(a);
        if av.len() != rows * cols {
            return Err(shape_err("reshape", av.shape(), (rows, cols)));
        }
        let t = Tensor {
            rows,
            cols,
            data: av.data.clone(),
        };
        let rg = self.rg(a);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    /// Reverse pass from a recorded `1 × 1` node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if loss.0 >= self.nodes.len() || self.value(loss).shape() != (1, 1) {
            return Err(Error::GraphNotRecorded);
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.nodes[i].requires_grad {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adds parameter gradients of the last backward pass into `ps`.
    pub fn accumulate_param_grads(&self, ps: &mut ParamSet) {
        for (&id, &v) in &self.params {
            if let Some(g) = self.grad(v) {
                axpy(1.0, &g.data, &mut ps.grad_mut(id).data);
            }
        }
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut Tensor)) {
        if !self.rg(v) {
            return;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            let (r, c) = self.shape(v);
            *slot = Some(Tensor::zeros(r, c));
        }
        f(slot.as_mut().unwrap());
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf | Op::Param => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                self.acc(grads, *x, |gx| {
                    for r in 0..g.rows {
                        let gxr = gx.row_mut(r);
                        for (o, &go) in g.row(r).iter().enumerate() {
                            if go != 0.0 {
                                axpy(go, wv.row(o), gxr);
                            }
                        }
                    }
                });
                self.acc(grads, *w, |gw| {
                    for r in 0..g.rows {
                        let xr = xv.row(r);
                        for (o, &go) in g.row(r).iter().enumerate() {
                            if go != 0.0 {
                                axpy(go, xr, gw.row_mut(o));
                            }
                        }
                    }
                });
                if let Some(b) = b {
                    self.acc(grads, *b, |gb| {
                        for r in 0..g.rows {
                            axpy(1.0, g.row(r), &mut gb.data);
                        }
                    });
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, |ga| axpy(1.0, &g.data, &mut ga.data));
                self.acc(grads, *b, |gb| axpy(1.0, &g.data, &mut gb.data));
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, |ga| axpy(1.0, &g.data, &mut ga.data));
                self.acc(grads, *b, |gb| axpy(-1.0, &g.data, &mut gb.data));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.acc(grads, *a, |ga| {
                    for ((d, gi), bi) in ga.data.iter_mut().zip(&g.data).zip(&bv.data) {
                        *d += gi * bi;
                    }
                });
                self.acc(grads, *b, |gb| {
                    for ((d, gi), ai) in gb.data.iter_mut().zip(&g.data).zip(&av.data) {
                        *d += gi * ai;
                    }
                });
            }
            Op::Div(a, b) => {
                let bv = self.value(*b);
                self.acc(grads, *a, |ga| {
                    for ((d, gi), bi) in ga.data.iter_mut().zip(&g.data).zip(&bv.data) {
                        *d += gi / bi;
                    }
                });
                self.acc(grads, *b, |gb| {
                    for (((d, gi), bi), yi) in gb.data.iter_mut().zip(&g.data).zip(&bv.data).zip(&y.data) {
                        *d -= gi * yi / bi;
                    }
                });
            }
            Op::MulConst(a, c) => {
                let cv = &self.consts[*c];
                self.acc(grads, *a, |ga| {
                    for ((d, gi), ci) in ga.data.iter_mut().zip(&g.data).zip(&cv.data) {
                        *d += gi * ci;
                    }
                });
            }
            Op::AddConst(a) | Op::AddScalar(a) | Op::Reshape(a) => {
                self.acc(grads, *a, |ga| axpy(1.0, &g.data, &mut ga.data));
            }
            Op::Scale(a, s) => {
                self.acc(grads, *a, |ga| axpy(*s, &g.data, &mut ga.data));
            }
            Op::Unary(a, u) => {
                let xv = self.value(*a);
                let d: Box<dyn Fn(f64, f64) -> f64> = match *u {
                    Unary::Tanh => Box::new(|_, y| 1.0 - y * y),
                    Unary::Relu => Box::new(|x, _| if x > 0.0 { 1.0 } else { 0.0 }),
                    Unary::Exp => Box::new(|_, y| y),
                    Unary::Log => Box::new(|x, _| 1.0 / x),
                    Unary::Softplus => Box::new(|x, _| sigmoid(x)),
                    Unary::Square => Box::new(|x, _| 2.0 * x),
                    Unary::Sigmoid => Box::new(|_, y| y * (1.0 - y)),
                    Unary::SoftClamp(c) => Box::new(move |_, y| {
                        let t = y / c;
                        1.0 - t * t
                    }),
                };
                self.acc(grads, *a, |ga| {
                    for (((gd, gi), xi), yi) in ga.data.iter_mut().zip(&g.data).zip(&xv.data).zip(&y.data) {
                        if *gi != 0.0 {
                            *gd += gi * d(*xi, *yi);
                        }
                    }
                });
            }
            Op::SumAll(a) => {
                let s = g.item();
                self.acc(grads, *a, |ga| ga.data.iter_mut().for_each(|d| *d += s));
            }
            Op::SumCols(a) => {
                self.acc(grads, *a, |ga| {
                    for r in 0..ga.rows {
                        let s = g.data[r];
                        ga.row_mut(r).iter_mut().for_each(|d| *d += s);
                    }
                });
            }
            Op::LogSumExpCols(a) => {
                let xv = self.value(*a);
                self.acc(grads, *a, |ga| {
                    for r in 0..ga.rows {
                        let (gr, l) = (g.data[r], y.data[r]);
                        if l == f64::NEG_INFINITY || gr == 0.0 {
                            continue;
                        }
                        for (d, x) in ga.row_mut(r).iter_mut().zip(xv.row(r)) {
                            *d += gr * (x - l).exp();
                        }
                    }
                });
            }
            Op::LogSoftmaxCols(a) => {
                self.acc(grads, *a, |ga| {
                    for r in 0..ga.rows {
                        let gs: f64 = g.row(r).iter().sum();
                        for ((d, gi), yi) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *d += gi - yi.exp() * gs;
                        }
                    }
                });
            }
            Op::SegmentSum(a, offsets) => {
                self.acc(grads, *a, |ga| {
                    for seg in 0..offsets.len() - 1 {
                        for r in offsets[seg]..offsets[seg + 1] {
                            axpy(1.0, g.row(seg), ga.row_mut(r));
                        }
                    }
                });
            }
            Op::SegmentSoftmax(a, offsets) => {
                self.acc(grads, *a, |ga| {
                    for seg in 0..offsets.len() - 1 {
                        let rows = offsets[seg]..offsets[seg + 1];
                        for c in 0..ga.cols {
                            let inner: f64 = rows.clone().map(|r| y.get(r, c) * g.get(r, c)).sum();
                            for r in rows.clone() {
                                let v = ga.get(r, c) + y.get(r, c) * (g.get(r, c) - inner);
                                ga.set(r, c, v);
                            }
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols;
                    self.acc(grads, p, |gp| {
                        for r in 0..gp.rows {
                            axpy(1.0, &g.row(r)[off..off + w], gp.row_mut(r));
                        }
                    });
                    off += w;
                }
            }
            Op::SliceCols(a, start) => {
                let w = y.cols;
                self.acc(grads, *a, |ga| {
                    for r in 0..ga.rows {
                        axpy(1.0, g.row(r), &mut ga.row_mut(r)[*start..*start + w]);
                    }
                });
            }
            Op::GatherRows(a, idx) => {
                self.acc(grads, *a, |ga| {
                    for (i, src) in idx.iter().enumerate() {
                        if let Some(s) = *src {
                            axpy(1.0, g.row(i), ga.row_mut(s));
                        }
                    }
                });
            }
        }
    }
}
