use super::array::Array;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which primitive produced a node, together with its inputs.
#[derive(Debug, Clone)]
enum Op {
    Param,
    Const,
    Affine { x: Var, w: Var, b: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Square(Var),
    MaxConst(Var, f64),
    Sum(Var),
    Mean(Var),
    SumLast(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    SliceLast { x: Var, start: usize },
    L2Normalize { x: Var, norms: Vec<f64> },
    Reshape(Var),
    GatherRows { x: Var, rows: Vec<usize> },
}

impl Op {
    fn tag(&self) -> &'static str {
        match self {
            Op::Param => "param",
            Op::Const => "const",
            Op::Affine { .. } => "affine",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddConst(..) => "add_const",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Abs(..) => "abs",
            Op::Square(..) => "square",
            Op::MaxConst(..) => "max_const",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SumLast(..) => "sum_last",
            Op::Softmax(..) => "softmax",
            Op::Concat(..) => "concat",
            Op::SliceLast { .. } => "slice",
            Op::L2Normalize { .. } => "l2_normalize",
            Op::Reshape(..) => "reshape",
            Op::GatherRows { .. } => "gather_rows",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Array,
    op: Op,
}

/// Dynamic reverse-mode tape.
///
/// Nodes are appended in execution order, so every node's inputs precede it and a
/// reverse sweep over indices visits each node after all of its consumers.
/// Gradients of parameter leaves accumulate across [`Tape::backward`] calls until
/// [`Tape::zero_grad`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Array>>,
    kinks: Option<u64>,
}

fn shape_err(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape that also fingerprints which side of every kink (abs at 0, max against
    /// its constant) each element fell on. Used by the gradient checker.
    pub fn with_kink_tracking() -> Self {
        Tape {
            kinks: Some(0xcbf2_9ce4_8422_2325),
            ..Self::default()
        }
    }

    pub fn kink_signature(&self) -> Option<u64> {
        self.kinks
    }

    fn note_kink(&mut self, class: u8) {
        if let Some(h) = self.kinks.as_mut() {
            *h ^= class as u64;
            *h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array {
        &self.nodes[v.0].value
    }

    pub fn op_tag(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.tag()
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: Array) -> Var {
        self.push(value, Op::Param)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Array) -> Var {
        self.push(value, Op::Const)
    }

    /// Accumulated gradient of a parameter leaf (None until a backward pass has run).
    pub fn grad(&self, v: Var) -> Option<&Array> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn zero_grad(&mut self) {
        self.grads.clear();
    }

    /// `x · wᵀ + b` where `x` is `[in]` or `[rows, in]`, `w` is `[out, in]`, `b` is `[out]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if ws.len() != 2
            || bs != [ws[0]]
            || xs.is_empty()
            || xs.len() > 2
            || *xs.last().unwrap() != ws[1]
        {
            return Err(Error::Shape(format!(
                "affine: x {xs:?}, w {ws:?}, b {bs:?}"
            )));
        }
        let (out, inp) = (ws[0], ws[1]);
        let rows = if xs.len() == 2 { xs[0] } else { 1 };
        let out_shape = if xs.len() == 2 {
            vec![rows, out]
        } else {
            vec![out]
        };
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        let mut y = vec![0.0; rows * out];
        for r in 0..rows {
            let xr = &xv[r * inp..(r + 1) * inp];
            let yr = &mut y[r * out..(r + 1) * out];
            for (o, yo) in yr.iter_mut().enumerate() {
                let wr = &wv[o * inp..(o + 1) * inp];
                *yo = bv[o] + dot(xr, wr);
            }
        }
        let value = Array::new(&out_shape, y)?;
        Ok(self.push(value, Op::Affine { x, w, b }))
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Array> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(name, av.shape(), bv.shape()));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Array::new(av.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| c * x);
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddConst(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if let Some(bad) = av.data().iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Domain(format!("log of non-positive value {bad}")));
        }
        let v = av.map(f64::ln);
        Ok(self.push(v, Op::Log(a)))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        if self.kinks.is_some() {
            let classes: Vec<u8> = self
                .value(a)
                .data()
                .iter()
                .map(|&x| {
                    if x < 0.0 {
                        0
                    } else if x == 0.0 {
                        1
                    } else {
                        2
                    }
                })
                .collect();
            classes.into_iter().for_each(|c| self.note_kink(c));
        }
        let v = self.value(a).map(f64::abs);
        self.push(v, Op::Abs(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    /// Elementwise `max(x, c)`.
    pub fn max_const(&mut self, a: Var, c: f64) -> Var {
        if self.kinks.is_some() {
            let classes: Vec<u8> = self
                .value(a)
                .data()
                .iter()
                .map(|&x| {
                    if x > c {
                        0
                    } else if x == c {
                        1
                    } else {
                        2
                    }
                })
                .collect();
            classes.into_iter().for_each(|k| self.note_kink(k));
        }
        let v = self.value(a).map(|x| x.max(c));
        self.push(v, Op::MaxConst(a, c))
    }

    /// Elementwise `min(x, c)`, expressed through `max_const`.
    pub fn min_const(&mut self, a: Var, c: f64) -> Var {
        let neg = self.scale(a, -1.0);
        let m = self.max_const(neg, -c);
        self.scale(m, -1.0)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Array::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let v = Array::scalar(av.sum() / av.len() as f64);
        self.push(v, Op::Mean(a))
    }

    /// Sum over the last axis, dropping it.
    pub fn sum_last(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.shape().is_empty() {
            return Err(Error::Shape("sum_last on a scalar".into()));
        }
        let c = av.last_dim();
        let data: Vec<f64> = av.data().chunks(c).map(|r| r.iter().sum()).collect();
        let shape = &av.shape()[..av.shape().len() - 1];
        let v = Array::new(shape, data)?;
        Ok(self.push(v, Op::SumLast(a)))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.shape().is_empty() {
            return Err(Error::Shape("softmax on a scalar".into()));
        }
        let c = av.last_dim();
        let mut data = Vec::with_capacity(av.len());
        for r in av.data().chunks(c) {
            let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let start = data.len();
            data.extend(r.iter().map(|&x| (x - m).exp()));
            let s: f64 = data[start..].iter().sum();
            data[start..].iter_mut().for_each(|x| *x /= s);
        }
        let v = Array::new(av.shape(), data)?;
        Ok(self.push(v, Op::Softmax(a)))
    }

    /// Concatenate along the first axis. Inputs must agree on all trailing axes.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let tail = self.shape(*first).get(1..).map(|t| t.to_vec());
        let Some(tail) = tail else {
            return Err(Error::Shape("concat of scalars".into()));
        };
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let pv = self.value(p);
            if pv.shape().is_empty() || pv.shape()[1..] != tail[..] {
                return Err(shape_err("concat", self.shape(*first), pv.shape()));
            }
            lead += pv.shape()[0];
            data.extend_from_slice(pv.data());
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        let v = Array::new(&shape, data)?;
        Ok(self.push(v, Op::Concat(parts.to_vec())))
    }

    /// `x[..., start..start + len]` on the last axis.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.last_dim();
        if xv.shape().is_empty() || start + len > c || len == 0 {
            return Err(Error::Shape(format!(
                "slice {start}..{} of last axis with size {c}",
                start + len
            )));
        }
        let mut data = Vec::with_capacity(xv.outer_len() * len);
        for r in xv.data().chunks(c) {
            data.extend_from_slice(&r[start..start + len]);
        }
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let v = Array::new(&shape, data)?;
        Ok(self.push(v, Op::SliceLast { x, start }))
    }

    /// Scale each last-axis vector to unit Euclidean norm.
    pub fn l2_normalize(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape().is_empty() {
            return Err(Error::Shape("l2_normalize on a scalar".into()));
        }
        let c = xv.last_dim();
        let mut norms = Vec::with_capacity(xv.outer_len());
        let mut data = Vec::with_capacity(xv.len());
        for r in xv.data().chunks(c) {
            let n = dot(r, r).sqrt();
            if !(n > 0.0) {
                return Err(Error::Domain("l2_normalize of a zero vector".into()));
            }
            norms.push(n);
            data.extend(r.iter().map(|v| v / n));
        }
        let v = Array::new(xv.shape(), data)?;
        Ok(self.push(v, Op::L2Normalize { x, norms }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(v, Op::Reshape(x)))
    }

    /// Select rows of a `[rows, cols]` matrix (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "gather_rows on shape {:?}",
                xv.shape()
            )));
        }
        let (n, c) = (xv.shape()[0], xv.shape()[1]);
        let mut data = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            if r >= n {
                return Err(Error::Shape(format!("row {r} out of range {n}")));
            }
            data.extend_from_slice(xv.row(r));
        }
        let v = Array::new(&[rows.len(), c], data)?;
        Ok(self.push(
            v,
            Op::GatherRows {
                x,
                rows: rows.to_vec(),
            },
        ))
    }

    /// Reverse sweep from a scalar `loss`, accumulating into every parameter leaf.
    ///
    /// Parameters that the loss does not depend on end up with an all-zero gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let n = loss.0 + 1;
        let mut adj: Vec<Option<Array>> = vec![None; n];
        adj[loss.0] = Some(Array::full(self.shape(loss), 1.0));
        if self.grads.len() < self.nodes.len() {
            self.grads.resize(self.nodes.len(), None);
        }
        for i in (0..n).rev() {
            let Some(g) = adj[i].take() else {
                if matches!(self.nodes[i].op, Op::Param) && self.grads[i].is_none() {
                    self.grads[i] = Some(Array::zeros(self.nodes[i].value.shape()));
                }
                continue;
            };
            self.propagate(i, g, &mut adj)?;
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: Array, adj: &mut [Option<Array>]) -> Result<()> {
        fn acc(adj: &mut [Option<Array>], v: Var, g: Array) {
            match &mut adj[v.0] {
                Some(a) => a.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        fn elementwise(g: &Array, f: impl Fn(usize, f64) -> f64) -> Array {
            let data = g
                .data()
                .iter()
                .enumerate()
                .map(|(k, &gk)| f(k, gk))
                .collect();
            Array::new(g.shape(), data).expect("same shape")
        }
        let nodes = &self.nodes;
        let y = &nodes[i].value;
        let val = |v: Var| &nodes[v.0].value;
        match &nodes[i].op {
            Op::Param => match &mut self.grads[i] {
                Some(a) => a.add_assign(&g),
                slot @ None => *slot = Some(g),
            },
            Op::Const => {}
            Op::Affine { x, w, b } => {
                let (xv, wv) = (val(*x), val(*w));
                let (out, inp) = (wv.shape()[0], wv.shape()[1]);
                let rows = g.len() / out;
                let gd = g.data();
                let mut gx = vec![0.0; rows * inp];
                let mut gw = vec![0.0; out * inp];
                let mut gb = vec![0.0; out];
                for r in 0..rows {
                    let xr = &xv.data()[r * inp..(r + 1) * inp];
                    let gxr = &mut gx[r * inp..(r + 1) * inp];
                    for o in 0..out {
                        let go = gd[r * out + o];
                        if go == 0.0 {
                            continue;
                        }
                        gb[o] += go;
                        axpy(gxr, go, &wv.data()[o * inp..(o + 1) * inp]);
                        axpy(&mut gw[o * inp..(o + 1) * inp], go, xr);
                    }
                }
                let gx = Array::new(xv.shape(), gx)?;
                let gw = Array::new(wv.shape(), gw)?;
                let gb = Array::vector(gb);
                let (x, w, b) = (*x, *w, *b);
                acc(adj, x, gx);
                acc(adj, w, gw);
                acc(adj, b, gb);
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                acc(adj, a, g.clone());
                acc(adj, b, g);
            }
            Op::Sub(a, b) => {
                let (a, b) = (*a, *b);
                acc(adj, b, g.map(|x| -x));
                acc(adj, a, g);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let ga = elementwise(&g, |k, gk| gk * bv.data()[k]);
                let gb = elementwise(&g, |k, gk| gk * av.data()[k]);
                let (a, b) = (*a, *b);
                acc(adj, a, ga);
                acc(adj, b, gb);
            }
            Op::Scale(a, c) => {
                let (a, c) = (*a, *c);
                acc(adj, a, g.map(|x| c * x));
            }
            Op::AddConst(a) => {
                let a = *a;
                acc(adj, a, g);
            }
            Op::Tanh(a) => {
                let ga = elementwise(&g, |k, gk| gk * (1.0 - y.data()[k] * y.data()[k]));
                let a = *a;
                acc(adj, a, ga);
            }
            Op::Sigmoid(a) => {
                let ga = elementwise(&g, |k, gk| gk * y.data()[k] * (1.0 - y.data()[k]));
                let a = *a;
                acc(adj, a, ga);
            }
            Op::Exp(a) => {
                let ga = elementwise(&g, |k, gk| gk * y.data()[k]);
                let a = *a;
                acc(adj, a, ga);
            }
            Op::Log(a) => {
                let av = val(*a);
                let ga = elementwise(&g, |k, gk| gk / av.data()[k]);
                let a = *a;
                acc(adj, a, ga);
            }
            Op::Abs(a) => {
                let av = val(*a);
                let ga = elementwise(&g, |k, gk| {
                    let x = av.data()[k];
                    if x > 0.0 {
                        gk
                    } else if x < 0.0 {
                        -gk
                    } else {
                        0.0
                    }
                });
                let a = *a;
                acc(adj, a, ga);
            }
            Op::Square(a) => {
                let av = val(*a);
                let ga = elementwise(&g, |k, gk| 2.0 * av.data()[k] * gk);
                let a = *a;
                acc(adj, a, ga);
            }
            Op::MaxConst(a, c) => {
                let av = val(*a);
                let c = *c;
                let ga = elementwise(&g, |k, gk| if av.data()[k] > c { gk } else { 0.0 });
                let a = *a;
                acc(adj, a, ga);
            }
            Op::Sum(a) => {
                let a = *a;
                let ga = Array::full(val(a).shape(), g.item());
                acc(adj, a, ga);
            }
            Op::Mean(a) => {
                let a = *a;
                let av = val(a);
                let ga = Array::full(av.shape(), g.item() / av.len() as f64);
                acc(adj, a, ga);
            }
            Op::SumLast(a) => {
                let a = *a;
                let av = val(a);
                let c = av.last_dim();
                let data = g
                    .data()
                    .iter()
                    .flat_map(|&gk| std::iter::repeat_n(gk, c))
                    .collect();
                acc(adj, a, Array::new(av.shape(), data)?);
            }
            Op::Softmax(a) => {
                let a = *a;
                let c = y.last_dim();
                let mut data = Vec::with_capacity(y.len());
                for (yr, gr) in y.data().chunks(c).zip(g.data().chunks(c)) {
                    let s = dot(yr, gr);
                    data.extend(yr.iter().zip(gr).map(|(yk, gk)| yk * (gk - s)));
                }
                acc(adj, a, Array::new(y.shape(), data)?);
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                let parts = parts.clone();
                for p in parts {
                    let len = val(p).len();
                    let gp = Array::new(val(p).shape(), g.data()[offset..offset + len].to_vec())?;
                    offset += len;
                    acc(adj, p, gp);
                }
            }
            Op::SliceLast { x, start } => {
                let xv = val(*x);
                let c = xv.last_dim();
                let len = y.last_dim();
                let mut gx = Array::zeros(xv.shape());
                for (gxr, gr) in gx.data_mut().chunks_mut(c).zip(g.data().chunks(len)) {
                    gxr[*start..*start + len].copy_from_slice(gr);
                }
                let x = *x;
                acc(adj, x, gx);
            }
            Op::L2Normalize { x, norms } => {
                let c = y.last_dim();
                let mut data = Vec::with_capacity(y.len());
                for ((yr, gr), n) in y.data().chunks(c).zip(g.data().chunks(c)).zip(norms) {
                    let s = dot(yr, gr);
                    data.extend(yr.iter().zip(gr).map(|(yk, gk)| (gk - yk * s) / n));
                }
                let x = *x;
                acc(adj, x, Array::new(y.shape(), data)?);
            }
            Op::Reshape(x) => {
                let x = *x;
                let gx = g.reshaped(val(x).shape())?;
                acc(adj, x, gx);
            }
            Op::GatherRows { x, rows } => {
                let xv = val(*x);
                let c = xv.shape()[1];
                let mut gx = Array::zeros(xv.shape());
                for (k, &r) in rows.iter().enumerate() {
                    let dst = &mut gx.data_mut()[r * c..(r + 1) * c];
                    for (d, s) in dst.iter_mut().zip(&g.data()[k * c..(k + 1) * c]) {
                        *d += s;
                    }
                }
                let x = *x;
                acc(adj, x, gx);
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent accumulators let the compiler vectorize the reduction.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
