//! A per-vector reverse-mode tape.
//!
//! Nodes hold whole vectors (or row-major matrices). Recording evaluates each
//! operation immediately; [`Tape::backward`] walks the nodes in reverse and
//! [`Tape::replay`] re-evaluates them from the leaves.

use soel_core::quant::QuantizationScheme;
use soel_core::rng::{next_unit, RandomSource};

use crate::error::{check_shape, Error, Result};
use crate::surrogate::{soft_spike, surrogate_derivative, SurrogateConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf {
        param: usize,
        rows: usize,
        cols: usize,
    },
    Const,
    /// `y_i = sum_{j in active} w_ij`
    SparseMatVec {
        w: NodeId,
        cols: usize,
        active: Vec<u32>,
    },
    /// `y = W x`, skipping zero entries of `x`
    MatVec {
        w: NodeId,
        x: NodeId,
    },
    /// `y = ca * a + cb * b`
    Lin {
        ca: f64,
        a: NodeId,
        cb: f64,
        b: NodeId,
    },
    /// `y = bias + scale * a`
    Affine {
        a: NodeId,
        scale: f64,
        bias: Vec<f64>,
    },
    /// Heaviside forward, surrogate backward.
    Spike {
        v: NodeId,
        threshold: f64,
        surrogate: SurrogateConfig,
    },
    SoftSpike {
        v: NodeId,
        threshold: f64,
        slope: f64,
    },
    /// `y = v * (1 - s)`
    HardReset {
        v: NodeId,
        s: NodeId,
        detach: bool,
    },
    /// Stop-gradient gate: entries with a false mask are zero.
    Mask {
        a: NodeId,
        mask: Vec<bool>,
    },
    /// `y_ij = (scale * b_j) * a_i`
    Outer {
        a: NodeId,
        b: NodeId,
        scale: f64,
    },
    /// Stochastic rounding of every entry, straight-through backward.
    Quantize {
        w: NodeId,
        scheme: QuantizationScheme,
        rng: RandomSource,
    },
    /// Re-rounds entries where `delta` is nonzero and keeps `prev` elsewhere.
    Requantize {
        w: NodeId,
        prev: NodeId,
        delta: NodeId,
        cols: usize,
        scheme: QuantizationScheme,
        rng: RandomSource,
    },
    /// `-log softmax(scale * x)[label]`
    SoftmaxCe {
        x: NodeId,
        scale: f64,
        label: usize,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Vec<f64>,
}

/// Gradients of a scalar root with respect to every leaf parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub loss: f64,
    /// Row-major gradient per parameter index.
    pub grads: Vec<Vec<f64>>,
    pub shapes: Vec<(usize, usize)>,
    /// Whether any path from the root reached the parameter.
    pub touched: Vec<bool>,
}

impl GradientBundle {
    pub fn zeros(shapes: &[(usize, usize)]) -> Self {
        Self {
            loss: 0.0,
            grads: shapes.iter().map(|&(r, c)| vec![0.0; r * c]).collect(),
            shapes: shapes.to_vec(),
            touched: vec![false; shapes.len()],
        }
    }

    /// Adds `other` into `self`. Summing bundles in a fixed order keeps
    /// parallel reductions deterministic.
    pub fn accumulate(&mut self, other: &GradientBundle) -> Result<()> {
        check_shape("gradient bundle", self.grads.len(), other.grads.len())?;
        self.loss += other.loss;
        for k in 0..self.grads.len() {
            check_shape("gradient bundle entry", self.grads[k].len(), other.grads[k].len())?;
            for (a, b) in self.grads[k].iter_mut().zip(&other.grads[k]) {
                *a += b;
            }
            self.touched[k] |= other.touched[k];
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.loss.is_finite() && self.grads.iter().flatten().all(|g| g.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.grads.iter().flatten().fold(0.0, |m, g| m.max(g.abs()))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[0]
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        let value = eval(&op, |id| &self.nodes[id.0].value)?;
        self.nodes.push(Node { op, value });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// A differentiable `(rows, cols)` parameter with index `param`.
    pub fn leaf(&mut self, param: usize, rows: usize, cols: usize, value: Vec<f64>) -> Result<NodeId> {
        check_shape("leaf", rows * cols, value.len())?;
        self.nodes.push(Node {
            op: Op::Leaf { param, rows, cols },
            value,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Vec<f64>) -> NodeId {
        self.nodes.push(Node { op: Op::Const, value });
        NodeId(self.nodes.len() - 1)
    }

    /// A constant copy of `a`; gradients stop here.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.clone();
        self.constant(value)
    }

    pub fn sparse_matvec(&mut self, w: NodeId, cols: usize, active: &[u32]) -> Result<NodeId> {
        let len = self.nodes[w.0].value.len();
        if cols == 0 || !len.is_multiple_of(cols) {
            return Err(Error::Shape {
                context: "sparse matvec weights",
                expected: cols,
                got: len,
            });
        }
        if let Some(&j) = active.iter().max() {
            if j as usize >= cols {
                return Err(Error::Shape {
                    context: "sparse matvec input",
                    expected: cols,
                    got: j as usize + 1,
                });
            }
        }
        self.push(Op::SparseMatVec {
            w,
            cols,
            active: active.to_vec(),
        })
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        let cols = self.nodes[x.0].value.len();
        let len = self.nodes[w.0].value.len();
        if cols == 0 || !len.is_multiple_of(cols) {
            return Err(Error::Shape {
                context: "matvec",
                expected: cols,
                got: len,
            });
        }
        self.push(Op::MatVec { w, x })
    }

    pub fn lin(&mut self, ca: f64, a: NodeId, cb: f64, b: NodeId) -> Result<NodeId> {
        check_shape("linear combination", self.nodes[a.0].value.len(), self.nodes[b.0].value.len())?;
        self.push(Op::Lin { ca, a, cb, b })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.lin(1.0, a, 1.0, b)
    }

    pub fn affine(&mut self, a: NodeId, scale: f64, bias: Vec<f64>) -> Result<NodeId> {
        check_shape("affine bias", self.nodes[a.0].value.len(), bias.len())?;
        self.push(Op::Affine { a, scale, bias })
    }

    pub fn spike(&mut self, v: NodeId, threshold: f64, surrogate: SurrogateConfig) -> Result<NodeId> {
        self.push(Op::Spike { v, threshold, surrogate })
    }

    pub fn soft_spike(&mut self, v: NodeId, threshold: f64, slope: f64) -> Result<NodeId> {
        self.push(Op::SoftSpike { v, threshold, slope })
    }

    pub fn hard_reset(&mut self, v: NodeId, s: NodeId, detach: bool) -> Result<NodeId> {
        check_shape("reset", self.nodes[v.0].value.len(), self.nodes[s.0].value.len())?;
        self.push(Op::HardReset { v, s, detach })
    }

    pub fn mask(&mut self, a: NodeId, mask: Vec<bool>) -> Result<NodeId> {
        check_shape("mask", self.nodes[a.0].value.len(), mask.len())?;
        self.push(Op::Mask { a, mask })
    }

    pub fn outer(&mut self, a: NodeId, b: NodeId, scale: f64) -> Result<NodeId> {
        self.push(Op::Outer { a, b, scale })
    }

    pub fn quantize(&mut self, w: NodeId, scheme: QuantizationScheme, rng: RandomSource) -> Result<NodeId> {
        self.push(Op::Quantize { w, scheme, rng })
    }

    /// Rounds the entries of `w` touched by `delta`; rows without any change
    /// draw no random numbers. `cols` is the row length used for draw indexing.
    pub fn requantize(
        &mut self,
        w: NodeId,
        prev: NodeId,
        delta: NodeId,
        cols: usize,
        scheme: QuantizationScheme,
        rng: RandomSource,
    ) -> Result<NodeId> {
        let n = self.nodes[w.0].value.len();
        check_shape("requantize previous", n, self.nodes[prev.0].value.len())?;
        check_shape("requantize delta", n, self.nodes[delta.0].value.len())?;
        if cols == 0 || !n.is_multiple_of(cols) {
            return Err(Error::Shape {
                context: "requantize rows",
                expected: cols,
                got: n,
            });
        }
        self.push(Op::Requantize {
            w,
            prev,
            delta,
            cols,
            scheme,
            rng,
        })
    }

    pub fn softmax_ce(&mut self, x: NodeId, scale: f64, label: usize) -> Result<NodeId> {
        let n = self.nodes[x.0].value.len();
        if label >= n {
            return Err(soel_core::Error::LabelOutOfRange { label, outputs: n }.into());
        }
        self.push(Op::SoftmaxCe { x, scale, label })
    }

    /// Leaf parameter shapes, indexed by parameter.
    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes: Vec<(usize, usize)> = Vec::new();
        for node in &self.nodes {
            if let Op::Leaf { param, rows, cols } = node.op {
                if shapes.len() <= param {
                    shapes.resize(param + 1, (0, 0));
                }
                shapes[param] = (rows, cols);
            }
        }
        shapes
    }

    /// Re-evaluates every node from the leaves. With `params`, leaf values are
    /// substituted (gates and rounding draws stay as recorded).
    pub fn replay(&self, params: Option<&[Vec<f64>]>) -> Result<Vec<Vec<f64>>> {
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Leaf { param, .. } => match params {
                    Some(p) => {
                        let v = p
                            .get(*param)
                            .ok_or_else(|| Error::IncompleteTape(format!("no value for parameter {param}")))?;
                        check_shape("replayed parameter", node.value.len(), v.len())?;
                        v.clone()
                    }
                    None => node.value.clone(),
                },
                Op::Const => node.value.clone(),
                op => eval(op, |id| &values[id.0])?,
            };
            values.push(v);
        }
        Ok(values)
    }

    /// True if replaying from the recorded leaves reproduces every node
    /// bit-for-bit.
    pub fn replay_is_exact(&self) -> Result<bool> {
        let values = self.replay(None)?;
        Ok(values
            .iter()
            .zip(&self.nodes)
            .all(|(a, n)| a.len() == n.value.len() && a.iter().zip(&n.value).all(|(x, y)| x.to_bits() == y.to_bits())))
    }

    /// Reverse sweep from the scalar `root`.
    pub fn backward(&self, root: NodeId) -> Result<GradientBundle> {
        if root.0 >= self.nodes.len() {
            return Err(Error::IncompleteTape(format!(
                "root {} not on a tape of {} nodes",
                root.0,
                self.nodes.len()
            )));
        }
        if self.nodes[root.0].value.len() != 1 {
            return Err(Error::IncompleteTape("root is not a scalar".into()));
        }
        let shapes = self.param_shapes();
        let mut out = GradientBundle::zeros(&shapes);
        out.loss = self.nodes[root.0].value[0];
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(vec![1.0]);
        for id in (0..=root.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            let val = |n: NodeId| self.nodes[n.0].value.as_slice();
            match &node.op {
                Op::Leaf { param, .. } => {
                    for (a, b) in out.grads[*param].iter_mut().zip(&g) {
                        *a += b;
                    }
                    out.touched[*param] = true;
                }
                Op::Const => {}
                Op::SparseMatVec { w, cols, active } => {
                    let gw = slot(&mut adj, *w, val(*w).len());
                    for (i, &gi) in g.iter().enumerate() {
                        if gi != 0.0 {
                            let row = &mut gw[i * cols..(i + 1) * cols];
                            for &j in active {
                                row[j as usize] += gi;
                            }
                        }
                    }
                }
                Op::MatVec { w, x } => {
                    let xv = val(*x);
                    let wv = val(*w);
                    let cols = xv.len();
                    {
                        let gw = slot(&mut adj, *w, wv.len());
                        for (i, &gi) in g.iter().enumerate() {
                            if gi == 0.0 {
                                continue;
                            }
                            let row = &mut gw[i * cols..(i + 1) * cols];
                            for (j, &xj) in xv.iter().enumerate() {
                                if xj != 0.0 {
                                    row[j] += gi * xj;
                                }
                            }
                        }
                    }
                    let gx = slot(&mut adj, *x, cols);
                    for (i, &gi) in g.iter().enumerate() {
                        if gi == 0.0 {
                            continue;
                        }
                        let row = &wv[i * cols..(i + 1) * cols];
                        for (a, &wij) in gx.iter_mut().zip(row) {
                            *a += wij * gi;
                        }
                    }
                }
                Op::Lin { ca, a, cb, b } => {
                    axpy(slot(&mut adj, *a, g.len()), *ca, &g);
                    axpy(slot(&mut adj, *b, g.len()), *cb, &g);
                }
                Op::Affine { a, scale, .. } => axpy(slot(&mut adj, *a, g.len()), *scale, &g),
                Op::Spike { v, threshold, surrogate } => {
                    let vv = val(*v);
                    let gv = slot(&mut adj, *v, g.len());
                    for i in 0..g.len() {
                        if g[i] != 0.0 {
                            gv[i] += g[i] * surrogate_derivative(vv[i], *threshold, surrogate);
                        }
                    }
                }
                Op::SoftSpike { v, slope, .. } => {
                    let gv = slot(&mut adj, *v, g.len());
                    for i in 0..g.len() {
                        let s = node.value[i];
                        gv[i] += g[i] * slope * s * (1.0 - s);
                    }
                }
                Op::HardReset { v, s, detach } => {
                    let sv = val(*s);
                    let vv = val(*v);
                    {
                        let gv = slot(&mut adj, *v, g.len());
                        for i in 0..g.len() {
                            gv[i] += g[i] * (1.0 - sv[i]);
                        }
                    }
                    if !detach {
                        let gs = slot(&mut adj, *s, g.len());
                        for i in 0..g.len() {
                            gs[i] -= g[i] * vv[i];
                        }
                    }
                }
                Op::Mask { a, mask } => {
                    let ga = slot(&mut adj, *a, g.len());
                    for i in 0..g.len() {
                        if mask[i] {
                            ga[i] += g[i];
                        }
                    }
                }
                Op::Outer { a, b, scale } => {
                    let av = val(*a);
                    let bv = val(*b);
                    let cols = bv.len();
                    {
                        let ga = slot(&mut adj, *a, av.len());
                        for i in 0..av.len() {
                            let row = &g[i * cols..(i + 1) * cols];
                            let mut acc = 0.0;
                            for j in 0..cols {
                                acc += row[j] * (scale * bv[j]);
                            }
                            ga[i] += acc;
                        }
                    }
                    let gb = slot(&mut adj, *b, cols);
                    for i in 0..av.len() {
                        let k = scale * av[i];
                        if k == 0.0 {
                            continue;
                        }
                        let row = &g[i * cols..(i + 1) * cols];
                        for j in 0..cols {
                            gb[j] += row[j] * k;
                        }
                    }
                }
                Op::Quantize { w, .. } | Op::Requantize { w, .. } => {
                    axpy(slot(&mut adj, *w, g.len()), 1.0, &g);
                }
                Op::SoftmaxCe { x, scale, label } => {
                    let probs = softmax(val(*x), *scale);
                    let gx = slot(&mut adj, *x, probs.len());
                    for (i, p) in probs.iter().enumerate() {
                        let t = if i == *label { 1.0 } else { 0.0 };
                        gx[i] += g[0] * scale * (p - t);
                    }
                }
            }
        }
        Ok(out)
    }
}

fn slot(adj: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
    adj[id.0].get_or_insert_with(|| vec![0.0; len])
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn softmax(x: &[f64], scale: f64) -> Vec<f64> {
    let m = x.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(scale * v));
    let e: Vec<f64> = x.iter().map(|&v| (scale * v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

fn eval<'a>(op: &Op, get: impl Fn(NodeId) -> &'a [f64]) -> Result<Vec<f64>> {
    Ok(match op {
        Op::Leaf { .. } | Op::Const => unreachable!("leaves and constants carry their own values"),
        Op::SparseMatVec { w, cols, active } => {
            let wv = get(*w);
            (0..wv.len() / cols)
                .map(|i| {
                    let row = &wv[i * cols..(i + 1) * cols];
                    let mut acc = 0.0;
                    for &j in active {
                        acc += row[j as usize];
                    }
                    acc
                })
                .collect()
        }
        Op::MatVec { w, x } => {
            let (wv, xv) = (get(*w), get(*x));
            let cols = xv.len();
            (0..wv.len() / cols)
                .map(|i| {
                    let row = &wv[i * cols..(i + 1) * cols];
                    let mut acc = 0.0;
                    for (j, &xj) in xv.iter().enumerate() {
                        if xj != 0.0 {
                            acc += row[j] * xj;
                        }
                    }
                    acc
                })
                .collect()
        }
        Op::Lin { ca, a, cb, b } => get(*a).iter().zip(get(*b)).map(|(x, y)| ca * x + cb * y).collect(),
        Op::Affine { a, scale, bias } => get(*a).iter().zip(bias).map(|(x, c)| c + scale * x).collect(),
        Op::Spike { v, threshold, .. } => get(*v).iter().map(|&x| if x >= *threshold { 1.0 } else { 0.0 }).collect(),
        Op::SoftSpike { v, threshold, slope } => get(*v).iter().map(|&x| soft_spike(x, *threshold, *slope)).collect(),
        Op::HardReset { v, s, .. } => get(*v).iter().zip(get(*s)).map(|(x, s)| x * (1.0 - s)).collect(),
        Op::Mask { a, mask } => get(*a).iter().zip(mask).map(|(&x, &m)| if m { x } else { 0.0 }).collect(),
        Op::Outer { a, b, scale } => {
            let (av, bv) = (get(*a), get(*b));
            let mut out = Vec::with_capacity(av.len() * bv.len());
            for &ai in av {
                for &bj in bv {
                    out.push(scale * bj * ai);
                }
            }
            out
        }
        Op::Quantize { w, scheme, rng } => {
            let mut gen = rng.rng();
            get(*w)
                .iter()
                .map(|&x| Ok(f64::from(scheme.round_with(x, next_unit(&mut gen))?)))
                .collect::<Result<_>>()?
        }
        Op::Requantize {
            w,
            prev,
            delta,
            cols,
            scheme,
            rng,
        } => {
            let (wv, pv, dv) = (get(*w), get(*prev), get(*delta));
            let mut out = pv.to_vec();
            for (r, drow) in dv.chunks(*cols).enumerate() {
                if drow.iter().all(|&d| d == 0.0) {
                    continue;
                }
                let base = r * cols;
                let mut gen = rng.rng_at(base as u64);
                for (j, &d) in drow.iter().enumerate() {
                    let u = next_unit(&mut gen);
                    if d != 0.0 {
                        out[base + j] = f64::from(scheme.round_with(wv[base + j], u)?);
                    }
                }
            }
            out
        }
        Op::SoftmaxCe { x, scale, label } => {
            let xv = get(*x);
            let m = xv.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(scale * v));
            let z: f64 = xv.iter().map(|&v| (scale * v - m).exp()).sum();
            vec![m + z.ln() - scale * xv[*label]]
        }
    })
}
