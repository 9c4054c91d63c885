//! Reverse-mode differentiation tape.
//!
//! Every op evaluates eagerly, appends its output to the tape and remembers
//! its inputs. [`Tape::backward`] sweeps the tape in reverse, accumulating
//! parameter gradients into the [`ParamStore`].

use super::kernels::{self, sigmoid, softplus};
use super::param::{ParamId, ParamStore};
use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

/// Handle to a value on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Conv { x: Var, w: Var, b: Option<Var> },
    MaxPool { x: Var, arg: Vec<usize> },
    Upsample { x: Var },
    Relu { x: Var },
    Sigmoid { x: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    MulChannel { x: Var, gate: Var },
    Affine { x: Var, scale: f64 },
    Concat { a: Var, b: Var },
    Sum { x: Var },
    SoftmaxCe { logits: Var, labels: Vec<u8> },
    Bce { logits: Var, targets: Vec<f64> },
    L1 { pred: Var, targets: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of leaves and parameters produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{what}: {} vs {}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Neumaier-compensated sum; keeps loss reductions accurate to a few ulps
/// so that finite-difference checks see little rounding noise.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn accumulate(slot: &mut Option<Tensor>, shape: Shape, f: impl FnOnce(&mut Tensor)) {
    let g = slot.get_or_insert_with(|| Tensor::zeros(shape));
    f(g);
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite output of {op:?}");
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A differentiable input; its gradient is reported by `backward`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        self.push(p.value.clone(), Op::Param(id), p.trainable)
    }

    /// Same-padded stride-1 cross-correlation. `w` is `cout×cin×k×k` with
    /// odd `k`; `b` is `1×cout×1×1`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        if ws.h != ws.w || ws.h.is_multiple_of(2) {
            return Err(Error::Shape(format!("conv kernel {ws} must be square and odd")));
        }
        if ws.c != xs.c {
            return Err(Error::Shape(format!(
                "conv kernel {ws} expects {} input channels, got {}",
                ws.c, xs.c
            )));
        }
        if let Some(b) = b {
            let bs = self.shape(b);
            if bs != Shape::new(1, ws.n, 1, 1) {
                return Err(Error::Shape(format!("conv bias {bs} for {} outputs", ws.n)));
            }
        }
        let out = kernels::conv2d_forward(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
        );
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(out, Op::Conv { x, w, b }, needs))
    }

    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if !s.h.is_multiple_of(2) || !s.w.is_multiple_of(2) {
            return Err(Error::Shape(format!("max_pool2 needs even spatial dims, got {s}")));
        }
        let (out, arg) = kernels::max_pool2_forward(self.value(x));
        let needs = self.needs(x);
        Ok(self.push(out, Op::MaxPool { x, arg }, needs))
    }

    /// Bilinear 2× upsampling (half-pixel centres).
    pub fn upsample2(&mut self, x: Var) -> Var {
        let out = kernels::upsample2_forward(self.value(x));
        let needs = self.needs(x);
        self.push(out, Op::Upsample { x }, needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        let needs = self.needs(x);
        self.push(out, Op::Relu { x }, needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let needs = self.needs(x);
        self.push(out, Op::Sigmoid { x }, needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "add")?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add { a, b }, needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "mul")?;
        let mut out = self.value(a).clone();
        for (o, v) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o *= v;
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul { a, b }, needs))
    }

    /// `x ⊗ gate` where the single-channel `gate` broadcasts over channels.
    pub fn mul_channel(&mut self, x: Var, gate: Var) -> Result<Var> {
        let xs = self.shape(x);
        let gs = self.shape(gate);
        if gs != xs.with_channels(1) {
            return Err(Error::Shape(format!("gate {gs} cannot broadcast over {xs}")));
        }
        let plane = xs.plane();
        let mut out = self.value(x).clone();
        let g = self.value(gate).data();
        for (i, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            let n = i / xs.c;
            for (o, gv) in chunk.iter_mut().zip(&g[n * plane..(n + 1) * plane]) {
                *o *= gv;
            }
        }
        let needs = self.needs(x) || self.needs(gate);
        Ok(self.push(out, Op::MulChannel { x, gate }, needs))
    }

    /// `scale · x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(x).map(|v| scale * v + shift);
        let needs = self.needs(x);
        self.push(out, Op::Affine { x, scale }, needs)
    }

    /// Channel-wise concatenation.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa.with_channels(0) != sb.with_channels(0) {
            return Err(Error::Shape(format!("concat {sa} with {sb}")));
        }
        let shape = sa.with_channels(sa.c + sb.c);
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..sa.n {
            data.extend_from_slice(self.value(a).item_slice(n));
            data.extend_from_slice(self.value(b).item_slice(n));
        }
        let out = Tensor::from_vec(shape, data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Concat { a, b }, needs))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = compensated_sum(self.value(x).data().iter().copied());
        let needs = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum { x }, needs)
    }

    /// Mean softmax cross-entropy over all pixels of all batch items.
    pub fn softmax_ce(&mut self, logits: Var, labels: &[u8]) -> Result<Var> {
        let s = self.shape(logits);
        if labels.len() != s.n * s.plane() {
            return Err(Error::Shape(format!(
                "{} labels for logits {s}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= s.c) {
            return Err(Error::LabelOutOfRange {
                label: bad as usize,
                classes: s.c,
            });
        }
        let v = self.value(logits);
        let plane = s.plane();
        let total = compensated_sum((0..s.n).flat_map(|n| {
            let item = v.item_slice(n);
            (0..plane).map(move |p| {
                let max = (0..s.c).map(|c| item[c * plane + p]).fold(f64::MIN, f64::max);
                let lse = max
                    + (0..s.c)
                        .map(|c| (item[c * plane + p] - max).exp())
                        .sum::<f64>()
                        .ln();
                lse - item[labels[n * plane + p] as usize * plane + p]
            })
        }));
        let count = (s.n * plane) as f64;
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(total / count),
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
            },
            needs,
        ))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against 0/1 targets,
    /// evaluated in the fused logit form.
    pub fn bce_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let v = self.value(logits);
        if targets.len() != v.numel() {
            return Err(Error::Shape(format!(
                "{} targets for logits {}",
                targets.len(),
                v.shape()
            )));
        }
        let total = compensated_sum(
            v.data()
                .iter()
                .zip(targets)
                .map(|(&z, &y)| softplus(z) - z * y),
        );
        let mean = total / v.numel() as f64;
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(mean),
            Op::Bce {
                logits,
                targets: targets.to_vec(),
            },
            needs,
        ))
    }

    /// Mean absolute error against constant targets.
    pub fn l1(&mut self, pred: Var, targets: &[f64]) -> Result<Var> {
        let v = self.value(pred);
        if targets.len() != v.numel() {
            return Err(Error::Shape(format!(
                "{} targets for prediction {}",
                targets.len(),
                v.shape()
            )));
        }
        let total = compensated_sum(v.data().iter().zip(targets).map(|(p, t)| (p - t).abs()));
        let mean = total / v.numel() as f64;
        let needs = self.needs(pred);
        Ok(self.push(
            Tensor::scalar(mean),
            Op::L1 {
                pred,
                targets: targets.to_vec(),
            },
            needs,
        ))
    }

    /// Propagates d(loss)/d(node) backwards. Parameter gradients are added
    /// to the store (so repeated calls accumulate); leaf gradients are
    /// returned.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        if self.shape(loss) != Shape::scalar() {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got {}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::Param(id) => {
                    store.accumulate_grad(*id, &g);
                    grads[i] = Some(g);
                }
                Op::Conv { x, w, b } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    // Distinct nodes, so the three slots can be borrowed at once.
                    let mut take = |v: Var| {
                        self.needs(v)
                            .then(|| grads[v.0].take().unwrap_or_else(|| Tensor::zeros(self.shape(v))))
                    };
                    let mut dx = take(*x);
                    let mut dw = take(*w);
                    let mut db = b.and_then(&mut take);
                    kernels::conv2d_backward(xv, wv, &g, dx.as_mut(), dw.as_mut(), db.as_mut());
                    for (v, t) in [(Some(*x), dx), (Some(*w), dw), (*b, db)] {
                        if let (Some(v), Some(t)) = (v, t) {
                            grads[v.0] = Some(t);
                        }
                    }
                }
                Op::MaxPool { x, arg } => {
                    accumulate(&mut grads[x.0], self.shape(*x), |t| {
                        let d = t.data_mut();
                        for (&src, gv) in arg.iter().zip(g.data()) {
                            d[src] += gv;
                        }
                    });
                }
                Op::Upsample { x } => {
                    let s = self.shape(*x);
                    accumulate(&mut grads[x.0], s, |t| kernels::upsample2_backward(s, &g, t));
                }
                Op::Relu { x } => {
                    let xv = self.value(*x);
                    accumulate(&mut grads[x.0], xv.shape(), |t| {
                        for ((d, gv), z) in t.data_mut().iter_mut().zip(g.data()).zip(xv.data()) {
                            if *z > 0.0 {
                                *d += gv;
                            }
                        }
                    });
                }
                Op::Sigmoid { x } => {
                    let yv = &node.value;
                    accumulate(&mut grads[x.0], yv.shape(), |t| {
                        for ((d, gv), y) in t.data_mut().iter_mut().zip(g.data()).zip(yv.data()) {
                            *d += gv * y * (1.0 - y);
                        }
                    });
                }
                Op::Add { a, b } => {
                    for v in [a, b] {
                        if self.needs(*v) {
                            accumulate(&mut grads[v.0], g.shape(), |t| t.add_assign(&g));
                        }
                    }
                }
                Op::Mul { a, b } => {
                    for (v, other) in [(a, b), (b, a)] {
                        if self.needs(*v) {
                            let ov = self.value(*other);
                            accumulate(&mut grads[v.0], g.shape(), |t| {
                                for ((d, gv), o) in
                                    t.data_mut().iter_mut().zip(g.data()).zip(ov.data())
                                {
                                    *d += gv * o;
                                }
                            });
                        }
                    }
                }
                Op::MulChannel { x, gate } => {
                    let xs = self.shape(*x);
                    let plane = xs.plane();
                    let gv = self.value(*gate);
                    let xv = self.value(*x);
                    if self.needs(*x) {
                        accumulate(&mut grads[x.0], xs, |t| {
                            for (i, (d, gg)) in t
                                .data_mut()
                                .chunks_mut(plane)
                                .zip(g.data().chunks(plane))
                                .enumerate()
                            {
                                let n = i / xs.c;
                                let gate = &gv.data()[n * plane..(n + 1) * plane];
                                for ((dv, a), b) in d.iter_mut().zip(gg).zip(gate) {
                                    *dv += a * b;
                                }
                            }
                        });
                    }
                    if self.needs(*gate) {
                        accumulate(&mut grads[gate.0], gv.shape(), |t| {
                            let d = t.data_mut();
                            for (i, (gg, xx)) in
                                g.data().chunks(plane).zip(xv.data().chunks(plane)).enumerate()
                            {
                                let n = i / xs.c;
                                for ((dv, a), b) in
                                    d[n * plane..(n + 1) * plane].iter_mut().zip(gg).zip(xx)
                                {
                                    *dv += a * b;
                                }
                            }
                        });
                    }
                }
                Op::Affine { x, scale } => {
                    accumulate(&mut grads[x.0], g.shape(), |t| {
                        for (d, gv) in t.data_mut().iter_mut().zip(g.data()) {
                            *d += scale * gv;
                        }
                    });
                }
                Op::Concat { a, b } => {
                    let sa = self.shape(*a);
                    let sb = self.shape(*b);
                    let la = sa.c * sa.plane();
                    let lb = sb.c * sb.plane();
                    for n in 0..sa.n {
                        let item = g.item_slice(n);
                        if self.needs(*a) {
                            accumulate(&mut grads[a.0], sa, |t| {
                                for (d, v) in t.data_mut()[n * la..(n + 1) * la].iter_mut().zip(&item[..la]) {
                                    *d += v;
                                }
                            });
                        }
                        if self.needs(*b) {
                            accumulate(&mut grads[b.0], sb, |t| {
                                for (d, v) in t.data_mut()[n * lb..(n + 1) * lb].iter_mut().zip(&item[la..]) {
                                    *d += v;
                                }
                            });
                        }
                    }
                }
                Op::Sum { x } => {
                    let s = g.item();
                    accumulate(&mut grads[x.0], self.shape(*x), |t| {
                        t.data_mut().iter_mut().for_each(|d| *d += s);
                    });
                }
                Op::SoftmaxCe { logits, labels } => {
                    let v = self.value(*logits);
                    let s = v.shape();
                    let plane = s.plane();
                    let scale = g.item() / (s.n * plane) as f64;
                    accumulate(&mut grads[logits.0], s, |t| {
                        let d = t.data_mut();
                        for n in 0..s.n {
                            let item = v.item_slice(n);
                            let off = n * s.c * plane;
                            for p in 0..plane {
                                let max = (0..s.c)
                                    .map(|c| item[c * plane + p])
                                    .fold(f64::MIN, f64::max);
                                let z: f64 =
                                    (0..s.c).map(|c| (item[c * plane + p] - max).exp()).sum();
                                let label = labels[n * plane + p] as usize;
                                for c in 0..s.c {
                                    let prob = (item[c * plane + p] - max).exp() / z;
                                    let onehot = if c == label { 1.0 } else { 0.0 };
                                    d[off + c * plane + p] += scale * (prob - onehot);
                                }
                            }
                        }
                    });
                }
                Op::Bce { logits, targets } => {
                    let v = self.value(*logits);
                    let scale = g.item() / v.numel() as f64;
                    accumulate(&mut grads[logits.0], v.shape(), |t| {
                        for ((d, z), y) in t.data_mut().iter_mut().zip(v.data()).zip(targets) {
                            *d += scale * (sigmoid(*z) - y);
                        }
                    });
                }
                Op::L1 { pred, targets } => {
                    let v = self.value(*pred);
                    let scale = g.item() / v.numel() as f64;
                    accumulate(&mut grads[pred.0], v.shape(), |t| {
                        for ((d, p), y) in t.data_mut().iter_mut().zip(v.data()).zip(targets) {
                            let diff = p - y;
                            if diff > 0.0 {
                                *d += scale;
                            } else if diff < 0.0 {
                                *d -= scale;
                            }
                        }
                    });
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Smallest distance of any piecewise-linear switch (ReLU input, gap
    /// between the two largest max-pool candidates, L1 residual) from its
    /// kink. Exact max-pool ties are skipped: they arise between inactive
    /// ReLU outputs, whose own margin already covers them.
    pub fn kink_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for node in &self.nodes {
            match &node.op {
                Op::Relu { x } => {
                    for z in self.value(*x).data() {
                        margin = margin.min(z.abs());
                    }
                }
                Op::MaxPool { x, arg } => {
                    let xv = self.value(*x);
                    let s = xv.shape();
                    for &best in arg {
                        let (row, col) = ((best / s.w) % s.h, best % s.w);
                        let base = best - row * s.w - col;
                        let (y0, x0) = (row & !1, col & !1);
                        for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            let i = base + (y0 + dy) * s.w + x0 + dx;
                            let gap = xv.data()[best] - xv.data()[i];
                            if i != best && gap > 0.0 {
                                margin = margin.min(gap);
                            }
                        }
                    }
                }
                Op::L1 { pred, targets } => {
                    for (p, t) in self.value(*pred).data().iter().zip(targets) {
                        margin = margin.min((p - t).abs());
                    }
                }
                _ => {}
            }
        }
        margin
    }

    /// Hash of the active piece of every piecewise-linear op; equal
    /// signatures mean the same linear region.
    pub fn kink_signature(&self) -> u64 {
        const PRIME: u64 = 0x100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(PRIME);
        };
        for (i, node) in self.nodes.iter().enumerate() {
            match &node.op {
                Op::Relu { x } => {
                    mix(i as u64);
                    for z in self.value(*x).data() {
                        mix(u64::from(*z > 0.0));
                    }
                }
                Op::MaxPool { arg, .. } => {
                    mix(i as u64);
                    arg.iter().for_each(|&a| mix(a as u64));
                }
                Op::L1 { pred, targets } => {
                    mix(i as u64);
                    for (p, t) in self.value(*pred).data().iter().zip(targets) {
                        mix(u64::from(p > t));
                    }
                }
                _ => {}
            }
        }
        h
    }
}
