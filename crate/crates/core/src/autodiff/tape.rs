//! Reverse-mode differentiation over a recorded tape.
//!
//! Every forward operation appends a node holding its output value and the
//! operands it read. Nodes are appended in evaluation order, so walking the
//! tape backwards visits each node after all of its consumers. Random draws
//! (dropout masks, channel noise, impairment parameters) enter the tape as
//! constants and stay fixed for the backward pass.

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use super::loss::{check_targets, LossKind};
use super::params::{ParamId, ParamStore};
use crate::error::{ensure, Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
    HardSigmoid,
}

impl Activation {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "linear" => Ok(Self::Linear),
            "relu" => Ok(Self::Relu),
            "tanh" => Ok(Self::Tanh),
            "hard_sigmoid" => Ok(Self::HardSigmoid),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Linear => x,
            Self::Relu => x.max(0.0),
            Self::Tanh => x.tanh(),
            Self::HardSigmoid => (0.2 * x + 0.5).clamp(0.0, 1.0),
        }
    }

    /// Derivative given input `x` and output `y`; zero at breakpoints.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Self::Linear => 1.0,
            Self::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Tanh => 1.0 - y * y,
            Self::HardSigmoid => {
                if x > -2.5 && x < 2.5 {
                    0.2
                } else {
                    0.0
                }
            }
        }
    }

    fn kink_distance(self, x: f64) -> f64 {
        match self {
            Self::Linear | Self::Tanh => f64::INFINITY,
            Self::Relu => x.abs(),
            Self::HardSigmoid => (x - 2.5).abs().min((x + 2.5).abs()),
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    Dense { x: Var, w: Var, b: Var },
    Conv1d { x: Var, k: Var, b: Var },
    Act { x: Var, kind: Activation },
    Mask { x: Var, factors: Vec<f64> },
    Reshape { x: Var },
    NormalizePower { x: Var, inv_scale: Vec<f64>, samples: usize },
    Rotate { x: Var, phase: Var, freq: Var, sign: f64 },
    TimeWarp { x: Var, shift: Var, rate: Var },
    Fir { x: Var, taps: Var },
    Add { a: Var, b: Var },
    Columns { x: Var, start: usize },
    Loss { p: Var, targets: Vec<f64>, kind: LossKind },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients of a scalar root with respect to every node that needed one.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn of(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

static BACKWARD_FAULT: AtomicBool = AtomicBool::new(false);

/// Test hook: scales every activation derivative by 1.01 so gradient checks
/// have a failing negative control. Affects all tapes in the process.
#[doc(hidden)]
pub fn inject_backward_fault(on: bool) {
    BACKWARD_FAULT.store(on, Ordering::Relaxed);
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn conv_pad_left(klen: usize) -> usize {
    (klen - 1) / 2
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant (inputs, targets, fixed random draws).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).value.clone(), Op::Param(id), true)
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        ensure!(
            xs.len() == 2 && ws.len() == 2 && bs.len() == 1 && xs[1] == ws[0] && bs[0] == ws[1],
            Dimension,
            "dense: input {:?}, weight {:?}, bias {:?}",
            xs,
            ws,
            bs
        );
        let (batch, n_in, n_out) = (xs[0], ws[0], ws[1]);
        let mut y = Vec::with_capacity(batch * n_out);
        let bias = self.value(b).values();
        for _ in 0..batch {
            y.extend_from_slice(bias);
        }
        gemm(
            batch,
            n_in,
            n_out,
            self.value(x).values(),
            (n_in as isize, 1),
            self.value(w).values(),
            (n_out as isize, 1),
            &mut y,
        );
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(Tensor::new(vec![batch, n_out], y)?, Op::Dense { x, w, b }, needs))
    }

    /// Same-length cross-correlation; the kernel is centered with
    /// `(klen - 1) / 2` taps reaching backwards in time.
    pub fn conv1d(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let (xs, ks, bs) = (self.shape(x), self.shape(k), self.shape(b));
        ensure!(
            xs.len() == 3 && ks.len() == 3 && bs.len() == 1 && xs[1] == ks[1] && bs[0] == ks[0],
            Dimension,
            "conv1d: input {:?}, kernel {:?}, bias {:?}",
            xs,
            ks,
            bs
        );
        let (batch, ch, len) = (xs[0], xs[1], xs[2]);
        let (filters, klen) = (ks[0], ks[2]);
        ensure!(
            klen <= len,
            Dimension,
            "conv1d: kernel length {klen} exceeds signal length {len}"
        );
        let pad = conv_pad_left(klen);
        let xv = self.value(x).values();
        let kv = self.value(k).values();
        let bv = self.value(b).values();
        let mut y = vec![0.0; batch * filters * len];
        for bi in 0..batch {
            let xin = &xv[bi * ch * len..][..ch * len];
            let out = &mut y[bi * filters * len..][..filters * len];
            for (f, row) in out.chunks_mut(len).enumerate() {
                row.fill(bv[f]);
            }
            if klen == 1 {
                gemm(filters, ch, len, kv, (ch as isize, 1), xin, (len as isize, 1), out);
                continue;
            }
            for (f, row) in out.chunks_mut(len).enumerate() {
                for c in 0..ch {
                    let xc = &xin[c * len..][..len];
                    let kk = &kv[(f * ch + c) * klen..][..klen];
                    for (j, &kval) in kk.iter().enumerate() {
                        let off = j as isize - pad as isize;
                        let (lo, hi) = valid_range(off, len);
                        let src = &xc[(lo as isize + off) as usize..(hi as isize + off) as usize];
                        for (o, &v) in row[lo..hi].iter_mut().zip(src) {
                            *o += kval * v;
                        }
                    }
                }
            }
        }
        let needs = self.needs(x) || self.needs(k) || self.needs(b);
        Ok(self.push(
            Tensor::new(vec![batch, filters, len], y)?,
            Op::Conv1d { x, k, b },
            needs,
        ))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let src = self.value(x);
        let y = src.values().iter().map(|&v| kind.apply(v)).collect();
        let t = Tensor::new(src.shape().to_vec(), y).expect("same shape");
        let needs = self.needs(x);
        self.push(t, Op::Act { x, kind }, needs)
    }

    /// Elementwise product with constant factors (dropout masks).
    pub fn mask(&mut self, x: Var, factors: Vec<f64>) -> Result<Var> {
        let src = self.value(x);
        ensure!(
            factors.len() == src.len(),
            Dimension,
            "mask of length {} for tensor of {}",
            factors.len(),
            src.len()
        );
        let y = src.values().iter().zip(&factors).map(|(a, b)| a * b).collect();
        let t = Tensor::new(src.shape().to_vec(), y)?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::Mask { x, factors }, needs))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::Reshape { x }, needs))
    }

    /// Scales every example (leading axis) to unit average complex-sample power.
    /// The trailing elements of each example are read as I/Q pairs, so their
    /// count must be even.
    pub fn normalize_power(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        let batch = src.shape()[0];
        ensure!(batch > 0, Dimension, "normalize_power: empty batch");
        let per = src.len() / batch;
        ensure!(
            per > 0 && per.is_multiple_of(2),
            Dimension,
            "normalize_power: {per} reals per example is not a whole number of complex samples"
        );
        let samples = per / 2;
        let mut y = src.values().to_vec();
        let mut inv_scale = Vec::with_capacity(batch);
        for ex in y.chunks_mut(per) {
            let power = ex.iter().map(|v| v * v).sum::<f64>() / samples as f64;
            ensure!(
                power > 0.0 && power.is_finite(),
                DegenerateInput,
                "cannot normalize a frame with power {power}"
            );
            let inv = 1.0 / power.sqrt();
            ex.iter_mut().for_each(|v| *v *= inv);
            inv_scale.push(inv);
        }
        let t = Tensor::new(src.shape().to_vec(), y)?;
        let needs = self.needs(x);
        Ok(self.push(
            t,
            Op::NormalizePower {
                x,
                inv_scale,
                samples,
            },
            needs,
        ))
    }

    /// Rotates I/Q frames `[batch, 2, n]` by `sign * (phase + freq * k)` at sample `k`.
    pub fn rotate(&mut self, x: Var, phase: Var, freq: Var, sign: f64) -> Result<Var> {
        let (batch, n) = self.frame_dims(x, "rotate")?;
        self.check_per_example(phase, batch, "rotate phase")?;
        self.check_per_example(freq, batch, "rotate freq")?;
        let xv = self.value(x).values();
        let (ph, fr) = (self.value(phase).values(), self.value(freq).values());
        let mut y = vec![0.0; xv.len()];
        for b in 0..batch {
            let (i_in, q_in) = xv[b * 2 * n..][..2 * n].split_at(n);
            let (i_out, q_out) = y[b * 2 * n..][..2 * n].split_at_mut(n);
            crate::channel::rotate_rows(i_in, q_in, i_out, q_out, sign * ph[b], sign * fr[b]);
        }
        let t = Tensor::new(self.shape(x).to_vec(), y)?;
        let needs = self.needs(x) || self.needs(phase) || self.needs(freq);
        Ok(self.push(
            t,
            Op::Rotate {
                x,
                phase,
                freq,
                sign,
            },
            needs,
        ))
    }

    /// Resamples every row of `[batch, ch, n]` at positions `(k - shift) / rate`
    /// by linear interpolation of the zero-extended signal.
    pub fn time_warp(&mut self, x: Var, shift: Var, rate: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        ensure!(xs.len() == 3, Dimension, "time_warp: expected [batch, ch, n], got {xs:?}");
        let (batch, ch, n) = (xs[0], xs[1], xs[2]);
        self.check_per_example(shift, batch, "time_warp shift")?;
        self.check_per_example(rate, batch, "time_warp rate")?;
        let xv = self.value(x).values();
        let (sv, rv) = (self.value(shift).values(), self.value(rate).values());
        let mut y = vec![0.0; xv.len()];
        for b in 0..batch {
            for c in 0..ch {
                let row = (b * ch + c) * n;
                crate::channel::warp_row(&xv[row..row + n], &mut y[row..row + n], sv[b], rv[b]);
            }
        }
        let needs = self.needs(x) || self.needs(shift) || self.needs(rate);
        Ok(self.push(Tensor::new(xs, y)?, Op::TimeWarp { x, shift, rate }, needs))
    }

    /// Causal FIR filtering of every row of `[batch, ch, n]` with per-example
    /// taps `[batch, t]`, truncated to `n` samples.
    pub fn fir(&mut self, x: Var, taps: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ts = self.shape(taps).to_vec();
        ensure!(
            xs.len() == 3 && ts.len() == 2 && ts[0] == xs[0],
            Dimension,
            "fir: input {xs:?}, taps {ts:?}"
        );
        let (batch, ch, n) = (xs[0], xs[1], xs[2]);
        let ntaps = ts[1];
        let xv = self.value(x).values();
        let hv = self.value(taps).values();
        let mut y = vec![0.0; xv.len()];
        for b in 0..batch {
            let h = &hv[b * ntaps..][..ntaps];
            for c in 0..ch {
                let row = (b * ch + c) * n;
                crate::channel::fir_row(&xv[row..row + n], h, &mut y[row..row + n]);
            }
        }
        let needs = self.needs(x) || self.needs(taps);
        Ok(self.push(Tensor::new(xs, y)?, Op::Fir { x, taps }, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        ensure!(
            self.shape(a) == self.shape(b),
            Dimension,
            "add: shapes {:?} and {:?}",
            self.shape(a),
            self.shape(b)
        );
        let y = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(p, q)| p + q)
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Add { a, b }, needs))
    }

    /// Selects columns `start..start + len` of a `[batch, p]` matrix.
    pub fn columns(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        ensure!(
            xs.len() == 2 && start + len <= xs[1],
            Dimension,
            "columns {start}..{} of {xs:?}",
            start + len
        );
        let xv = self.value(x).values();
        let y = xv
            .chunks(xs[1])
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let needs = self.needs(x);
        Ok(self.push(Tensor::new(vec![xs[0], len], y)?, Op::Columns { x, start }, needs))
    }

    /// Mean reconstruction loss of predictions `p` against bit targets.
    pub fn loss(&mut self, p: Var, targets: &[f64], kind: LossKind) -> Result<Var> {
        let pv = self.value(p).values();
        ensure!(
            targets.len() == pv.len(),
            Dimension,
            "loss: {} targets for {} predictions",
            targets.len(),
            pv.len()
        );
        ensure!(!pv.is_empty(), Dimension, "loss: empty input");
        check_targets(targets)?;
        let total: f64 = targets
            .iter()
            .zip(pv)
            .map(|(&t, &q)| kind.element(t == 1.0, q).0)
            .sum();
        let value = Tensor::scalar(total / pv.len() as f64);
        let needs = self.needs(p);
        Ok(self.push(
            value,
            Op::Loss {
                p,
                targets: targets.to_vec(),
                kind,
            },
            needs,
        ))
    }

    fn frame_dims(&self, x: Var, what: &str) -> Result<(usize, usize)> {
        let s = self.shape(x);
        ensure!(
            s.len() == 3 && s[1] == 2,
            Dimension,
            "{what}: expected [batch, 2, n], got {s:?}"
        );
        Ok((s[0], s[2]))
    }

    fn check_per_example(&self, v: Var, batch: usize, what: &str) -> Result<()> {
        ensure!(
            self.value(v).len() == batch,
            Dimension,
            "{what}: expected {batch} values, got shape {:?}",
            self.shape(v)
        );
        Ok(())
    }

    /// Smallest distance from any recorded operand to a point where its
    /// operation is not differentiable. Finite-difference probes closer than
    /// their step to a kink are unreliable.
    pub fn kink_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for node in &self.nodes {
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Act { x, kind } => {
                    for &v in self.value(*x).values() {
                        best = best.min(kind.kink_distance(v));
                    }
                }
                Op::Loss { p, targets, kind } => {
                    for (&t, &q) in targets.iter().zip(self.value(*p).values()) {
                        best = best.min(kind.kink_distance(t == 1.0, q));
                    }
                }
                Op::TimeWarp { x, shift, rate } if self.needs(*shift) || self.needs(*rate) => {
                    let n = self.shape(*x)[2];
                    for (&s, &r) in self.value(*shift).values().iter().zip(self.value(*rate).values()) {
                        for k in 0..n {
                            let u = (k as f64 - s) / r;
                            best = best.min((u - u.round()).abs());
                        }
                    }
                }
                _ => {}
            }
        }
        best
    }

    /// Reverse pass from a scalar `root`. Parameter gradients are written to
    /// `store` (replacing any previous buffers); the returned [`Gradients`]
    /// cover every node that needed one.
    pub fn backward(&self, root: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.gradients(root)?;
        for (node, g) in self.nodes.iter().zip(&grads.grads) {
            if let Op::Param(id) = node.op {
                let shape = node.value.shape().to_vec();
                let buf = g.clone().unwrap_or_else(|| vec![0.0; node.value.len()]);
                store.get_mut(id).grad = Some(Tensor::new(shape, buf)?);
            }
        }
        Ok(grads)
    }

    pub fn gradients(&self, root: Var) -> Result<Gradients> {
        if root.0 >= self.nodes.len() {
            return Err(Error::State(
                "backward requested for a node that was never recorded".into(),
            ));
        }
        ensure!(
            self.value(root).len() == 1,
            State,
            "backward root must be a scalar, got shape {:?}",
            self.shape(root)
        );
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        grads.resize(self.nodes.len(), None);
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Dense { x, w, b } => {
                let xs = self.shape(*x);
                let (batch, n_in) = (xs[0], xs[1]);
                let n_out = self.shape(*w)[1];
                if self.needs(*x) {
                    let dx = self.slot(grads, *x);
                    // dx += g * w^T
                    gemm(
                        batch,
                        n_out,
                        n_in,
                        g,
                        (n_out as isize, 1),
                        self.value(*w).values(),
                        (1, n_out as isize),
                        dx,
                    );
                }
                if self.needs(*w) {
                    let dw = self.slot(grads, *w);
                    // dw += x^T * g
                    gemm(
                        n_in,
                        batch,
                        n_out,
                        self.value(*x).values(),
                        (1, n_in as isize),
                        g,
                        (n_out as isize, 1),
                        dw,
                    );
                }
                if self.needs(*b) {
                    let db = self.slot(grads, *b);
                    for row in g.chunks(n_out) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                }
            }
            Op::Conv1d { x, k, b } => self.conv1d_backward(*x, *k, *b, g, grads),
            Op::Act { x, kind } => {
                if self.needs(*x) {
                    let xv = self.value(*x).values();
                    let yv = node.value.values();
                    let scale = if BACKWARD_FAULT.load(Ordering::Relaxed) { 1.01 } else { 1.0 };
                    let dx = self.slot(grads, *x);
                    for ((d, (&xi, &yi)), &gi) in dx.iter_mut().zip(xv.iter().zip(yv)).zip(g) {
                        *d += gi * kind.derivative(xi, yi) * scale;
                    }
                }
            }
            Op::Mask { x, factors } => {
                if self.needs(*x) {
                    let dx = self.slot(grads, *x);
                    for ((d, &f), &gi) in dx.iter_mut().zip(factors).zip(g) {
                        *d += gi * f;
                    }
                }
            }
            Op::Reshape { x } => {
                if self.needs(*x) {
                    let dx = self.slot(grads, *x);
                    dx.iter_mut().zip(g).for_each(|(d, gi)| *d += gi);
                }
            }
            Op::NormalizePower {
                x,
                inv_scale,
                samples,
            } => {
                if self.needs(*x) {
                    let xv = self.value(*x).values();
                    let per = xv.len() / inv_scale.len();
                    let dx = self.slot(grads, *x);
                    for (e, &inv) in inv_scale.iter().enumerate() {
                        let xe = &xv[e * per..][..per];
                        let ge = &g[e * per..][..per];
                        let dot: f64 = xe.iter().zip(ge).map(|(a, b)| a * b).sum();
                        let coef = dot * inv * inv * inv / *samples as f64;
                        for ((d, &xi), &gi) in dx[e * per..][..per].iter_mut().zip(xe).zip(ge) {
                            *d += gi * inv - xi * coef;
                        }
                    }
                }
            }
            Op::Rotate {
                x,
                phase,
                freq,
                sign,
            } => self.rotate_backward(node, *x, *phase, *freq, *sign, g, grads),
            Op::TimeWarp { x, shift, rate } => self.warp_backward(*x, *shift, *rate, g, grads),
            Op::Fir { x, taps } => self.fir_backward(*x, *taps, g, grads),
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if self.needs(v) {
                        let d = self.slot(grads, v);
                        d.iter_mut().zip(g).for_each(|(d, gi)| *d += gi);
                    }
                }
            }
            Op::Columns { x, start } => {
                if self.needs(*x) {
                    let p = self.shape(*x)[1];
                    let len = node.value.shape()[1];
                    let dx = self.slot(grads, *x);
                    for (row, grow) in dx.chunks_mut(p).zip(g.chunks(len)) {
                        for (d, gi) in row[*start..*start + len].iter_mut().zip(grow) {
                            *d += gi;
                        }
                    }
                }
            }
            Op::Loss { p, targets, kind } => {
                if self.needs(*p) {
                    let pv = self.value(*p).values();
                    let scale = g[0] / pv.len() as f64;
                    let dp = self.slot(grads, *p);
                    for ((d, &t), &q) in dp.iter_mut().zip(targets).zip(pv) {
                        *d += scale * kind.element(t == 1.0, q).1;
                    }
                }
            }
        }
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> &'g mut Vec<f64> {
        grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()])
    }

    fn conv1d_backward(&self, x: Var, k: Var, b: Var, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let xs = self.shape(x);
        let ks = self.shape(k);
        let (batch, ch, len) = (xs[0], xs[1], xs[2]);
        let (filters, klen) = (ks[0], ks[2]);
        let pad = conv_pad_left(klen);
        let xv = self.value(x).values();
        let kv = self.value(k).values();
        if self.needs(b) {
            let db = self.slot(grads, b);
            for bi in 0..batch {
                for (f, d) in db.iter_mut().enumerate() {
                    *d += g[(bi * filters + f) * len..][..len].iter().sum::<f64>();
                }
            }
        }
        if self.needs(k) {
            let dk = self.slot(grads, k);
            for bi in 0..batch {
                let xin = &xv[bi * ch * len..][..ch * len];
                let gb = &g[bi * filters * len..][..filters * len];
                if klen == 1 {
                    gemm(filters, len, ch, gb, (len as isize, 1), xin, (1, len as isize), dk);
                    continue;
                }
                for (f, gout) in gb.chunks(len).enumerate() {
                    for c in 0..ch {
                        let xc = &xin[c * len..][..len];
                        for j in 0..klen {
                            let off = j as isize - pad as isize;
                            let (lo, hi) = valid_range(off, len);
                            let src = &xc[(lo as isize + off) as usize..(hi as isize + off) as usize];
                            let s: f64 = gout[lo..hi].iter().zip(src).map(|(a, b)| a * b).sum();
                            dk[(f * ch + c) * klen + j] += s;
                        }
                    }
                }
            }
        }
        if self.needs(x) {
            let dx = self.slot(grads, x);
            for bi in 0..batch {
                let din = &mut dx[bi * ch * len..][..ch * len];
                let gb = &g[bi * filters * len..][..filters * len];
                if klen == 1 {
                    gemm(ch, filters, len, kv, (1, ch as isize), gb, (len as isize, 1), din);
                    continue;
                }
                for (f, gout) in gb.chunks(len).enumerate() {
                    for c in 0..ch {
                        let dc = &mut din[c * len..][..len];
                        for j in 0..klen {
                            let kval = kv[(f * ch + c) * klen + j];
                            let off = j as isize - pad as isize;
                            let (lo, hi) = valid_range(off, len);
                            let dst = &mut dc[(lo as isize + off) as usize..(hi as isize + off) as usize];
                            for (d, &gi) in dst.iter_mut().zip(&gout[lo..hi]) {
                                *d += kval * gi;
                            }
                        }
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn rotate_backward(
        &self,
        node: &Node,
        x: Var,
        phase: Var,
        freq: Var,
        sign: f64,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let s = self.shape(x);
        let (batch, n) = (s[0], s[2]);
        let (ph, fr) = (self.value(phase).values(), self.value(freq).values());
        if self.needs(x) {
            let dx = self.slot(grads, x);
            for b in 0..batch {
                let (gi, gq) = g[b * 2 * n..][..2 * n].split_at(n);
                let (di, dq) = dx[b * 2 * n..][..2 * n].split_at_mut(n);
                for k in 0..n {
                    let phi = sign * (ph[b] + fr[b] * k as f64);
                    let (sn, cs) = phi.sin_cos();
                    di[k] += gi[k] * cs + gq[k] * sn;
                    dq[k] += -gi[k] * sn + gq[k] * cs;
                }
            }
        }
        let (np, nf) = (self.needs(phase), self.needs(freq));
        if np || nf {
            let yv = node.value.values();
            let mut dphi_sum = vec![0.0; batch];
            let mut dphi_k = vec![0.0; batch];
            for b in 0..batch {
                let (gi, gq) = g[b * 2 * n..][..2 * n].split_at(n);
                let (yi, yq) = yv[b * 2 * n..][..2 * n].split_at(n);
                for k in 0..n {
                    let dphi = -gi[k] * yq[k] + gq[k] * yi[k];
                    dphi_sum[b] += dphi;
                    dphi_k[b] += dphi * k as f64;
                }
            }
            if np {
                let d = self.slot(grads, phase);
                d.iter_mut().zip(&dphi_sum).for_each(|(d, v)| *d += sign * v);
            }
            if nf {
                let d = self.slot(grads, freq);
                d.iter_mut().zip(&dphi_k).for_each(|(d, v)| *d += sign * v);
            }
        }
    }

    fn warp_backward(&self, x: Var, shift: Var, rate: Var, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let s = self.shape(x);
        let (batch, ch, n) = (s[0], s[1], s[2]);
        let xv = self.value(x).values();
        let (sv, rv) = (self.value(shift).values(), self.value(rate).values());
        let (ns, nr) = (self.needs(shift), self.needs(rate));
        if self.needs(x) {
            let dx = self.slot(grads, x);
            for b in 0..batch {
                for c in 0..ch {
                    let row = (b * ch + c) * n;
                    let (gr, dr) = (&g[row..row + n], &mut dx[row..row + n]);
                    for (k, &gk) in gr.iter().enumerate() {
                        let u = (k as f64 - sv[b]) / rv[b];
                        let i0 = u.floor();
                        let fr = u - i0;
                        let i0 = i0 as isize;
                        if (0..n as isize).contains(&i0) {
                            dr[i0 as usize] += gk * (1.0 - fr);
                        }
                        if (0..n as isize).contains(&(i0 + 1)) {
                            dr[(i0 + 1) as usize] += gk * fr;
                        }
                    }
                }
            }
        }
        if ns || nr {
            let mut dshift = vec![0.0; batch];
            let mut drate = vec![0.0; batch];
            for b in 0..batch {
                for c in 0..ch {
                    let row = &xv[(b * ch + c) * n..][..n];
                    let gr = &g[(b * ch + c) * n..][..n];
                    let at = |i: isize| {
                        if (0..n as isize).contains(&i) {
                            row[i as usize]
                        } else {
                            0.0
                        }
                    };
                    for (k, &gk) in gr.iter().enumerate() {
                        let u = (k as f64 - sv[b]) / rv[b];
                        let i0 = u.floor() as isize;
                        let slope = at(i0 + 1) - at(i0);
                        dshift[b] -= gk * slope / rv[b];
                        drate[b] -= gk * slope * u / rv[b];
                    }
                }
            }
            if ns {
                let d = self.slot(grads, shift);
                d.iter_mut().zip(&dshift).for_each(|(d, v)| *d += v);
            }
            if nr {
                let d = self.slot(grads, rate);
                d.iter_mut().zip(&drate).for_each(|(d, v)| *d += v);
            }
        }
    }

    fn fir_backward(&self, x: Var, taps: Var, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let s = self.shape(x);
        let (batch, ch, n) = (s[0], s[1], s[2]);
        let ntaps = self.shape(taps)[1];
        let xv = self.value(x).values();
        let hv = self.value(taps).values();
        if self.needs(x) {
            let dx = self.slot(grads, x);
            for b in 0..batch {
                let h = &hv[b * ntaps..][..ntaps];
                for c in 0..ch {
                    let row = (b * ch + c) * n;
                    let (gr, dr) = (&g[row..row + n], &mut dx[row..row + n]);
                    for (j, &hj) in h.iter().enumerate().take(n) {
                        for (d, &gk) in dr[..n - j].iter_mut().zip(&gr[j..]) {
                            *d += hj * gk;
                        }
                    }
                }
            }
        }
        if self.needs(taps) {
            let dh = self.slot(grads, taps);
            for b in 0..batch {
                for c in 0..ch {
                    let row = (b * ch + c) * n;
                    let (gr, xr) = (&g[row..row + n], &xv[row..row + n]);
                    for j in 0..ntaps.min(n) {
                        let s: f64 = gr[j..].iter().zip(&xr[..n - j]).map(|(a, b)| a * b).sum();
                        dh[b * ntaps + j] += s;
                    }
                }
            }
        }
    }
}

/// Output positions `lo..hi` for which `t + off` indexes inside `0..len`.
fn valid_range(off: isize, len: usize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = (len as isize - off).clamp(0, len as isize) as usize;
    (lo.min(hi), hi)
}

/// `c += a * b` for an `m x k` by `k x n` product with explicit (row, col) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the strides describe in-bounds views of `a` (m x k), `b` (k x n)
    // and a row-major `c` (m x n); `c` does not alias the inputs.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::loss::LossFn;

    fn t(shape: Vec<usize>, v: Vec<f64>) -> Tensor {
        Tensor::new(shape, v).unwrap()
    }

    #[test]
    fn dense_identity_and_direct_evaluation() {
        let mut tape = Tape::new();
        let x = tape.constant(t(vec![1, 2], vec![1.0, 2.0]));
        let w = tape.constant(t(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]));
        let b = tape.constant(t(vec![2], vec![0.0, 0.0]));
        let y = tape.dense(x, w, b).unwrap();
        assert_eq!(tape.value(y).values(), &[1.0, 2.0]);

        let x = tape.constant(t(vec![1, 2], vec![1.0, 1.0]));
        let w = tape.constant(t(vec![2, 1], vec![2.0, 3.0]));
        let b = tape.constant(t(vec![1], vec![1.0]));
        let y = tape.dense(x, w, b).unwrap();
        assert_eq!(tape.value(y).values(), &[6.0]);
    }

    #[test]
    fn dense_rejects_mismatch() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(vec![1, 3]));
        let w = tape.constant(Tensor::zeros(vec![2, 2]));
        let b = tape.constant(Tensor::zeros(vec![2]));
        assert!(matches!(tape.dense(x, w, b), Err(Error::Dimension(_))));
    }

    #[test]
    fn conv1d_unit_kernel_and_alignment() {
        let mut tape = Tape::new();
        let x = tape.constant(t(vec![1, 1, 3], vec![1.0, 2.0, 3.0]));
        let k = tape.constant(t(vec![1, 1, 1], vec![1.0]));
        let b = tape.constant(Tensor::zeros(vec![1]));
        let y = tape.conv1d(x, k, b).unwrap();
        assert_eq!(tape.value(y).values(), &[1.0, 2.0, 3.0]);

        // Tap 0 looks one sample back, so an impulse moves one sample later.
        let x = tape.constant(t(vec![1, 1, 3], vec![0.0, 1.0, 0.0]));
        let k = tape.constant(t(vec![1, 1, 3], vec![1.0, 0.0, 0.0]));
        let y = tape.conv1d(x, k, b).unwrap();
        assert_eq!(tape.value(y).values(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn conv1d_rejects_long_kernel() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(vec![1, 1, 3]));
        let k = tape.constant(Tensor::zeros(vec![1, 1, 4]));
        let b = tape.constant(Tensor::zeros(vec![1]));
        assert!(matches!(tape.conv1d(x, k, b), Err(Error::Dimension(_))));
    }

    #[test]
    fn activations() {
        assert_eq!(Activation::HardSigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::HardSigmoid.apply(10.0), 1.0);
        assert_eq!(Activation::HardSigmoid.apply(-10.0), 0.0);
        assert_eq!(Activation::Linear.apply(-3.25), -3.25);
        assert_eq!(Activation::Relu.apply(-1.0), 0.0);
        assert!(matches!(Activation::parse("swish"), Err(Error::Config(_))));
        assert_eq!(Activation::parse("tanh").unwrap(), Activation::Tanh);
    }

    #[test]
    fn backward_requires_recorded_scalar_root() {
        let tape = Tape::new();
        let mut store = ParamStore::new();
        assert!(matches!(tape.backward(Var(0), &mut store), Err(Error::State(_))));
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::zeros(vec![2]));
        assert!(matches!(tape.backward(v, &mut store), Err(Error::State(_))));
    }

    #[test]
    fn mse_at_minimum_has_zero_gradients() {
        let mut store = ParamStore::new();
        let w = store.add("w", t(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0])).unwrap();
        let b = store.add("b", Tensor::zeros(vec![2])).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(t(vec![1, 2], vec![1.0, 0.0]));
        let (wv, bv) = (tape.param(&store, w), tape.param(&store, b));
        let y = tape.dense(x, wv, bv).unwrap();
        let l = tape.loss(y, &[1.0, 0.0], LossKind::new(LossFn::Mse)).unwrap();
        tape.backward(l, &mut store).unwrap();
        for (_, p) in store.iter() {
            assert!(p.grad.as_ref().unwrap().values().iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn normalize_power_rejects_zero_frame() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(vec![1, 2, 4]));
        assert!(matches!(tape.normalize_power(x), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn valid_range_edges() {
        assert_eq!(valid_range(0, 5), (0, 5));
        assert_eq!(valid_range(-2, 5), (2, 5));
        assert_eq!(valid_range(3, 5), (0, 2));
        assert_eq!(valid_range(9, 5), (0, 0));
    }
}
