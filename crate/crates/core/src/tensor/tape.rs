//! Computation tape: records forward operations, replays them backwards.
//!
//! Nodes are appended in execution order, so every operation's inputs precede
//! it and a single reverse sweep propagates gradients to all leaves. A tape
//! and its tensors belong to one thread; independent samples get independent
//! tapes.

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Floor applied to probabilities before the cross-entropy log.
pub const CROSS_ENTROPY_CLAMP: f32 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, f32),
    Matmul(usize, usize),
    Transpose(usize),
    Conv2d {
        input: usize,
        weight: usize,
        stride: usize,
        padding: usize,
        groups: usize,
    },
    ChannelBias(usize, usize),
    RowBias(usize, usize),
    Relu(usize),
    Softmax(usize),
    LayerNorm {
        input: usize,
        gamma: usize,
        beta: usize,
        eps: f32,
    },
    GlobalAvgPool(usize),
    MeanRows(usize),
    SumAll(usize),
    SliceCols {
        input: usize,
        lo: usize,
        hi: usize,
    },
    ConcatCols(Vec<usize>),
    Patchify {
        input: usize,
        patch: usize,
    },
    Reshape(usize),
    CrossEntropy {
        probs: usize,
        target: usize,
    },
}

struct Node {
    tensor: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct GradStore {
    grads: Vec<Option<Vec<f32>>>,
}

impl GradStore {
    pub fn get(&self, v: Var) -> Option<&[f32]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f32>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

/// Forward-operation recorder with reverse-mode gradient replay.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    /// Registers a leaf value. Gradients flow to it iff `t.requires_grad`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let needs = t.requires_grad;
        self.push(t, Op::Leaf, needs)
    }

    /// Registers a constant leaf that never receives gradients.
    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.requires_grad = false;
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].tensor
    }

    fn push(&mut self, tensor: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            tensor,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].needs_grad)
    }

    // ── forward operations ─────────────────────────────────────────────

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].tensor, &self.nodes[b.0].tensor);
        if ta.shape() != tb.shape() {
            return Err(Error::shape(
                "add",
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let needs = self.needs(&[a.0, b.0]);
        Ok(self.push(t, Op::Add(a.0, b.0), needs))
    }

    /// Elementwise (Hadamard) product of two same-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].tensor, &self.nodes[b.0].tensor);
        if ta.shape() != tb.shape() {
            return Err(Error::shape(
                "mul",
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let needs = self.needs(&[a.0, b.0]);
        Ok(self.push(t, Op::Mul(a.0, b.0), needs))
    }

    /// Multiplication by a compile-time constant.
    pub fn scale(&mut self, a: Var, c: f32) -> Var {
        let ta = &self.nodes[a.0].tensor;
        let data = ta.data().iter().map(|x| x * c).collect();
        let t = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(&[a.0]);
        self.push(t, Op::Scale(a.0, c), needs)
    }

    /// Matrix product of `a[m×k]` and `b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].tensor, &self.nodes[b.0].tensor);
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape(
                "matmul",
                format!("cannot multiply {sa:?} by {sb:?}"),
            ));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = matmul_raw(ta.data(), tb.data(), m, k, n);
        let t = Tensor::new(vec![m, n], data)?;
        let needs = self.needs(&[a.0, b.0]);
        Ok(self.push(t, Op::Matmul(a.0, b.0), needs))
    }

    /// 2-D transpose.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = &self.nodes[a.0].tensor;
        let s = ta.shape();
        if s.len() != 2 {
            return Err(Error::shape("transpose", format!("expected rank 2, got {s:?}")));
        }
        let (m, n) = (s[0], s[1]);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = ta.data()[i * n + j];
            }
        }
        let t = Tensor::new(vec![n, m], data)?;
        let needs = self.needs(&[a.0]);
        Ok(self.push(t, Op::Transpose(a.0), needs))
    }

    /// Grouped 2-D cross-correlation (deep-learning convolution, no kernel
    /// flip) of `input[C_in×H×W]` with `weight[C_out×(C_in/groups)×k×k]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Var> {
        let (ti, tw) = (&self.nodes[input.0].tensor, &self.nodes[weight.0].tensor);
        let (si, sw) = (ti.shape(), tw.shape());
        if si.len() != 3 || sw.len() != 4 {
            return Err(Error::shape(
                "conv2d",
                format!("expected input rank 3 and weight rank 4, got {si:?} and {sw:?}"),
            ));
        }
        let (c_in, h, w) = (si[0], si[1], si[2]);
        let (c_out, c_g, kh, kw) = (sw[0], sw[1], sw[2], sw[3]);
        if kh != kw || kh % 2 == 0 {
            return Err(Error::shape("conv2d", format!("kernel must be square and odd, got {kh}x{kw}")));
        }
        if groups == 0 || c_in % groups != 0 || c_out % groups != 0 || c_g != c_in / groups {
            return Err(Error::shape(
                "conv2d",
                format!("groups {groups} incompatible with C_in {c_in}, C_out {c_out}, weight group size {c_g}"),
            ));
        }
        if stride == 0 {
            return Err(Error::shape("conv2d", "stride must be >= 1".to_string()));
        }
        let k = kh;
        if h + 2 * padding < k || w + 2 * padding < k {
            return Err(Error::shape(
                "conv2d",
                format!("empty output for input {h}x{w}, kernel {k}, padding {padding}"),
            ));
        }
        let oh = (h + 2 * padding - k) / stride + 1;
        let ow = (w + 2 * padding - k) / stride + 1;
        let data = conv2d_raw(
            ti.data(),
            tw.data(),
            c_in,
            h,
            w,
            c_out,
            k,
            stride,
            padding,
            groups,
        );
        let t = Tensor::new(vec![c_out, oh, ow], data)?;
        let needs = self.needs(&[input.0, weight.0]);
        Ok(self.push(
            t,
            Op::Conv2d {
                input: input.0,
                weight: weight.0,
                stride,
                padding,
                groups,
            },
            needs,
        ))
    }

    /// `x[C×H×W] + bias[C]`, broadcast over the spatial plane.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (&self.nodes[x.0].tensor, &self.nodes[bias.0].tensor);
        let (sx, sb) = (tx.shape(), tb.shape());
        if sx.len() != 3 || sb.len() != 1 || sb[0] != sx[0] {
            return Err(Error::shape(
                "add_channel_bias",
                format!("{sx:?} vs bias {sb:?}"),
            ));
        }
        let (c, h, w) = (sx[0], sx[1], sx[2]);
        let plane = h * w;
        let mut data = tx.data().to_vec();
        for ci in 0..c {
            let b = tb.data()[ci];
            for v in &mut data[ci * plane..(ci + 1) * plane] {
                *v += b;
            }
        }
        let t = Tensor::new(sx.to_vec(), data)?;
        let needs = self.needs(&[x.0, bias.0]);
        Ok(self.push(t, Op::ChannelBias(x.0, bias.0), needs))
    }

    /// `x[...×k] + bias[k]`, broadcast over leading rows.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (&self.nodes[x.0].tensor, &self.nodes[bias.0].tensor);
        let k = *tx.shape().last().unwrap_or(&0);
        if tb.shape().len() != 1 || tb.shape()[0] != k {
            return Err(Error::shape(
                "add_row_bias",
                format!("{:?} vs bias {:?}", tx.shape(), tb.shape()),
            ));
        }
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(k) {
            for (v, b) in row.iter_mut().zip(tb.data()) {
                *v += b;
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        let needs = self.needs(&[x.0, bias.0]);
        Ok(self.push(t, Op::RowBias(x.0, bias.0), needs))
    }

    /// Elementwise `max(0, x)`. NaN propagates (instead of being absorbed
    /// by the max) so a diverged forward pass stays detectable at the loss.
    pub fn relu(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].tensor;
        let data = ta
            .data()
            .iter()
            .map(|&x| if x.is_nan() { x } else { x.max(0.0) })
            .collect();
        let t = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(&[a.0]);
        self.push(t, Op::Relu(a.0), needs)
    }

    /// Row-wise softmax over the last axis, computed with max-subtraction.
    pub fn softmax(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].tensor;
        let n = *ta.shape().last().expect("non-empty shape");
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(n) {
            softmax_row(row);
        }
        let t = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(&[a.0]);
        self.push(t, Op::Softmax(a.0), needs)
    }

    /// Per-row normalization over the last axis followed by an affine map.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f32) -> Result<Var> {
        let (tx, tg, tb) = (
            &self.nodes[x.0].tensor,
            &self.nodes[gamma.0].tensor,
            &self.nodes[beta.0].tensor,
        );
        let d = *tx.shape().last().unwrap_or(&0);
        if tg.shape() != [d] || tb.shape() != [d] {
            return Err(Error::shape(
                "layer_norm",
                format!(
                    "last dim {d} vs gamma {:?}, beta {:?}",
                    tg.shape(),
                    tb.shape()
                ),
            ));
        }
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(d) {
            let (mean, inv) = row_mean_inv_std(row, eps);
            for (v, (&g, &b)) in row.iter_mut().zip(tg.data().iter().zip(tb.data())) {
                *v = (*v - mean) * inv * g + b;
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        let needs = self.needs(&[x.0, gamma.0, beta.0]);
        Ok(self.push(
            t,
            Op::LayerNorm {
                input: x.0,
                gamma: gamma.0,
                beta: beta.0,
                eps,
            },
            needs,
        ))
    }

    /// Per-channel spatial mean: `[C×H×W] -> [C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let tx = &self.nodes[x.0].tensor;
        let s = tx.shape();
        if s.len() != 3 {
            return Err(Error::shape("global_avg_pool", format!("expected rank 3, got {s:?}")));
        }
        let (c, plane) = (s[0], s[1] * s[2]);
        let data = (0..c)
            .map(|ci| {
                let sum: f32 = tx.data()[ci * plane..(ci + 1) * plane].iter().sum();
                sum / plane as f32
            })
            .collect();
        let t = Tensor::new(vec![c], data)?;
        let needs = self.needs(&[x.0]);
        Ok(self.push(t, Op::GlobalAvgPool(x.0), needs))
    }

    /// Column means of a matrix: `[N×d] -> [d]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let tx = &self.nodes[x.0].tensor;
        let s = tx.shape();
        if s.len() != 2 {
            return Err(Error::shape("mean_rows", format!("expected rank 2, got {s:?}")));
        }
        let (n, d) = (s[0], s[1]);
        let mut data = vec![0.0f32; d];
        for row in tx.data().chunks(d) {
            for (acc, v) in data.iter_mut().zip(row) {
                *acc += v;
            }
        }
        for v in &mut data {
            *v /= n as f32;
        }
        let t = Tensor::new(vec![d], data)?;
        let needs = self.needs(&[x.0]);
        Ok(self.push(t, Op::MeanRows(x.0), needs))
    }

    /// Sum of all elements, as a scalar tensor.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let tx = &self.nodes[x.0].tensor;
        let t = Tensor::scalar(tx.data().iter().sum());
        let needs = self.needs(&[x.0]);
        self.push(t, Op::SumAll(x.0), needs)
    }

    /// Column slice `[N×d] -> [N×(hi−lo)]`.
    pub fn slice_cols(&mut self, x: Var, lo: usize, hi: usize) -> Result<Var> {
        let tx = &self.nodes[x.0].tensor;
        let s = tx.shape();
        if s.len() != 2 || lo >= hi || hi > s[1] {
            return Err(Error::shape(
                "slice_cols",
                format!("columns {lo}..{hi} of {s:?}"),
            ));
        }
        let (n, d) = (s[0], s[1]);
        let mut data = Vec::with_capacity(n * (hi - lo));
        for row in tx.data().chunks(d) {
            data.extend_from_slice(&row[lo..hi]);
        }
        let t = Tensor::new(vec![n, hi - lo], data)?;
        let needs = self.needs(&[x.0]);
        Ok(self.push(t, Op::SliceCols { input: x.0, lo, hi }, needs))
    }

    /// Concatenates matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_cols", "no parts".to_string()));
        }
        let n = self.nodes[parts[0].0].tensor.shape()[0];
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let s = self.nodes[p.0].tensor.shape();
            if s.len() != 2 || s[0] != n {
                return Err(Error::shape(
                    "concat_cols",
                    format!("part shape {s:?} does not match {n} rows"),
                ));
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for r in 0..n {
            for (p, &w) in parts.iter().zip(&widths) {
                let src = self.nodes[p.0].tensor.data();
                data.extend_from_slice(&src[r * w..(r + 1) * w]);
            }
        }
        let t = Tensor::new(vec![n, total], data)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let needs = self.needs(&ids);
        Ok(self.push(t, Op::ConcatCols(ids), needs))
    }

    /// Splits `[C×H×W]` into non-overlapping `patch×patch` tiles, one row per
    /// tile, each flattened channel-major then row-major.
    pub fn patchify(&mut self, x: Var, patch: usize) -> Result<Var> {
        let tx = &self.nodes[x.0].tensor;
        let s = tx.shape();
        if s.len() != 3 || patch == 0 || !s[1].is_multiple_of(patch) || !s[2].is_multiple_of(patch) {
            return Err(Error::shape(
                "patchify",
                format!("input {s:?} not divisible into {patch}x{patch} patches"),
            ));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let (gy, gx) = (h / patch, w / patch);
        let n = gy * gx;
        let row_len = c * patch * patch;
        let mut data = vec![0.0f32; n * row_len];
        let src = tx.data();
        for py in 0..gy {
            for px in 0..gx {
                let row = py * gx + px;
                for ci in 0..c {
                    for dy in 0..patch {
                        for dx in 0..patch {
                            let dst = row * row_len + ci * patch * patch + dy * patch + dx;
                            let srcidx = ci * h * w + (py * patch + dy) * w + (px * patch + dx);
                            data[dst] = src[srcidx];
                        }
                    }
                }
            }
        }
        let t = Tensor::new(vec![n, row_len], data)?;
        let needs = self.needs(&[x.0]);
        Ok(self.push(t, Op::Patchify { input: x.0, patch }, needs))
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let tx = &self.nodes[x.0].tensor;
        let numel: usize = shape.iter().product();
        if numel != tx.numel() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {shape:?}", tx.shape()),
            ));
        }
        let t = Tensor::new(shape, tx.data().to_vec())?;
        let needs = self.needs(&[x.0]);
        Ok(self.push(t, Op::Reshape(x.0), needs))
    }

    /// `−log(probs[target])` with the probability clamped to ≥ 1e-12.
    pub fn cross_entropy(&mut self, probs: Var, target: usize) -> Result<Var> {
        let tp = &self.nodes[probs.0].tensor;
        let n = *tp.shape().last().unwrap_or(&0);
        if n != tp.numel() {
            return Err(Error::shape(
                "cross_entropy",
                format!("expected a single probability row, got {:?}", tp.shape()),
            ));
        }
        if target >= n {
            return Err(Error::Contract(format!(
                "cross_entropy target {target} out of range for {n} classes"
            )));
        }
        // clamp without eating NaN: a poisoned probability must poison the
        // loss so training can abort on it
        let p = tp.data()[target];
        let p = if p < CROSS_ENTROPY_CLAMP { CROSS_ENTROPY_CLAMP } else { p };
        let t = Tensor::scalar(-p.ln());
        let needs = self.needs(&[probs.0]);
        Ok(self.push(t, Op::CrossEntropy { probs: probs.0, target }, needs))
    }

    // ── backward ───────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss; consumes the tape and returns the
    /// gradient of the loss with respect to every recorded value that needs
    /// one. Each `requires_grad` leaf is populated exactly once.
    pub fn backward(self, loss: Var) -> Result<GradStore> {
        if self.nodes[loss.0].tensor.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].tensor.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                grads[id] = None;
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    self.accum(&mut grads, *a, &g);
                    self.accum(&mut grads, *b, &g);
                }
                Op::Mul(a, b) => {
                    let da: Vec<f32> = g
                        .iter()
                        .zip(self.nodes[*b].tensor.data())
                        .map(|(gi, bi)| gi * bi)
                        .collect();
                    let db: Vec<f32> = g
                        .iter()
                        .zip(self.nodes[*a].tensor.data())
                        .map(|(gi, ai)| gi * ai)
                        .collect();
                    self.accum(&mut grads, *a, &da);
                    self.accum(&mut grads, *b, &db);
                }
                Op::Scale(a, c) => {
                    let da: Vec<f32> = g.iter().map(|gi| gi * c).collect();
                    self.accum(&mut grads, *a, &da);
                }
                Op::Matmul(a, b) => {
                    let (sa, sb) = (
                        self.nodes[*a].tensor.shape(),
                        self.nodes[*b].tensor.shape(),
                    );
                    let (m, k, n) = (sa[0], sa[1], sb[1]);
                    // dA = g · Bᵀ, dB = Aᵀ · g
                    let bd = self.nodes[*b].tensor.data();
                    let ad = self.nodes[*a].tensor.data();
                    let mut da = vec![0.0f32; m * k];
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g[i * n + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for p in 0..k {
                                da[i * k + p] += gij * bd[p * n + j];
                            }
                        }
                    }
                    let mut db = vec![0.0f32; k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let aip = ad[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                db[p * n + j] += aip * g[i * n + j];
                            }
                        }
                    }
                    self.accum(&mut grads, *a, &da);
                    self.accum(&mut grads, *b, &db);
                }
                Op::Transpose(a) => {
                    let s = self.nodes[*a].tensor.shape();
                    let (m, n) = (s[0], s[1]);
                    let mut da = vec![0.0f32; m * n];
                    for i in 0..m {
                        for j in 0..n {
                            da[i * n + j] = g[j * m + i];
                        }
                    }
                    self.accum(&mut grads, *a, &da);
                }
                Op::Conv2d {
                    input,
                    weight,
                    stride,
                    padding,
                    groups,
                } => {
                    let (din, dw) = conv2d_backward(
                        self.nodes[*input].tensor.data(),
                        self.nodes[*input].tensor.shape(),
                        self.nodes[*weight].tensor.data(),
                        self.nodes[*weight].tensor.shape(),
                        &g,
                        node.tensor.shape(),
                        *stride,
                        *padding,
                        *groups,
                    );
                    self.accum(&mut grads, *input, &din);
                    self.accum(&mut grads, *weight, &dw);
                }
                Op::ChannelBias(x, bias) => {
                    self.accum(&mut grads, *x, &g);
                    let s = node.tensor.shape();
                    let (c, plane) = (s[0], s[1] * s[2]);
                    let db: Vec<f32> = (0..c)
                        .map(|ci| g[ci * plane..(ci + 1) * plane].iter().sum())
                        .collect();
                    self.accum(&mut grads, *bias, &db);
                }
                Op::RowBias(x, bias) => {
                    self.accum(&mut grads, *x, &g);
                    let k = self.nodes[*bias].tensor.numel();
                    let mut db = vec![0.0f32; k];
                    for row in g.chunks(k) {
                        for (acc, v) in db.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    self.accum(&mut grads, *bias, &db);
                }
                Op::Relu(a) => {
                    let da: Vec<f32> = g
                        .iter()
                        .zip(self.nodes[*a].tensor.data())
                        .map(|(gi, &x)| if x > 0.0 { *gi } else { 0.0 })
                        .collect();
                    self.accum(&mut grads, *a, &da);
                }
                Op::Softmax(a) => {
                    let y = node.tensor.data();
                    let n = *node.tensor.shape().last().expect("non-empty");
                    let mut da = vec![0.0f32; y.len()];
                    for r in 0..y.len() / n {
                        let (ys, gs) = (&y[r * n..(r + 1) * n], &g[r * n..(r + 1) * n]);
                        let dot: f32 = ys.iter().zip(gs).map(|(yi, gi)| yi * gi).sum();
                        for i in 0..n {
                            da[r * n + i] = ys[i] * (gs[i] - dot);
                        }
                    }
                    self.accum(&mut grads, *a, &da);
                }
                Op::LayerNorm {
                    input,
                    gamma,
                    beta,
                    eps,
                } => {
                    let x = self.nodes[*input].tensor.data();
                    let gm = self.nodes[*gamma].tensor.data();
                    let d = gm.len();
                    let rows = x.len() / d;
                    let mut dx = vec![0.0f32; x.len()];
                    let mut dgamma = vec![0.0f32; d];
                    let mut dbeta = vec![0.0f32; d];
                    for r in 0..rows {
                        let xr = &x[r * d..(r + 1) * d];
                        let gr = &g[r * d..(r + 1) * d];
                        let (mean, inv) = row_mean_inv_std(xr, *eps);
                        // dl/dx̂, then project out the mean and variance modes
                        let mut dxhat = vec![0.0f32; d];
                        let mut m1 = 0.0f32;
                        let mut m2 = 0.0f32;
                        for i in 0..d {
                            let xhat = (xr[i] - mean) * inv;
                            dgamma[i] += gr[i] * xhat;
                            dbeta[i] += gr[i];
                            dxhat[i] = gr[i] * gm[i];
                            m1 += dxhat[i];
                            m2 += dxhat[i] * xhat;
                        }
                        m1 /= d as f32;
                        m2 /= d as f32;
                        for i in 0..d {
                            let xhat = (xr[i] - mean) * inv;
                            dx[r * d + i] = inv * (dxhat[i] - m1 - xhat * m2);
                        }
                    }
                    self.accum(&mut grads, *input, &dx);
                    self.accum(&mut grads, *gamma, &dgamma);
                    self.accum(&mut grads, *beta, &dbeta);
                }
                Op::GlobalAvgPool(x) => {
                    let s = self.nodes[*x].tensor.shape();
                    let (c, plane) = (s[0], s[1] * s[2]);
                    let mut dx = vec![0.0f32; c * plane];
                    for ci in 0..c {
                        let v = g[ci] / plane as f32;
                        for e in &mut dx[ci * plane..(ci + 1) * plane] {
                            *e = v;
                        }
                    }
                    self.accum(&mut grads, *x, &dx);
                }
                Op::MeanRows(x) => {
                    let s = self.nodes[*x].tensor.shape();
                    let (n, d) = (s[0], s[1]);
                    let mut dx = vec![0.0f32; n * d];
                    for r in 0..n {
                        for j in 0..d {
                            dx[r * d + j] = g[j] / n as f32;
                        }
                    }
                    self.accum(&mut grads, *x, &dx);
                }
                Op::SumAll(x) => {
                    let dx = vec![g[0]; self.nodes[*x].tensor.numel()];
                    self.accum(&mut grads, *x, &dx);
                }
                Op::SliceCols { input, lo, hi } => {
                    let s = self.nodes[*input].tensor.shape();
                    let (n, d) = (s[0], s[1]);
                    let width = hi - lo;
                    let mut dx = vec![0.0f32; n * d];
                    for r in 0..n {
                        dx[r * d + lo..r * d + hi].copy_from_slice(&g[r * width..(r + 1) * width]);
                    }
                    self.accum(&mut grads, *input, &dx);
                }
                Op::ConcatCols(parts) => {
                    let n = node.tensor.shape()[0];
                    let total = node.tensor.shape()[1];
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.nodes[p].tensor.shape()[1];
                        if self.nodes[p].needs_grad {
                            let mut dp = vec![0.0f32; n * w];
                            for r in 0..n {
                                dp[r * w..(r + 1) * w]
                                    .copy_from_slice(&g[r * total + offset..r * total + offset + w]);
                            }
                            self.accum(&mut grads, p, &dp);
                        }
                        offset += w;
                    }
                }
                Op::Patchify { input, patch } => {
                    let s = self.nodes[*input].tensor.shape();
                    let (c, h, w) = (s[0], s[1], s[2]);
                    let (gy, gx) = (h / patch, w / patch);
                    let row_len = c * patch * patch;
                    let mut dx = vec![0.0f32; c * h * w];
                    for py in 0..gy {
                        for px in 0..gx {
                            let row = py * gx + px;
                            for ci in 0..c {
                                for dy in 0..*patch {
                                    for dxp in 0..*patch {
                                        let gidx =
                                            row * row_len + ci * patch * patch + dy * patch + dxp;
                                        let xidx =
                                            ci * h * w + (py * patch + dy) * w + (px * patch + dxp);
                                        dx[xidx] = g[gidx];
                                    }
                                }
                            }
                        }
                    }
                    self.accum(&mut grads, *input, &dx);
                }
                Op::Reshape(x) => {
                    self.accum(&mut grads, *x, &g);
                }
                Op::CrossEntropy { probs, target } => {
                    let p = self.nodes[*probs].tensor.data();
                    let mut dp = vec![0.0f32; p.len()];
                    if p[*target] >= CROSS_ENTROPY_CLAMP {
                        dp[*target] = -g[0] / p[*target];
                    }
                    self.accum(&mut grads, *probs, &dp);
                }
            }
        }
        Ok(GradStore { grads })
    }

    fn accum(&self, grads: &mut [Option<Vec<f32>>], id: usize, contribution: &[f32]) {
        if !self.nodes[id].needs_grad {
            return;
        }
        match &mut grads[id] {
            Some(buf) => {
                for (dst, src) in buf.iter_mut().zip(contribution) {
                    *dst += src;
                }
            }
            slot => *slot = Some(contribution.to_vec()),
        }
    }
}

fn softmax_row(row: &mut [f32]) {
    let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn row_mean_inv_std(row: &[f32], eps: f32) -> (f32, f32) {
    let d = row.len() as f32;
    let mean = row.iter().sum::<f32>() / d;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d;
    (mean, 1.0 / (var + eps).sqrt())
}

fn matmul_raw(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv2d_raw(
    input: &[f32],
    weight: &[f32],
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    padding: usize,
    groups: usize,
) -> Vec<f32> {
    let c_g = c_in / groups;
    let out_per_group = c_out / groups;
    let oh = (h + 2 * padding - k) / stride + 1;
    let ow = (w + 2 * padding - k) / stride + 1;
    let mut out = vec![0.0f32; c_out * oh * ow];
    for co in 0..c_out {
        let g = co / out_per_group;
        for cg in 0..c_g {
            let ci = g * c_g + cg;
            let in_plane = &input[ci * h * w..(ci + 1) * h * w];
            let w_plane = &weight[(co * c_g + cg) * k * k..(co * c_g + cg + 1) * k * k];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0f32;
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += in_plane[iy as usize * w + ix as usize] * w_plane[ky * k + kx];
                        }
                    }
                    out[co * oh * ow + oy * ow + ox] += acc;
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward(
    input: &[f32],
    in_shape: &[usize],
    weight: &[f32],
    w_shape: &[usize],
    g: &[f32],
    out_shape: &[usize],
    stride: usize,
    padding: usize,
    groups: usize,
) -> (Vec<f32>, Vec<f32>) {
    let (h, w) = (in_shape[1], in_shape[2]);
    let (c_out, c_g, k) = (w_shape[0], w_shape[1], w_shape[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let out_per_group = c_out / groups;
    let mut din = vec![0.0f32; input.len()];
    let mut dw = vec![0.0f32; weight.len()];
    for co in 0..c_out {
        let grp = co / out_per_group;
        let g_plane = &g[co * oh * ow..(co + 1) * oh * ow];
        for cg in 0..c_g {
            let ci = grp * c_g + cg;
            let in_plane = &input[ci * h * w..(ci + 1) * h * w];
            let w_plane = &weight[(co * c_g + cg) * k * k..(co * c_g + cg + 1) * k * k];
            let dw_plane_base = (co * c_g + cg) * k * k;
            for oy in 0..oh {
                for ox in 0..ow {
                    let gv = g_plane[oy * ow + ox];
                    if gv == 0.0 {
                        continue;
                    }
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let iidx = iy as usize * w + ix as usize;
                            din[ci * h * w + iidx] += gv * w_plane[ky * k + kx];
                            dw[dw_plane_base + ky * k + kx] += gv * in_plane[iidx];
                        }
                    }
                }
            }
        }
    }
    (din, dw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::finite_difference_gradient;

    fn t(shape: Vec<usize>, data: Vec<f32>) -> Tensor {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn matmul_identity_and_zero() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let eye = tape.leaf(t(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]));
        let out = tape.matmul(a, eye).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);

        let b = tape.leaf(t(vec![3, 4], (0..12).map(|v| v as f32).collect()));
        let z = tape.leaf(Tensor::zeros(vec![4, 2]));
        let out = tape.matmul(b, z).unwrap();
        assert_eq!(tape.value(out).shape(), &[3, 2]);
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_hand_computed() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let b = tape.leaf(t(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0]));
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(out).data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(vec![2, 3]));
        let b = tape.leaf(Tensor::zeros(vec![4, 2]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[4, 2]"), "{err}");
    }

    #[test]
    fn conv2d_one_by_one_identity_and_zero_kernel() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(vec![1, 3, 3], (1..=9).map(|v| v as f32).collect()));
        let w1 = tape.leaf(t(vec![1, 1, 1, 1], vec![1.0]));
        let y = tape.conv2d(x, w1, 1, 0, 1).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(x).data());

        let w0 = tape.leaf(Tensor::zeros(vec![2, 1, 3, 3]));
        let y = tape.conv2d(x, w0, 1, 1, 1).unwrap();
        assert_eq!(tape.value(y).shape(), &[2, 3, 3]);
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv2d_constant_image_all_ones_kernel() {
        // constant image c, 3x3 all-ones kernel, padding 0: every output is 9c
        let c = 0.7f32;
        let mut tape = Tape::new();
        let x = tape.leaf(t(vec![1, 5, 5], vec![c; 25]));
        let w = tape.leaf(t(vec![1, 1, 3, 3], vec![1.0; 9]));
        let y = tape.conv2d(x, w, 1, 0, 1).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 3, 3]);
        for &v in tape.value(y).data() {
            assert!((v - 9.0 * c).abs() < 1e-6);
        }
    }

    #[test]
    fn conv2d_rejects_bad_groups_and_empty_output() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(vec![3, 8, 8]));
        let w = tape.leaf(Tensor::zeros(vec![4, 1, 3, 3]));
        assert!(tape.conv2d(x, w, 1, 1, 2).is_err());

        let x2 = tape.leaf(Tensor::zeros(vec![1, 2, 2]));
        let w2 = tape.leaf(Tensor::zeros(vec![1, 1, 3, 3]));
        assert!(tape.conv2d(x2, w2, 1, 0, 1).is_err());
    }

    #[test]
    fn depthwise_then_pointwise_matches_brute_force_reference() {
        // independent dense reference for a depthwise-separable pair
        fn reference(x: &[f32], dw: &[f32], pw: &[f32], c: usize, h: usize, w: usize, co: usize) -> Vec<f32> {
            let mut mid = vec![0.0f64; c * h * w];
            for ci in 0..c {
                for y in 0..h {
                    for xx in 0..w {
                        let mut acc = 0.0f64;
                        for ky in 0..3usize {
                            for kx in 0..3usize {
                                let iy = y as isize + ky as isize - 1;
                                let ix = xx as isize + kx as isize - 1;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += x[ci * h * w + iy as usize * w + ix as usize] as f64
                                    * dw[ci * 9 + ky * 3 + kx] as f64;
                            }
                        }
                        mid[ci * h * w + y * w + xx] = acc;
                    }
                }
            }
            let mut out = vec![0.0f32; co * h * w];
            for o in 0..co {
                for p in 0..h * w {
                    let mut acc = 0.0f64;
                    for ci in 0..c {
                        acc += mid[ci * h * w + p] * pw[o * c + ci] as f64;
                    }
                    out[o * h * w + p] = acc as f32;
                }
            }
            out
        }

        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        let (c, h, w, co) = (5usize, 8usize, 8usize, 4usize);
        let x: Vec<f32> = (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dw: Vec<f32> = (0..c * 9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pw: Vec<f32> = (0..co * c).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut tape = Tape::new();
        let xv = tape.leaf(t(vec![c, h, w], x.clone()));
        let dwv = tape.leaf(t(vec![c, 1, 3, 3], dw.clone()));
        let pwv = tape.leaf(t(vec![co, c, 1, 1], pw.clone()));
        let mid = tape.conv2d(xv, dwv, 1, 1, c).unwrap();
        let out = tape.conv2d(mid, pwv, 1, 0, 1).unwrap();

        let expected = reference(&x, &dw, &pw, c, h, w, co);
        for (a, b) in tape.value(out).data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn relu_definition() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(vec![3], vec![-1.0, 0.0, 2.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);

        let neg = tape.leaf(t(vec![4], vec![-3.0, -0.1, -7.0, -0.5]));
        let y = tape.relu(neg);
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));

        let pos = tape.leaf(t(vec![3], vec![0.5, 1.5, 0.0]));
        let y = tape.relu(pos);
        assert_eq!(tape.value(y).data(), tape.value(pos).data());
    }

    #[test]
    fn softmax_uniform_shift_invariance_and_frozen_value() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::zeros(vec![5]));
        let y = tape.softmax(z);
        for &v in tape.value(y).data() {
            assert!((v - 0.2).abs() < 1e-7);
        }

        let x = tape.leaf(t(vec![4], vec![0.3, -1.2, 2.0, 0.7]));
        let xs = tape.leaf(t(vec![4], vec![0.3 + 5.0, -1.2 + 5.0, 2.0 + 5.0, 0.7 + 5.0]));
        let y1 = tape.softmax(x);
        let y2 = tape.softmax(xs);
        for (a, b) in tape.value(y1).data().iter().zip(tape.value(y2).data()) {
            assert!((a - b).abs() < 1e-6);
        }

        // softmax([10,0,0]) against a high-precision evaluation
        let x = tape.leaf(t(vec![3], vec![10.0, 0.0, 0.0]));
        let y = tape.softmax(x);
        let got = tape.value(y).data();
        assert!((got[0] as f64 - 0.999909208384341).abs() < 2e-6);
        assert!((got[1] as f64 - 4.53958078295109e-5).abs() < 1e-9);
        assert!((got[2] as f64 - 4.53958078295109e-5).abs() < 1e-9);
        let sum: f32 = got.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(got.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn layer_norm_constant_row_and_frozen_value() {
        let mut tape = Tape::new();
        let gamma = tape.leaf(t(vec![3], vec![1.0; 3]));
        let beta = tape.leaf(Tensor::zeros(vec![3]));

        let c = tape.leaf(t(vec![3], vec![0.4; 3]));
        let y = tape.layer_norm(c, gamma, beta, 1e-5).unwrap();
        for &v in tape.value(y).data() {
            assert!(v.abs() < 1e-4);
        }

        let x = tape.leaf(t(vec![3], vec![1.0, 2.0, 3.0]));
        let y = tape.layer_norm(x, gamma, beta, 1e-5).unwrap();
        let got = tape.value(y).data();
        assert!((got[0] as f64 + 1.2247356859).abs() < 1e-5);
        assert!(got[1].abs() < 1e-6);
        assert!((got[2] as f64 - 1.2247356859).abs() < 1e-5);
    }

    #[test]
    fn layer_norm_mean_equals_beta() {
        let mut tape = Tape::new();
        let gamma = tape.leaf(t(vec![4], vec![1.0; 4]));
        let beta = tape.leaf(t(vec![4], vec![0.25, 0.25, 0.25, 0.25]));
        let x = tape.leaf(t(vec![2, 4], vec![0.1, 0.9, -0.4, 2.0, 5.0, -3.0, 0.0, 1.0]));
        let y = tape.layer_norm(x, gamma, beta, 1e-5).unwrap();
        for row in tape.value(y).data().chunks(4) {
            let mean: f32 = row.iter().sum::<f32>() / 4.0;
            assert!((mean - 0.25).abs() < 1e-5);
        }
    }

    #[test]
    fn global_avg_pool_examples() {
        let mut tape = Tape::new();
        let c = tape.leaf(t(vec![2, 3, 3], vec![0.3; 9].into_iter().chain(vec![0.8; 9]).collect()));
        let y = tape.global_avg_pool(c).unwrap();
        assert!((tape.value(y).data()[0] - 0.3).abs() < 1e-7);
        assert!((tape.value(y).data()[1] - 0.8).abs() < 1e-7);

        let x = tape.leaf(t(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let y = tape.global_avg_pool(x).unwrap();
        assert!((tape.value(y).data()[0] - 2.5).abs() < 1e-7);

        // spatial permutation invariance
        let xp = tape.leaf(t(vec![1, 2, 2], vec![4.0, 1.0, 2.0, 3.0]));
        let yp = tape.global_avg_pool(xp).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(yp).data());
    }

    #[test]
    fn cross_entropy_examples() {
        let mut tape = Tape::new();
        let perfect = tape.leaf(t(vec![3], vec![0.0, 1.0, 0.0]));
        let l = tape.cross_entropy(perfect, 1).unwrap();
        assert_eq!(tape.value(l).data()[0], 0.0);

        let uniform = tape.leaf(t(vec![5], vec![0.2; 5]));
        let l = tape.cross_entropy(uniform, 3).unwrap();
        assert!((tape.value(l).data()[0] as f64 - 1.6094379124341).abs() < 1e-6);

        let p = tape.leaf(t(vec![3], vec![0.7, 0.2, 0.1]));
        let l = tape.cross_entropy(p, 0).unwrap();
        assert!((tape.value(l).data()[0] as f64 - 0.35667494393873).abs() < 1e-6);

        let bad = tape.cross_entropy(p, 3);
        assert!(bad.is_err());
    }

    #[test]
    fn backward_linear_and_product_rules() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(vec![4], vec![0.5, -1.0, 2.0, 3.0]).with_grad());
        let s = tape.sum_all(x);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[1.0, 1.0, 1.0, 1.0]);

        let mut tape = Tape::new();
        let a = tape.leaf(t(vec![3], vec![1.0, 2.0, 3.0]).with_grad());
        let b = tape.leaf(t(vec![3], vec![4.0, 5.0, 6.0]));
        let prod = tape.mul(a, b).unwrap();
        let s = tape.sum_all(prod);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(vec![2], vec![1.0, 2.0]).with_grad());
        let y = tape.relu(x);
        assert!(tape.backward(y).is_err());
    }

    #[test]
    fn composite_ops_match_finite_differences() {
        // one composite graph per core op family, checked against the
        // 64-bit central-difference oracle
        use rand::{Rng, SeedableRng};
        for seed in 0..5u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x0: Vec<f32> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w0: Vec<f32> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();

            // f(x) = CE(softmax(LN(x[3x4]) · W[4x2] summed-rows), 0)
            let run = |xd: &[f64], wd: &[f64]| -> f64 {
                // independent f64 evaluation
                let d = 4;
                let mut normed = [0.0f64; 12];
                for r in 0..3 {
                    let row = &xd[r * d..(r + 1) * d];
                    let mean = row.iter().sum::<f64>() / d as f64;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                    let inv = 1.0 / (var + 1e-5_f64).sqrt();
                    for i in 0..d {
                        normed[r * d + i] = (row[i] - mean) * inv;
                    }
                }
                let mut prod = [0.0f64; 6];
                for r in 0..3 {
                    for j in 0..2 {
                        for p in 0..4 {
                            prod[r * 2 + j] += normed[r * 4 + p] * wd[p * 2 + j];
                        }
                    }
                }
                let mut pooled = [0.0f64; 2];
                for r in 0..3 {
                    pooled[0] += prod[r * 2] / 3.0;
                    pooled[1] += prod[r * 2 + 1] / 3.0;
                }
                let m = pooled[0].max(pooled[1]);
                let e0 = (pooled[0] - m).exp();
                let e1 = (pooled[1] - m).exp();
                -(e0 / (e0 + e1)).max(1e-12).ln()
            };

            let mut tape = Tape::new();
            let x = tape.leaf(t(vec![3, 4], x0.clone()).with_grad());
            let w = tape.leaf(t(vec![4, 2], w0.clone()).with_grad());
            let gamma = tape.leaf(t(vec![4], vec![1.0; 4]));
            let beta = tape.leaf(Tensor::zeros(vec![4]));
            let ln = tape.layer_norm(x, gamma, beta, 1e-5).unwrap();
            let mm = tape.matmul(ln, w).unwrap();
            let pooled = tape.mean_rows(mm).unwrap();
            let row = tape.reshape(pooled, vec![1, 2]).unwrap();
            let probs = tape.softmax(row);
            let flat = tape.reshape(probs, vec![2]).unwrap();
            let loss = tape.cross_entropy(flat, 0).unwrap();
            let grads = tape.backward(loss).unwrap();

            let x64: Vec<f64> = x0.iter().map(|&v| v as f64).collect();
            let w64: Vec<f64> = w0.iter().map(|&v| v as f64).collect();
            let fd_x = finite_difference_gradient(|xv| run(xv, &w64), &x64, 1e-3);
            let fd_w = finite_difference_gradient(|wv| run(&x64, wv), &w64, 1e-3);

            let err_x = super::super::fd::max_relative_error(grads.get(x).unwrap(), &fd_x);
            let err_w = super::super::fd::max_relative_error(grads.get(w).unwrap(), &fd_w);
            assert!(err_x < 1e-3, "seed {seed}: input grad error {err_x}");
            assert!(err_w < 1e-3, "seed {seed}: weight grad error {err_w}");
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let run = || {
            let mut tape = Tape::new();
            let x = tape.leaf(t(vec![2, 3], vec![0.1, -0.2, 0.3, 0.7, -1.1, 0.9]));
            let w = tape.leaf(t(vec![3, 2], vec![0.5, -0.4, 0.2, 0.8, -0.6, 0.1]));
            let mm = tape.matmul(x, w).unwrap();
            let sm = tape.softmax(mm);
            tape.value(sm).data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn patchify_rows_are_patch_index_constant() {
        // paint each 2x2 patch of a single-channel 4x4 image with its own index
        let mut img = vec![0.0f32; 16];
        for py in 0..2 {
            for px in 0..2 {
                for dy in 0..2 {
                    for dx in 0..2 {
                        img[(py * 2 + dy) * 4 + (px * 2 + dx)] = (py * 2 + px) as f32;
                    }
                }
            }
        }
        let mut tape = Tape::new();
        let x = tape.leaf(t(vec![1, 4, 4], img));
        let p = tape.patchify(x, 2).unwrap();
        assert_eq!(tape.value(p).shape(), &[4, 4]);
        for (i, row) in tape.value(p).data().chunks(4).enumerate() {
            assert!(row.iter().all(|&v| v == i as f32), "row {i}: {row:?}");
        }
    }
}
