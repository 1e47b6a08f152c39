//! Shared test support: an independent 64-bit forward implementation of the
//! full model used as the finite-difference oracle, plus toy-config helpers.
//!
//! Nothing here calls into the tape; every operation is re-derived with
//! plain f64 loops so gradient checks compare two genuinely different
//! computation paths.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nasnet_vit::model::{param_specs, ModelConfig, ModelParams};
use nasnet_vit::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Params64 = BTreeMap<String, (Vec<usize>, Vec<f64>)>;

pub fn lift_params(params: &ModelParams) -> Params64 {
    params
        .iter()
        .map(|(name, t)| {
            (
                name.to_string(),
                (
                    t.shape().to_vec(),
                    t.data().iter().map(|&v| v as f64).collect(),
                ),
            )
        })
        .collect()
}

pub fn random_input(size: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..3 * size * size)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    Tensor::new(vec![3, size, size], data).unwrap()
}

// ── reference ops, f64 ────────────────────────────────────────────────

fn conv2d64(
    input: &[f64],
    (_c_in, h, w): (usize, usize, usize),
    weight: &[f64],
    (c_out, c_g, k): (usize, usize, usize),
    stride: usize,
    padding: usize,
    groups: usize,
) -> (Vec<f64>, (usize, usize, usize)) {
    let oh = (h + 2 * padding - k) / stride + 1;
    let ow = (w + 2 * padding - k) / stride + 1;
    let out_per_group = c_out / groups;
    let mut out = vec![0.0; c_out * oh * ow];
    for co in 0..c_out {
        let g = co / out_per_group;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for cg in 0..c_g {
                    let ci = g * c_g + cg;
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += input[ci * h * w + iy as usize * w + ix as usize]
                                * weight[(co * c_g + cg) * k * k + ky * k + kx];
                        }
                    }
                }
                out[co * oh * ow + oy * ow + ox] = acc;
            }
        }
    }
    (out, (c_out, oh, ow))
}

fn add_channel_bias64(x: &mut [f64], (c, h, w): (usize, usize, usize), bias: &[f64]) {
    for ci in 0..c {
        for p in 0..h * w {
            x[ci * h * w + p] += bias[ci];
        }
    }
}

fn relu64(x: &mut [f64], signs: &mut Vec<bool>) {
    for v in x.iter_mut() {
        signs.push(*v > 0.0);
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn linear_rows64(x: &[f64], rows: usize, d_in: usize, w: &[f64], d_out: usize, b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows * d_out];
    for r in 0..rows {
        for o in 0..d_out {
            let mut acc = b[o];
            for i in 0..d_in {
                acc += x[r * d_in + i] * w[o * d_in + i];
            }
            out[r * d_out + o] = acc;
        }
    }
    out
}

fn layer_norm64(x: &[f64], rows: usize, d: usize, gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows * d];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + 1e-5_f64).sqrt();
        for i in 0..d {
            out[r * d + i] = (row[i] - mean) * inv * gamma[i] + beta[i];
        }
    }
    out
}

fn softmax_rows64(x: &mut [f64], n: usize) {
    for row in x.chunks_mut(n) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

struct P<'a>(&'a Params64);

impl<'a> P<'a> {
    fn get(&self, name: &str) -> &(Vec<usize>, Vec<f64>) {
        self.0.get(name).unwrap_or_else(|| panic!("missing {name}"))
    }
    fn data(&self, name: &str) -> &[f64] {
        &self.get(name).1
    }
    fn dim(&self, name: &str, i: usize) -> usize {
        self.get(name).0[i]
    }
}

fn nasnet64(cfg: &ModelConfig, p: &P, input: &[f64], size: usize, signs: &mut Vec<bool>) -> Vec<f64> {
    // stem
    let c0 = cfg.nasnet.stem_channels;
    let (mut x, mut shape) = conv2d64(
        input,
        (3, size, size),
        p.data("nasnet.stem.weight"),
        (c0, 3, 3),
        2,
        1,
        1,
    );
    add_channel_bias64(&mut x, shape, p.data("nasnet.stem.bias"));
    relu64(&mut x, signs);
    for s in 0..cfg.nasnet.num_stages {
        for cell in 0..cfg.nasnet.cells_per_stage {
            let prefix = format!("nasnet.s{s}.c{cell}");
            let c = shape.0;
            let (mut y, yshape) = conv2d64(
                &x,
                shape,
                p.data(&format!("{prefix}.dw.weight")),
                (c, 1, 3),
                1,
                1,
                c,
            );
            add_channel_bias64(&mut y, yshape, p.data(&format!("{prefix}.dw.bias")));
            let (mut z, zshape) = conv2d64(
                &y,
                yshape,
                p.data(&format!("{prefix}.pw.weight")),
                (c, c, 1),
                1,
                0,
                1,
            );
            add_channel_bias64(&mut z, zshape, p.data(&format!("{prefix}.pw.bias")));
            relu64(&mut z, signs);
            for (zi, xi) in z.iter_mut().zip(x.iter()) {
                *zi += xi;
            }
            x = z;
            shape = zshape;
        }
        if s + 1 < cfg.nasnet.num_stages {
            let prefix = format!("nasnet.red{s}");
            let c = shape.0;
            let (mut y, yshape) = conv2d64(
                &x,
                shape,
                p.data(&format!("{prefix}.dw.weight")),
                (c, 1, 3),
                2,
                1,
                c,
            );
            add_channel_bias64(&mut y, yshape, p.data(&format!("{prefix}.dw.bias")));
            let (mut z, zshape) = conv2d64(
                &y,
                yshape,
                p.data(&format!("{prefix}.pw.weight")),
                (2 * c, c, 1),
                1,
                0,
                1,
            );
            add_channel_bias64(&mut z, zshape, p.data(&format!("{prefix}.pw.bias")));
            relu64(&mut z, signs);
            x = z;
            shape = zshape;
        }
    }
    // global average pooling
    let (c, h, w) = shape;
    (0..c)
        .map(|ci| x[ci * h * w..(ci + 1) * h * w].iter().sum::<f64>() / (h * w) as f64)
        .collect()
}

fn vit64(cfg: &ModelConfig, p: &P, input: &[f64], size: usize, signs: &mut Vec<bool>) -> Vec<f64> {
    let patch = cfg.vit.patch_size;
    let d = cfg.vit.embed_dim;
    let heads = cfg.vit.num_heads;
    let dh = d / heads;
    let g = size / patch;
    let n = g * g;
    let row_len = 3 * patch * patch;
    // patchify: channel-major then row-major inside each patch
    let mut patches = vec![0.0; n * row_len];
    for py in 0..g {
        for px in 0..g {
            let row = py * g + px;
            for c in 0..3 {
                for dy in 0..patch {
                    for dx in 0..patch {
                        patches[row * row_len + c * patch * patch + dy * patch + dx] =
                            input[c * size * size + (py * patch + dy) * size + (px * patch + dx)];
                    }
                }
            }
        }
    }
    let mut tokens = linear_rows64(
        &patches,
        n,
        row_len,
        p.data("vit.patch.weight"),
        d,
        p.data("vit.patch.bias"),
    );
    for (t, pos) in tokens.iter_mut().zip(p.data("vit.pos")) {
        *t += pos;
    }
    for l in 0..cfg.vit.num_layers {
        let prefix = format!("vit.l{l}");
        let ln1 = layer_norm64(
            &tokens,
            n,
            d,
            p.data(&format!("{prefix}.ln1.gamma")),
            p.data(&format!("{prefix}.ln1.beta")),
        );
        let q = linear_rows64(&ln1, n, d, p.data(&format!("{prefix}.attn.wq")), d, p.data(&format!("{prefix}.attn.bq")));
        let k = linear_rows64(&ln1, n, d, p.data(&format!("{prefix}.attn.wk")), d, p.data(&format!("{prefix}.attn.bk")));
        let v = linear_rows64(&ln1, n, d, p.data(&format!("{prefix}.attn.wv")), d, p.data(&format!("{prefix}.attn.bv")));
        let mut concat = vec![0.0; n * d];
        for h in 0..heads {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let mut scores = vec![0.0; n * n];
            let scale = 1.0 / (dh as f64).sqrt();
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for c in lo..hi {
                        acc += q[i * d + c] * k[j * d + c];
                    }
                    scores[i * n + j] = acc * scale;
                }
            }
            softmax_rows64(&mut scores, n);
            for i in 0..n {
                for (ci, c) in (lo..hi).enumerate() {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += scores[i * n + j] * v[j * d + lo + ci];
                    }
                    concat[i * d + c] = acc;
                }
            }
        }
        let attn_out = linear_rows64(
            &concat,
            n,
            d,
            p.data(&format!("{prefix}.attn.wo")),
            d,
            p.data(&format!("{prefix}.attn.bo")),
        );
        for (t, a) in tokens.iter_mut().zip(&attn_out) {
            *t += a;
        }
        let ln2 = layer_norm64(
            &tokens,
            n,
            d,
            p.data(&format!("{prefix}.ln2.gamma")),
            p.data(&format!("{prefix}.ln2.beta")),
        );
        let ffn_dim = p.dim(&format!("{prefix}.ffn.w1"), 0);
        let mut h1 = linear_rows64(&ln2, n, d, p.data(&format!("{prefix}.ffn.w1")), ffn_dim, p.data(&format!("{prefix}.ffn.b1")));
        relu64(&mut h1, signs);
        let h2 = linear_rows64(&h1, n, ffn_dim, p.data(&format!("{prefix}.ffn.w2")), d, p.data(&format!("{prefix}.ffn.b2")));
        for (t, a) in tokens.iter_mut().zip(&h2) {
            *t += a;
        }
    }
    // mean over tokens
    (0..d)
        .map(|c| (0..n).map(|r| tokens[r * d + c]).sum::<f64>() / n as f64)
        .collect()
}

/// Independent end-to-end class probabilities in f64, also reporting the
/// sign of every ReLU pre-activation (used to spot kink crossings inside a
/// finite-difference window).
pub fn oracle_probs_signed(cfg: &ModelConfig, params: &Params64, input: &[f64]) -> (Vec<f64>, Vec<bool>) {
    let mut signs = Vec::new();
    let p = P(params);
    let size = cfg.image_size;
    let f_conv = nasnet64(cfg, &p, input, size, &mut signs);
    let f_attn = vit64(cfg, &p, input, size, &mut signs);
    let df = cfg.fusion.fusion_dim;
    let pn = linear_rows64(
        &f_conv,
        1,
        f_conv.len(),
        p.data("fusion.proj_nasnet.weight"),
        df,
        p.data("fusion.proj_nasnet.bias"),
    );
    let pv = linear_rows64(
        &f_attn,
        1,
        f_attn.len(),
        p.data("fusion.proj_vit.weight"),
        df,
        p.data("fusion.proj_vit.bias"),
    );
    let fused: Vec<f64> = pn.iter().zip(&pv).map(|(a, b)| a * b).collect();
    let hidden = cfg.fusion.mlp_hidden;
    let mut h = linear_rows64(&fused, 1, df, p.data("fusion.mlp.w1"), hidden, p.data("fusion.mlp.b1"));
    relu64(&mut h, &mut signs);
    let mut logits = linear_rows64(&h, 1, hidden, p.data("fusion.mlp.w2"), 5, p.data("fusion.mlp.b2"));
    softmax_rows64(&mut logits, 5);
    (logits, signs)
}

/// Independent end-to-end class probabilities in f64.
pub fn oracle_probs(cfg: &ModelConfig, params: &Params64, input: &[f64]) -> Vec<f64> {
    oracle_probs_signed(cfg, params, input).0
}

/// Independent end-to-end cross-entropy in f64.
pub fn oracle_loss(cfg: &ModelConfig, params: &Params64, input: &[f64], target: usize) -> f64 {
    let probs = oracle_probs(cfg, params, input);
    -probs[target].max(1e-12).ln()
}

/// Cross-entropy plus the ReLU pre-activation signs of the evaluation.
pub fn oracle_loss_signed(
    cfg: &ModelConfig,
    params: &Params64,
    input: &[f64],
    target: usize,
) -> (f64, Vec<bool>) {
    let (probs, signs) = oracle_probs_signed(cfg, params, input);
    (-probs[target].max(1e-12).ln(), signs)
}

/// Central-difference gradient of the oracle loss with respect to one named
/// parameter. Coordinates whose window crosses a ReLU kink (where the
/// difference quotient does not estimate the derivative) are retried with a
/// ten-times smaller step; if still crossed they come back as `None`.
pub fn oracle_fd_gradient(
    cfg: &ModelConfig,
    params: &Params64,
    input: &[f64],
    target: usize,
    name: &str,
    h: f64,
) -> Vec<Option<f64>> {
    let mut scratch = params.clone();
    let x0 = params[name].1.clone();
    let mut out = Vec::with_capacity(x0.len());
    #[allow(clippy::needless_range_loop)]
    for i in 0..x0.len() {
        let mut estimate = None;
        for step in [h, h / 10.0] {
            scratch.get_mut(name).unwrap().1[i] = x0[i] + step;
            let (fp, signs_p) = oracle_loss_signed(cfg, &scratch, input, target);
            scratch.get_mut(name).unwrap().1[i] = x0[i] - step;
            let (fm, signs_m) = oracle_loss_signed(cfg, &scratch, input, target);
            scratch.get_mut(name).unwrap().1[i] = x0[i];
            if signs_p == signs_m {
                estimate = Some((fp - fm) / (2.0 * step));
                break;
            }
        }
        out.push(estimate);
    }
    out
}

/// Parameter names grouped by the layer families named in the gradient
/// acceptance criterion, for one toy configuration.
pub fn layer_groups(cfg: &ModelConfig) -> Vec<(&'static str, Vec<String>)> {
    let specs = param_specs(cfg);
    let names: Vec<String> = specs.iter().map(|(n, _, _)| n.clone()).collect();
    let pick = |pred: &dyn Fn(&str) -> bool| -> Vec<String> {
        names.iter().filter(|n| pred(n)).cloned().collect()
    };
    vec![
        ("stem", pick(&|n| n.starts_with("nasnet.stem"))),
        ("normal cell", pick(&|n| n.contains(".c0.") && n.starts_with("nasnet.s"))),
        ("reduction cell", pick(&|n| n.starts_with("nasnet.red"))),
        ("patch embedding", pick(&|n| n.starts_with("vit.patch"))),
        ("positional table", vec!["vit.pos".to_string()]),
        (
            "attention",
            pick(&|n| n.contains(".attn.") || n.contains(".ln1.")),
        ),
        ("ffn", pick(&|n| n.contains(".ffn.") || n.contains(".ln2."))),
        ("projections", pick(&|n| n.starts_with("fusion.proj"))),
        ("mlp head", pick(&|n| n.starts_with("fusion.mlp"))),
    ]
}

/// Central-difference step pinned by the gradient acceptance criterion.
pub const FD_STEP: f64 = 1e-3;
/// Gradient agreement tolerance.
pub const GRAD_TOLERANCE: f64 = 1e-3;

/// Worst relative error and kink-skip fraction for one parameter group.
pub fn check_group(cfg: &ModelConfig, seed: u64, group: &[String]) -> (f64, f64) {
    use nasnet_vit::model::{bind_params, init_params, model_loss, ForwardCtx};
    use nasnet_vit::tensor::Tape;

    let params = init_params(cfg, seed).unwrap();
    let input = random_input(cfg.image_size, seed.wrapping_add(100));
    let target = (seed % 5) as usize;

    // tape gradients
    let mut tape = Tape::new();
    let binding = bind_params(&mut tape, &params);
    let x = tape.constant(input.clone());
    let mut ctx = ForwardCtx::inference();
    let (loss, _) = model_loss(&mut tape, x, target, cfg, &binding, &mut ctx).unwrap();
    let grads = tape.backward(loss).unwrap();

    // finite differences through the independent f64 forward
    let params64 = lift_params(&params);
    let input64: Vec<f64> = input.data().iter().map(|&v| v as f64).collect();
    // the error is normalized by the max-norm of the whole layer group's
    // oracle gradient, so degenerate sub-tensors (e.g. a bias whose true
    // gradient is identically zero) are judged at the layer's scale
    let mut fds = Vec::new();
    let mut gnorm = 1e-6f64;
    for name in group {
        let fd = oracle_fd_gradient(cfg, &params64, &input64, target, name, FD_STEP);
        gnorm = fd.iter().flatten().fold(gnorm, |m, v| m.max(v.abs()));
        fds.push(fd);
    }
    let mut worst = 0.0f64;
    let mut skipped = 0usize;
    let mut total = 0usize;
    for (name, fd) in group.iter().zip(&fds) {
        let ad = grads
            .get(binding.var(name))
            .unwrap_or_else(|| panic!("no gradient for {name}"));
        total += fd.len();
        for (&a, f) in ad.iter().zip(fd) {
            match f {
                Some(f) => worst = worst.max((a as f64 - f).abs() / gnorm),
                None => skipped += 1,
            }
        }
    }
    (worst, skipped as f64 / total.max(1) as f64)
}
