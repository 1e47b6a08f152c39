//! Branch projection, elementwise feature fusion, and the MLP softmax head.

use super::{linear_vec, nasnet_forward, vit_forward, ForwardCtx, ModelConfig, ParamBinding};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Classifier output: five probabilities and the argmax class, ties broken
/// toward the lowest index.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbs {
    pub probabilities: Vec<f32>,
    pub predicted_class: usize,
    pub class_names: Vec<String>,
}

impl ClassProbs {
    pub fn predicted_name(&self) -> &str {
        &self.class_names[self.predicted_class]
    }
}

/// Linear map of a branch feature vector into the shared fusion dimension.
/// `which` is `"nasnet"` or `"vit"`.
pub fn project(tape: &mut Tape, f: Var, which: &str, binding: &ParamBinding) -> Result<Var> {
    let w = binding.var(&format!("fusion.proj_{which}.weight"));
    let b = binding.var(&format!("fusion.proj_{which}.bias"));
    linear_vec(tape, f, w, b).map_err(|e| Error::shape("fusion", format!("proj_{which}: {e}")))
}

/// Elementwise product of the two projected branch features.
pub fn fuse(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    tape.mul(a, b)
        .map_err(|e| Error::shape("fusion", format!("fuse: {e}")))
}

/// `linear → ReLU → dropout (training) → linear → softmax` over the fused
/// feature, producing the class distribution.
pub fn mlp_head(
    tape: &mut Tape,
    f: Var,
    cfg: &ModelConfig,
    binding: &ParamBinding,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let h = linear_vec(
        tape,
        f,
        binding.var("fusion.mlp.w1"),
        binding.var("fusion.mlp.b1"),
    )?;
    let h = tape.relu(h);
    let h = ctx.dropout(tape, h, cfg.fusion.dropout_rate)?;
    let logits = linear_vec(
        tape,
        h,
        binding.var("fusion.mlp.w2"),
        binding.var("fusion.mlp.b2"),
    )?;
    Ok(tape.softmax(logits))
}

/// Full forward pass: both branches on the same input, projection, fusion,
/// classification. Returns the probability vector variable.
pub fn model_forward(
    tape: &mut Tape,
    x: Var,
    cfg: &ModelConfig,
    binding: &ParamBinding,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let f_conv = nasnet_forward(tape, x, &cfg.nasnet, binding)
        .map_err(|e| Error::shape("model", format!("nasnet branch: {e}")))?;
    let f_attn = vit_forward(tape, x, &cfg.vit, binding, ctx)
        .map_err(|e| Error::shape("model", format!("vit branch: {e}")))?;
    let p_conv = project(tape, f_conv, "nasnet", binding)?;
    let p_attn = project(tape, f_attn, "vit", binding)?;
    let fused = fuse(tape, p_conv, p_attn)?;
    mlp_head(tape, fused, cfg, binding, ctx)
}

/// Forward pass plus cross-entropy against a target class.
pub fn model_loss(
    tape: &mut Tape,
    x: Var,
    target: usize,
    cfg: &ModelConfig,
    binding: &ParamBinding,
    ctx: &mut ForwardCtx,
) -> Result<(Var, Var)> {
    let probs = model_forward(tape, x, cfg, binding, ctx)?;
    let loss = tape.cross_entropy(probs, target)?;
    Ok((loss, probs))
}

/// Wraps a probability tensor into a [`ClassProbs`] record.
pub fn class_probs(probs: &Tensor, class_names: &[String]) -> ClassProbs {
    let data = probs.data();
    let mut best = 0usize;
    for (i, &p) in data.iter().enumerate() {
        if p > data[best] {
            best = i;
        }
    }
    ClassProbs {
        probabilities: data.to_vec(),
        predicted_class: best,
        class_names: class_names.to_vec(),
    }
}
