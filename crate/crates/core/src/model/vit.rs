//! Transformer branch: patch embedding with a learned positional table and
//! pre-norm encoder layers with multi-head self-attention.

use super::{linear_rows, ForwardCtx, ParamBinding, VitConfig};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};

const LN_EPS: f32 = 1e-5;

fn named(layer: &str, e: Error) -> Error {
    Error::shape("vit", format!("{layer}: {e}"))
}

/// Patchify → per-row linear projection → learned positional table.
pub fn embed_tokens(
    tape: &mut Tape,
    x: Var,
    cfg: &VitConfig,
    binding: &ParamBinding,
) -> Result<Var> {
    let patches = tape
        .patchify(x, cfg.patch_size)
        .map_err(|e| named("patchify", e))?;
    let w = binding.var("vit.patch.weight");
    let b = binding.var("vit.patch.bias");
    let emb = linear_rows(tape, patches, w, b).map_err(|e| named("patch projection", e))?;
    let pos = binding.var("vit.pos");
    tape.add(emb, pos).map_err(|e| named("positional table", e))
}

/// Multi-head scaled dot-product self-attention over `[N×d]` tokens.
/// Returns the projected output and the per-head attention matrices.
pub fn mhsa(
    tape: &mut Tape,
    x: Var,
    prefix: &str,
    cfg: &VitConfig,
    binding: &ParamBinding,
) -> Result<(Var, Vec<Var>)> {
    let d = cfg.embed_dim;
    let dh = d / cfg.num_heads;
    let scale = 1.0 / (dh as f32).sqrt();
    let q = linear_rows(
        tape,
        x,
        binding.var(&format!("{prefix}.attn.wq")),
        binding.var(&format!("{prefix}.attn.bq")),
    )?;
    let k = linear_rows(
        tape,
        x,
        binding.var(&format!("{prefix}.attn.wk")),
        binding.var(&format!("{prefix}.attn.bk")),
    )?;
    let v = linear_rows(
        tape,
        x,
        binding.var(&format!("{prefix}.attn.wv")),
        binding.var(&format!("{prefix}.attn.bv")),
    )?;
    let mut head_outs = Vec::with_capacity(cfg.num_heads);
    let mut head_probs = Vec::with_capacity(cfg.num_heads);
    for h in 0..cfg.num_heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = tape.slice_cols(q, lo, hi)?;
        let kh = tape.slice_cols(k, lo, hi)?;
        let vh = tape.slice_cols(v, lo, hi)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scaled = tape.scale(scores, scale);
        let attn = tape.softmax(scaled);
        let out = tape.matmul(attn, vh)?;
        head_outs.push(out);
        head_probs.push(attn);
    }
    let concat = tape.concat_cols(&head_outs)?;
    let out = linear_rows(
        tape,
        concat,
        binding.var(&format!("{prefix}.attn.wo")),
        binding.var(&format!("{prefix}.attn.bo")),
    )?;
    Ok((out, head_probs))
}

/// Pre-norm residual block pair:
/// `t ← t + Dropout(MHSA(LN(t)))`, then `t ← t + Dropout(FFN(LN(t)))`.
pub fn encoder_layer(
    tape: &mut Tape,
    tokens: Var,
    prefix: &str,
    cfg: &VitConfig,
    binding: &ParamBinding,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let ln1 = tape
        .layer_norm(
            tokens,
            binding.var(&format!("{prefix}.ln1.gamma")),
            binding.var(&format!("{prefix}.ln1.beta")),
            LN_EPS,
        )
        .map_err(|e| named(prefix, e))?;
    let (attn_out, _) = mhsa(tape, ln1, prefix, cfg, binding).map_err(|e| named(prefix, e))?;
    let attn_out = ctx.dropout(tape, attn_out, cfg.dropout_rate)?;
    let tokens = tape.add(tokens, attn_out).map_err(|e| named(prefix, e))?;

    let ln2 = tape
        .layer_norm(
            tokens,
            binding.var(&format!("{prefix}.ln2.gamma")),
            binding.var(&format!("{prefix}.ln2.beta")),
            LN_EPS,
        )
        .map_err(|e| named(prefix, e))?;
    let h = linear_rows(
        tape,
        ln2,
        binding.var(&format!("{prefix}.ffn.w1")),
        binding.var(&format!("{prefix}.ffn.b1")),
    )
    .map_err(|e| named(prefix, e))?;
    let h = tape.relu(h);
    let h = linear_rows(
        tape,
        h,
        binding.var(&format!("{prefix}.ffn.w2")),
        binding.var(&format!("{prefix}.ffn.b2")),
    )
    .map_err(|e| named(prefix, e))?;
    let h = ctx.dropout(tape, h, cfg.dropout_rate)?;
    tape.add(tokens, h).map_err(|e| named(prefix, e))
}

/// Patchify → embed → encoder stack → mean over tokens.
pub fn vit_forward(
    tape: &mut Tape,
    x: Var,
    cfg: &VitConfig,
    binding: &ParamBinding,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let mut tokens = embed_tokens(tape, x, cfg, binding)?;
    for l in 0..cfg.num_layers {
        tokens = encoder_layer(tape, tokens, &format!("vit.l{l}"), cfg, binding, ctx)
            .map_err(|e| named(&format!("layer {l}"), e))?;
    }
    tape.mean_rows(tokens).map_err(|e| named("token pooling", e))
}
