//! Convolutional branch: stem, residual normal cells, strided reduction
//! cells, global average pooling.

use super::{NasnetConfig, ParamBinding};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};

fn named(layer: &str, e: Error) -> Error {
    Error::shape("nasnet", format!("{layer}: {e}"))
}

/// 3×3 stride-2 convolution plus bias and ReLU; halves the spatial extent.
pub fn stem_forward(tape: &mut Tape, x: Var, binding: &ParamBinding) -> Result<Var> {
    let w = binding.var("nasnet.stem.weight");
    let b = binding.var("nasnet.stem.bias");
    let y = tape.conv2d(x, w, 2, 1, 1).map_err(|e| named("stem", e))?;
    let y = tape.add_channel_bias(y, b).map_err(|e| named("stem", e))?;
    Ok(tape.relu(y))
}

/// Depthwise 3×3 → pointwise 1×1 → ReLU → residual add. Preserves shape;
/// with zero weights the skip connection makes it the exact identity.
pub fn normal_cell_forward(
    tape: &mut Tape,
    x: Var,
    prefix: &str,
    binding: &ParamBinding,
) -> Result<Var> {
    let channels = tape.value(x).shape()[0];
    let dw = binding.var(&format!("{prefix}.dw.weight"));
    let dwb = binding.var(&format!("{prefix}.dw.bias"));
    let pw = binding.var(&format!("{prefix}.pw.weight"));
    let pwb = binding.var(&format!("{prefix}.pw.bias"));
    let y = tape
        .conv2d(x, dw, 1, 1, channels)
        .map_err(|e| named(prefix, e))?;
    let y = tape.add_channel_bias(y, dwb).map_err(|e| named(prefix, e))?;
    let y = tape.conv2d(y, pw, 1, 0, 1).map_err(|e| named(prefix, e))?;
    let y = tape.add_channel_bias(y, pwb).map_err(|e| named(prefix, e))?;
    let y = tape.relu(y);
    tape.add(y, x).map_err(|e| named(prefix, e))
}

/// Depthwise 3×3 stride 2 → pointwise 1×1 to twice the channels → ReLU.
/// Halves the spatial extent; no residual.
pub fn reduction_cell_forward(
    tape: &mut Tape,
    x: Var,
    prefix: &str,
    binding: &ParamBinding,
) -> Result<Var> {
    let shape = tape.value(x).shape();
    let (channels, h, w) = (shape[0], shape[1], shape[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(named(
            prefix,
            Error::shape("reduction_cell", format!("spatial dims {h}x{w} must be even")),
        ));
    }
    let dw = binding.var(&format!("{prefix}.dw.weight"));
    let dwb = binding.var(&format!("{prefix}.dw.bias"));
    let pw = binding.var(&format!("{prefix}.pw.weight"));
    let pwb = binding.var(&format!("{prefix}.pw.bias"));
    let y = tape
        .conv2d(x, dw, 2, 1, channels)
        .map_err(|e| named(prefix, e))?;
    let y = tape.add_channel_bias(y, dwb).map_err(|e| named(prefix, e))?;
    let y = tape.conv2d(y, pw, 1, 0, 1).map_err(|e| named(prefix, e))?;
    let y = tape.add_channel_bias(y, pwb).map_err(|e| named(prefix, e))?;
    Ok(tape.relu(y))
}

/// Stem → (normal cells → reduction) per stage → normal cells → global
/// average pooling. Returns the pooled feature vector.
pub fn nasnet_forward(
    tape: &mut Tape,
    x: Var,
    cfg: &NasnetConfig,
    binding: &ParamBinding,
) -> Result<Var> {
    let mut cur = stem_forward(tape, x, binding)?;
    for s in 0..cfg.num_stages {
        for cell in 0..cfg.cells_per_stage {
            cur = normal_cell_forward(tape, cur, &format!("nasnet.s{s}.c{cell}"), binding)?;
        }
        if s + 1 < cfg.num_stages {
            cur = reduction_cell_forward(tape, cur, &format!("nasnet.red{s}"), binding)?;
        }
    }
    tape.global_avg_pool(cur).map_err(|e| named("pool", e))
}
