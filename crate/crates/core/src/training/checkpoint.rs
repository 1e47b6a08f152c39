//! Checkpoint serialization.
//!
//! Byte layout, little-endian throughout:
//! magic `NVIT` · version u32 · config-block length u32 + UTF-8 `key = value`
//! text (run config plus `checkpoint.*` metadata) · tensor count u32 · per
//! tensor: name length u16 + UTF-8 name, rank u8, dims u32 each, values f32
//! row-major. Loading validates magic, version, and every tensor shape
//! against the embedded configuration.

use std::fs;
use std::path::Path;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::{param_specs, ModelParams};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"NVIT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Validation metrics captured when a checkpoint was saved.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ValSnapshot {
    pub loss: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// A trained (or initialized) model with everything needed to rebuild it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub version: u32,
    pub config: RunConfig,
    pub epoch: usize,
    pub val: ValSnapshot,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(config: RunConfig, epoch: usize, val: ValSnapshot, params: ModelParams) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config,
            epoch,
            val,
            params,
        }
    }

    fn config_block(&self) -> String {
        let mut text = self.config.canonical_text();
        text.push_str(&format!("checkpoint.epoch = {}\n", self.epoch));
        text.push_str(&format!("checkpoint.val_loss = {}\n", self.val.loss));
        text.push_str(&format!("checkpoint.val_accuracy = {}\n", self.val.accuracy));
        text.push_str(&format!("checkpoint.val_macro_f1 = {}\n", self.val.macro_f1));
        text
    }
}

/// Serializes the checkpoint to its exact on-disk byte layout.
pub fn checkpoint_bytes(c: &Checkpoint) -> Vec<u8> {
    let config = c.config_block();
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&c.version.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    out.extend_from_slice(&(c.params.len() as u32).to_le_bytes());
    for (name, tensor) in c.params.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(tensor.shape().len() as u8);
        for &d in tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Exact file size implied by the layout:
/// `12 + config + 4 + Σ(2 + name + 1 + 4·rank + 4·numel)`.
pub fn expected_byte_size(c: &Checkpoint) -> usize {
    let mut size = 4 + 4 + 4 + c.config_block().len() + 4;
    for (name, tensor) in c.params.iter() {
        size += 2 + name.len() + 1 + 4 * tensor.shape().len() + 4 * tensor.numel();
    }
    size
}

pub fn save_checkpoint(c: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_bytes(c)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format {
                offset: self.pos as u64,
                msg: format!("truncated while reading {what} ({n} bytes needed)"),
            });
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&buf)
}

pub fn parse_checkpoint(buf: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {magic:?}, expected \"NVIT\""),
        });
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported version {version}, expected {CHECKPOINT_VERSION}"),
        });
    }
    let config_len = r.u32("config length")? as usize;
    let config_offset = r.pos as u64;
    let config_bytes = r.take(config_len, "config block")?;
    let config_text = std::str::from_utf8(config_bytes).map_err(|e| Error::Format {
        offset: config_offset,
        msg: format!("config block is not UTF-8: {e}"),
    })?;

    // split run-config lines from checkpoint metadata lines
    let mut meta_epoch = 0usize;
    let mut val = ValSnapshot::default();
    let mut run_lines = String::new();
    for line in config_text.lines() {
        if let Some(rest) = line.strip_prefix("checkpoint.") {
            let parse_val = |s: &str| -> Result<f64> {
                s.trim().parse().map_err(|_| Error::Format {
                    offset: config_offset,
                    msg: format!("bad checkpoint metadata line \"{line}\""),
                })
            };
            if let Some(v) = rest.strip_prefix("epoch =") {
                meta_epoch = parse_val(v)? as usize;
            } else if let Some(v) = rest.strip_prefix("val_loss =") {
                val.loss = parse_val(v)?;
            } else if let Some(v) = rest.strip_prefix("val_accuracy =") {
                val.accuracy = parse_val(v)?;
            } else if let Some(v) = rest.strip_prefix("val_macro_f1 =") {
                val.macro_f1 = parse_val(v)?;
            }
        } else {
            run_lines.push_str(line);
            run_lines.push('\n');
        }
    }
    let config = RunConfig::parse(&run_lines).map_err(|e| Error::Format {
        offset: config_offset,
        msg: format!("embedded config rejected: {e}"),
    })?;

    let count = r.u32("tensor count")? as usize;
    let specs = param_specs(&config.model_config());
    if count != specs.len() {
        return Err(Error::Format {
            offset: (r.pos - 4) as u64,
            msg: format!(
                "tensor count {count} does not match the {} parameters implied by the config",
                specs.len()
            ),
        });
    }
    let mut params = ModelParams::new();
    for (expect_name, expect_shape, _) in &specs {
        let name_offset = r.pos as u64;
        let name_len = r.u16("tensor name length")? as usize;
        let name_bytes = r.take(name_len, "tensor name")?;
        let name = std::str::from_utf8(name_bytes).map_err(|e| Error::Format {
            offset: name_offset,
            msg: format!("tensor name is not UTF-8: {e}"),
        })?;
        if name != expect_name {
            return Err(Error::Format {
                offset: name_offset,
                msg: format!("tensor \"{name}\" out of order, expected \"{expect_name}\""),
            });
        }
        let rank = r.u8("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("tensor dim")? as usize);
        }
        if &shape != expect_shape {
            return Err(Error::Format {
                offset: name_offset,
                msg: format!(
                    "tensor \"{name}\" has shape {shape:?}, config implies {expect_shape:?}"
                ),
            });
        }
        let numel: usize = shape.iter().product();
        let bytes = r.take(4 * numel, "tensor values")?;
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        params.insert(name.to_string(), Tensor::new(shape, data)?.with_grad());
    }
    if r.pos != buf.len() {
        return Err(Error::Format {
            offset: r.pos as u64,
            msg: format!("{} trailing bytes after the last tensor", buf.len() - r.pos),
        });
    }
    Ok(Checkpoint {
        version,
        config,
        epoch: meta_epoch,
        val,
        params,
    })
}
