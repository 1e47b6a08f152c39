//! Model configuration, named parameter store, and seeded initialization.

mod fusion;
mod nasnet;
mod vit;

pub use fusion::{class_probs, fuse, mlp_head, model_forward, model_loss, project, ClassProbs};
pub use nasnet::{nasnet_forward, normal_cell_forward, reduction_cell_forward, stem_forward};
pub use vit::{embed_tokens, encoder_layer, mhsa, vit_forward};

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{GradStore, Tape, Tensor, Var};

/// Convolutional branch layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NasnetConfig {
    pub stem_channels: usize,
    pub cells_per_stage: usize,
    pub num_stages: usize,
}

impl Default for NasnetConfig {
    fn default() -> Self {
        NasnetConfig {
            stem_channels: 16,
            cells_per_stage: 2,
            num_stages: 3,
        }
    }
}

impl NasnetConfig {
    /// Feature dimension after the last stage: `stem · 2^(stages−1)`.
    pub fn out_dim(&self) -> usize {
        self.stem_channels << (self.num_stages - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stem_channels == 0 || self.cells_per_stage == 0 || self.num_stages == 0 {
            return Err(Error::Config(
                "nasnet config values must all be >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Transformer branch layout.
#[derive(Debug, Clone, PartialEq)]
pub struct VitConfig {
    pub patch_size: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub dropout_rate: f32,
}

impl Default for VitConfig {
    fn default() -> Self {
        VitConfig {
            patch_size: 16,
            embed_dim: 64,
            num_layers: 2,
            num_heads: 4,
            ffn_dim: 128,
            dropout_rate: 0.1,
        }
    }
}

impl VitConfig {
    pub fn patch_dim(&self) -> usize {
        3 * self.patch_size * self.patch_size
    }

    pub fn token_count(&self, image_size: usize) -> usize {
        let g = image_size / self.patch_size;
        g * g
    }

    pub fn validate(&self, image_size: usize) -> Result<()> {
        if self.patch_size == 0 || self.embed_dim == 0 || self.num_heads == 0 {
            return Err(Error::Config("vit config values must all be >= 1".to_string()));
        }
        if !self.embed_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "vit embed_dim {} must be divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        if !image_size.is_multiple_of(self.patch_size) {
            return Err(Error::Config(format!(
                "image size {image_size} must be divisible by patch size {}",
                self.patch_size
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "vit dropout_rate must lie in [0,1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Fusion projection and classifier head layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub fusion_dim: usize,
    pub mlp_hidden: usize,
    pub num_classes: usize,
    pub dropout_rate: f32,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            fusion_dim: 64,
            mlp_hidden: 32,
            num_classes: 5,
            dropout_rate: 0.1,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes != 5 {
            return Err(Error::Config(format!(
                "the classifier is fixed at 5 classes, got {}",
                self.num_classes
            )));
        }
        if self.fusion_dim == 0 || self.mlp_hidden == 0 {
            return Err(Error::Config("fusion dims must be >= 1".to_string()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "fusion dropout_rate must lie in [0,1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Everything needed to build or load the full model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub image_size: usize,
    pub nasnet: NasnetConfig,
    pub vit: VitConfig,
    pub fusion: FusionConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            image_size: 224,
            nasnet: NasnetConfig::default(),
            vit: VitConfig::default(),
            fusion: FusionConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || !self.image_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "image size must be a positive even number, got {}",
                self.image_size
            )));
        }
        self.nasnet.validate()?;
        self.vit.validate(self.image_size)?;
        self.fusion.validate()?;
        // every reduction halves the spatial extent; it must stay even
        let mut side = self.image_size / 2;
        for _ in 1..self.nasnet.num_stages {
            if !side.is_multiple_of(2) || side < 2 {
                return Err(Error::Config(format!(
                    "image size {} cannot be halved across {} stages",
                    self.image_size, self.nasnet.num_stages
                )));
            }
            side /= 2;
        }
        Ok(())
    }

    /// A small configuration for fast CPU experiments on `size`×`size` inputs.
    pub fn toy(size: usize) -> Self {
        ModelConfig {
            image_size: size,
            nasnet: NasnetConfig {
                stem_channels: 2,
                cells_per_stage: 1,
                num_stages: 2,
            },
            vit: VitConfig {
                patch_size: 16,
                embed_dim: 8,
                num_layers: 1,
                num_heads: 2,
                ffn_dim: 16,
                dropout_rate: 0.0,
            },
            fusion: FusionConfig {
                fusion_dim: 8,
                mlp_hidden: 4,
                num_classes: 5,
                dropout_rate: 0.0,
            },
        }
    }
}

/// How a parameter tensor is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Centered Gaussian with std `√(2/fan_in)`.
    HeNormal { fan_in: usize },
    /// Centered Gaussian with a fixed std (positional table).
    Gaussian { std: f64 },
    Zero,
    One,
}

/// Declares every parameter tensor (name, shape, init) for a configuration,
/// in canonical order. Initialization, checkpoint layout and shape
/// validation all derive from this single list.
pub fn param_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let mut specs = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: Init| specs.push((name, shape, init));

    let c0 = cfg.nasnet.stem_channels;
    push(
        "nasnet.stem.weight".into(),
        vec![c0, 3, 3, 3],
        Init::HeNormal { fan_in: 27 },
    );
    push("nasnet.stem.bias".into(), vec![c0], Init::Zero);
    let mut c = c0;
    for s in 0..cfg.nasnet.num_stages {
        for cell in 0..cfg.nasnet.cells_per_stage {
            let p = format!("nasnet.s{s}.c{cell}");
            push(format!("{p}.dw.weight"), vec![c, 1, 3, 3], Init::HeNormal { fan_in: 9 });
            push(format!("{p}.dw.bias"), vec![c], Init::Zero);
            push(format!("{p}.pw.weight"), vec![c, c, 1, 1], Init::HeNormal { fan_in: c });
            push(format!("{p}.pw.bias"), vec![c], Init::Zero);
        }
        if s + 1 < cfg.nasnet.num_stages {
            let p = format!("nasnet.red{s}");
            push(format!("{p}.dw.weight"), vec![c, 1, 3, 3], Init::HeNormal { fan_in: 9 });
            push(format!("{p}.dw.bias"), vec![c], Init::Zero);
            push(format!("{p}.pw.weight"), vec![2 * c, c, 1, 1], Init::HeNormal { fan_in: c });
            push(format!("{p}.pw.bias"), vec![2 * c], Init::Zero);
            c *= 2;
        }
    }

    let d = cfg.vit.embed_dim;
    let n = cfg.vit.token_count(cfg.image_size);
    push(
        "vit.patch.weight".into(),
        vec![d, cfg.vit.patch_dim()],
        Init::HeNormal { fan_in: cfg.vit.patch_dim() },
    );
    push("vit.patch.bias".into(), vec![d], Init::Zero);
    push("vit.pos".into(), vec![n, d], Init::Gaussian { std: 0.02 });
    for l in 0..cfg.vit.num_layers {
        let p = format!("vit.l{l}");
        push(format!("{p}.ln1.gamma"), vec![d], Init::One);
        push(format!("{p}.ln1.beta"), vec![d], Init::Zero);
        for name in ["wq", "wk", "wv", "wo"] {
            push(format!("{p}.attn.{name}"), vec![d, d], Init::HeNormal { fan_in: d });
        }
        for name in ["bq", "bk", "bv", "bo"] {
            push(format!("{p}.attn.{name}"), vec![d], Init::Zero);
        }
        push(format!("{p}.ln2.gamma"), vec![d], Init::One);
        push(format!("{p}.ln2.beta"), vec![d], Init::Zero);
        push(format!("{p}.ffn.w1"), vec![cfg.vit.ffn_dim, d], Init::HeNormal { fan_in: d });
        push(format!("{p}.ffn.b1"), vec![cfg.vit.ffn_dim], Init::Zero);
        push(format!("{p}.ffn.w2"), vec![d, cfg.vit.ffn_dim], Init::HeNormal { fan_in: cfg.vit.ffn_dim });
        push(format!("{p}.ffn.b2"), vec![d], Init::Zero);
    }

    let dn = cfg.nasnet.out_dim();
    let df = cfg.fusion.fusion_dim;
    push("fusion.proj_nasnet.weight".into(), vec![df, dn], Init::HeNormal { fan_in: dn });
    push("fusion.proj_nasnet.bias".into(), vec![df], Init::Zero);
    push("fusion.proj_vit.weight".into(), vec![df, d], Init::HeNormal { fan_in: d });
    push("fusion.proj_vit.bias".into(), vec![df], Init::Zero);
    push(
        "fusion.mlp.w1".into(),
        vec![cfg.fusion.mlp_hidden, df],
        Init::HeNormal { fan_in: df },
    );
    push("fusion.mlp.b1".into(), vec![cfg.fusion.mlp_hidden], Init::Zero);
    push(
        "fusion.mlp.w2".into(),
        vec![cfg.fusion.num_classes, cfg.fusion.mlp_hidden],
        Init::HeNormal { fan_in: cfg.fusion.mlp_hidden },
    );
    push("fusion.mlp.b2".into(), vec![cfg.fusion.num_classes], Init::Zero);
    specs
}

/// Named parameter set for both branches, the fusion projections and the
/// classifier head, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ModelParams {
    pub fn new() -> Self {
        ModelParams {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: String, tensor: Tensor) {
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name {name}"
        );
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).copied().map(|i| &mut self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar parameter count.
    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn clear_grads(&mut self) {
        for (_, t) in self.entries.iter_mut() {
            t.clear_grad();
        }
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::new()
    }
}

/// Seeded initialization: He-scaled Gaussians for weights, zeros for biases,
/// ones for normalization scales, a 0.02-std Gaussian for the positional
/// table. Fully determined by `(cfg, seed)`.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ModelParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::new();
    for (name, shape, init) in param_specs(cfg) {
        let numel: usize = shape.iter().product();
        let data: Vec<f32> = match init {
            Init::Zero => vec![0.0; numel],
            Init::One => vec![1.0; numel],
            Init::HeNormal { fan_in } => {
                let std = (2.0 / fan_in as f64).sqrt();
                (0..numel)
                    .map(|_| {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        (g * std) as f32
                    })
                    .collect()
            }
            Init::Gaussian { std } => (0..numel)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    (g * std) as f32
                })
                .collect(),
        };
        params.insert(name, Tensor::new(shape, data)?.with_grad());
    }
    Ok(params)
}

/// Creates an all-zero parameter set (degenerate model that outputs the
/// uniform distribution); normalization scales stay one.
pub fn zero_params(cfg: &ModelConfig) -> Result<ModelParams> {
    cfg.validate()?;
    let mut params = ModelParams::new();
    for (name, shape, init) in param_specs(cfg) {
        let numel: usize = shape.iter().product();
        let data = match init {
            Init::One => vec![1.0; numel],
            _ => vec![0.0; numel],
        };
        params.insert(name, Tensor::new(shape, data)?.with_grad());
    }
    Ok(params)
}

/// Parameter tensors registered as leaves on one tape.
pub struct ParamBinding {
    vars: Vec<(String, Var)>,
    index: HashMap<String, usize>,
}

impl ParamBinding {
    pub fn var(&self, name: &str) -> Var {
        match self.index.get(name) {
            Some(&i) => self.vars[i].1,
            None => panic!("unknown parameter {name}"),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(n, v)| (n.as_str(), *v))
    }
}

/// Registers every parameter on the tape, preserving canonical order.
pub fn bind_params(tape: &mut Tape, params: &ModelParams) -> ParamBinding {
    let mut vars = Vec::with_capacity(params.len());
    let mut index = HashMap::new();
    for (name, tensor) in params.iter() {
        let var = tape.leaf(tensor.clone());
        index.insert(name.to_string(), vars.len());
        vars.push((name.to_string(), var));
    }
    ParamBinding { vars, index }
}

/// Moves gradients out of a backward pass into the parameter store,
/// scaled (for batch averaging), accumulating over samples.
pub fn accumulate_grads(
    params: &mut ModelParams,
    binding: &ParamBinding,
    grads: &mut GradStore,
    scale: f32,
) {
    for (name, var) in binding.iter() {
        if let Some(mut g) = grads.take(var) {
            for v in &mut g {
                *v *= scale;
            }
            params
                .get_mut(name)
                .expect("binding matches params")
                .accumulate_grad(&g);
        }
    }
}

/// Per-call forward context: inference or seeded-dropout training.
pub struct ForwardCtx {
    pub training: bool,
    rng: ChaCha8Rng,
}

impl ForwardCtx {
    pub fn inference() -> Self {
        ForwardCtx {
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn training(dropout_seed: u64) -> Self {
        ForwardCtx {
            training: true,
            rng: ChaCha8Rng::seed_from_u64(dropout_seed),
        }
    }

    /// Inverted dropout: zero with probability `rate`, otherwise scale by
    /// `1/(1−rate)`. Identity when not training or `rate == 0`.
    pub fn dropout(&mut self, tape: &mut Tape, x: Var, rate: f32) -> Result<Var> {
        if !self.training || rate <= 0.0 {
            return Ok(x);
        }
        let shape = tape.value(x).shape().to_vec();
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        let mask: Vec<f32> = (0..shape.iter().product::<usize>())
            .map(|_| {
                if rand::Rng::gen_bool(&mut self.rng, keep as f64) {
                    scale
                } else {
                    0.0
                }
            })
            .collect();
        let mask = tape.constant(Tensor::new(shape, mask)?);
        tape.mul(x, mask)
    }
}

/// `x[N,d_in] · Wᵀ[d_in,d_out] + b`, the row-major linear layer.
pub(crate) fn linear_rows(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let wt = tape.transpose(w)?;
    let y = tape.matmul(x, wt)?;
    tape.add_row_bias(y, b)
}

/// Linear layer on a single vector `[d_in] -> [d_out]`.
pub(crate) fn linear_vec(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let d_in = tape.value(x).numel();
    let row = tape.reshape(x, vec![1, d_in])?;
    let y = linear_rows(tape, row, w, b)?;
    let d_out = tape.value(y).numel();
    tape.reshape(y, vec![d_out])
}
