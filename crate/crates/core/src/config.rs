//! Line-oriented `key = value` run configuration covering every tunable in
//! the pipeline. Unknown keys are rejected with their line number; every key
//! has a documented default.

use crate::dataset::AugmentConfig;
use crate::error::{Error, Result};
use crate::mixprocessing::PreprocessConfig;
use crate::model::{FusionConfig, ModelConfig, NasnetConfig, VitConfig};
use crate::training::{OptimizerKind, TrainConfig};

/// Dataset handling knobs: model input size, split fractions and seeds,
/// augmentation magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub image_size: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub augment: AugmentConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            image_size: 224,
            train_fraction: 0.70,
            val_fraction: 0.15,
            test_fraction: 0.15,
            split_seed: 7,
            augment: AugmentConfig::default(),
        }
    }
}

/// The complete run configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub preprocess: PreprocessConfig,
    pub nasnet: NasnetConfig,
    pub vit: VitConfig,
    pub fusion: FusionConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl RunConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            image_size: self.data.image_size,
            nasnet: self.nasnet.clone(),
            vit: self.vit.clone(),
            fusion: self.fusion.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.model_config().validate()?;
        self.train.validate()?;
        self.data.augment.validate()?;
        let s = self.data.train_fraction + self.data.val_fraction + self.data.test_fraction;
        if self.data.train_fraction <= 0.0
            || self.data.val_fraction <= 0.0
            || self.data.test_fraction <= 0.0
            || (s - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "split fractions must be positive and sum to 1, got {} + {} + {}",
                self.data.train_fraction, self.data.val_fraction, self.data.test_fraction
            )));
        }
        Ok(())
    }

    /// Every key with its current value and one-line description, in the
    /// canonical emission order.
    pub fn key_entries(&self) -> Vec<(&'static str, String, &'static str)> {
        let p = &self.preprocess;
        let a = &self.data.augment;
        vec![
            ("preprocess.wavelet_detail_gain", p.wavelet_detail_gain.to_string(), "detail-plane gain of the wavelet enhancement stage (>= 1)"),
            ("preprocess.clahe_tiles_rows", p.clahe_tiles.0.to_string(), "CLAHE tile grid rows"),
            ("preprocess.clahe_tiles_cols", p.clahe_tiles.1.to_string(), "CLAHE tile grid columns"),
            ("preprocess.clahe_clip", p.clahe_clip.to_string(), "CLAHE clip limit as a multiple of the uniform bin height (> 0)"),
            ("preprocess.band_low", p.band_low.to_string(), "bandpass lower radial frequency (0 keeps DC)"),
            ("preprocess.band_high", p.band_high.to_string(), "bandpass upper radial frequency (<= 0.7071)"),
            ("preprocess.bilateral_sigma_spatial", p.bilateral_sigma_spatial.to_string(), "bilateral filter spatial sigma, pixels"),
            ("preprocess.bilateral_sigma_range", p.bilateral_sigma_range.to_string(), "bilateral filter range sigma, intensity units"),
            ("preprocess.morph_se_radius", p.morph_se_radius.to_string(), "disk radius of the morphological structuring element"),
            ("preprocess.morph_blend_alpha", p.morph_blend_alpha.to_string(), "blend weight of the original image in the morphology stage [0,1]"),
            ("preprocess.enable_wavelet", p.enable_wavelet.to_string(), "enable the wavelet detail-gain stage"),
            ("preprocess.enable_clahe", p.enable_clahe.to_string(), "enable the CLAHE stage"),
            ("preprocess.enable_fourier", p.enable_fourier.to_string(), "enable the Fourier bandpass stage"),
            ("preprocess.enable_bilateral", p.enable_bilateral.to_string(), "enable the bilateral filter stage"),
            ("preprocess.enable_morphology", p.enable_morphology.to_string(), "enable the morphological blend stage"),
            ("nasnet.stem_channels", self.nasnet.stem_channels.to_string(), "stem output channels; feature dim is stem * 2^(stages-1)"),
            ("nasnet.cells_per_stage", self.nasnet.cells_per_stage.to_string(), "normal cells per stage"),
            ("nasnet.num_stages", self.nasnet.num_stages.to_string(), "stages; stages-1 reduction cells halve the spatial extent"),
            ("vit.patch_size", self.vit.patch_size.to_string(), "square patch side; must divide the image size"),
            ("vit.embed_dim", self.vit.embed_dim.to_string(), "token embedding dimension; divisible by num_heads"),
            ("vit.num_layers", self.vit.num_layers.to_string(), "encoder layers"),
            ("vit.num_heads", self.vit.num_heads.to_string(), "attention heads"),
            ("vit.ffn_dim", self.vit.ffn_dim.to_string(), "feed-forward hidden dimension"),
            ("vit.dropout_rate", self.vit.dropout_rate.to_string(), "dropout after attention and feed-forward blocks (training only)"),
            ("fusion.fusion_dim", self.fusion.fusion_dim.to_string(), "shared dimension both branch features are projected to"),
            ("fusion.mlp_hidden", self.fusion.mlp_hidden.to_string(), "classifier hidden layer width"),
            ("fusion.dropout_rate", self.fusion.dropout_rate.to_string(), "dropout after the classifier hidden layer (training only)"),
            ("train.epochs", self.train.epochs.to_string(), "training epochs"),
            ("train.batch_size", self.train.batch_size.to_string(), "mini-batch size"),
            ("train.learning_rate", self.train.learning_rate.to_string(), "optimizer learning rate"),
            ("train.optimizer", self.train.optimizer.to_string(), "adam or sgd"),
            ("train.adam_beta1", self.train.adam_beta1.to_string(), "Adam first-moment decay"),
            ("train.adam_beta2", self.train.adam_beta2.to_string(), "Adam second-moment decay"),
            ("train.adam_eps", self.train.adam_eps.to_string(), "Adam denominator epsilon"),
            ("train.weight_decay", self.train.weight_decay.to_string(), "L2 penalty added to gradients"),
            ("train.seed", self.train.seed.to_string(), "master seed: init, shuffling, dropout"),
            ("data.image_size", self.data.image_size.to_string(), "model input side length"),
            ("data.train_fraction", self.data.train_fraction.to_string(), "train split fraction"),
            ("data.val_fraction", self.data.val_fraction.to_string(), "validation split fraction"),
            ("data.test_fraction", self.data.test_fraction.to_string(), "test split fraction"),
            ("data.split_seed", self.data.split_seed.to_string(), "stratified split shuffle seed"),
            ("data.augment_hflip_prob", a.hflip_prob.to_string(), "horizontal flip probability (train only)"),
            ("data.augment_rotation_max_deg", a.rotation_max_deg.to_string(), "max rotation magnitude, degrees"),
            ("data.augment_scale_min", a.scale_range.0.to_string(), "min zoom factor"),
            ("data.augment_scale_max", a.scale_range.1.to_string(), "max zoom factor"),
            ("data.augment_brightness_delta_max", a.brightness_delta_max.to_string(), "max additive brightness shift"),
            ("data.augment_seed", a.seed.to_string(), "augmentation stream seed"),
        ]
    }

    /// Canonical `key = value` serialization; parsing it back reproduces the
    /// configuration exactly.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for (key, value, _) in self.key_entries() {
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    /// Applies one key/value pair.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse::<T>().map_err(|_| {
                Error::Config(format!("invalid value \"{value}\" for key {key}"))
            })
        }
        match key {
            "preprocess.wavelet_detail_gain" => self.preprocess.wavelet_detail_gain = num(key, value)?,
            "preprocess.clahe_tiles_rows" => self.preprocess.clahe_tiles.0 = num(key, value)?,
            "preprocess.clahe_tiles_cols" => self.preprocess.clahe_tiles.1 = num(key, value)?,
            "preprocess.clahe_clip" => self.preprocess.clahe_clip = num(key, value)?,
            "preprocess.band_low" => self.preprocess.band_low = num(key, value)?,
            "preprocess.band_high" => self.preprocess.band_high = num(key, value)?,
            "preprocess.bilateral_sigma_spatial" => self.preprocess.bilateral_sigma_spatial = num(key, value)?,
            "preprocess.bilateral_sigma_range" => self.preprocess.bilateral_sigma_range = num(key, value)?,
            "preprocess.morph_se_radius" => self.preprocess.morph_se_radius = num(key, value)?,
            "preprocess.morph_blend_alpha" => self.preprocess.morph_blend_alpha = num(key, value)?,
            "preprocess.enable_wavelet" => self.preprocess.enable_wavelet = num(key, value)?,
            "preprocess.enable_clahe" => self.preprocess.enable_clahe = num(key, value)?,
            "preprocess.enable_fourier" => self.preprocess.enable_fourier = num(key, value)?,
            "preprocess.enable_bilateral" => self.preprocess.enable_bilateral = num(key, value)?,
            "preprocess.enable_morphology" => self.preprocess.enable_morphology = num(key, value)?,
            "nasnet.stem_channels" => self.nasnet.stem_channels = num(key, value)?,
            "nasnet.cells_per_stage" => self.nasnet.cells_per_stage = num(key, value)?,
            "nasnet.num_stages" => self.nasnet.num_stages = num(key, value)?,
            "vit.patch_size" => self.vit.patch_size = num(key, value)?,
            "vit.embed_dim" => self.vit.embed_dim = num(key, value)?,
            "vit.num_layers" => self.vit.num_layers = num(key, value)?,
            "vit.num_heads" => self.vit.num_heads = num(key, value)?,
            "vit.ffn_dim" => self.vit.ffn_dim = num(key, value)?,
            "vit.dropout_rate" => self.vit.dropout_rate = num(key, value)?,
            "fusion.fusion_dim" => self.fusion.fusion_dim = num(key, value)?,
            "fusion.mlp_hidden" => self.fusion.mlp_hidden = num(key, value)?,
            "fusion.dropout_rate" => self.fusion.dropout_rate = num(key, value)?,
            "train.epochs" => self.train.epochs = num(key, value)?,
            "train.batch_size" => self.train.batch_size = num(key, value)?,
            "train.learning_rate" => self.train.learning_rate = num(key, value)?,
            "train.optimizer" => {
                self.train.optimizer = match value {
                    "adam" => OptimizerKind::Adam,
                    "sgd" => OptimizerKind::Sgd,
                    _ => {
                        return Err(Error::Config(format!(
                            "invalid optimizer \"{value}\"; expected adam or sgd"
                        )))
                    }
                }
            }
            "train.adam_beta1" => self.train.adam_beta1 = num(key, value)?,
            "train.adam_beta2" => self.train.adam_beta2 = num(key, value)?,
            "train.adam_eps" => self.train.adam_eps = num(key, value)?,
            "train.weight_decay" => self.train.weight_decay = num(key, value)?,
            "train.seed" => self.train.seed = num(key, value)?,
            "data.image_size" => self.data.image_size = num(key, value)?,
            "data.train_fraction" => self.data.train_fraction = num(key, value)?,
            "data.val_fraction" => self.data.val_fraction = num(key, value)?,
            "data.test_fraction" => self.data.test_fraction = num(key, value)?,
            "data.split_seed" => self.data.split_seed = num(key, value)?,
            "data.augment_hflip_prob" => self.data.augment.hflip_prob = num(key, value)?,
            "data.augment_rotation_max_deg" => self.data.augment.rotation_max_deg = num(key, value)?,
            "data.augment_scale_min" => self.data.augment.scale_range.0 = num(key, value)?,
            "data.augment_scale_max" => self.data.augment.scale_range.1 = num(key, value)?,
            "data.augment_brightness_delta_max" => self.data.augment.brightness_delta_max = num(key, value)?,
            "data.augment_seed" => self.data.augment.seed = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key \"{key}\""))),
        }
        Ok(())
    }

    /// Parses `key = value` lines with `#` comments, starting from defaults.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::ConfigLine {
                    line: lineno + 1,
                    msg: format!("expected key = value, got \"{line}\""),
                });
            };
            cfg.set_key(key.trim(), value.trim())
                .map_err(|e| Error::ConfigLine {
                    line: lineno + 1,
                    msg: e.to_string(),
                })?;
        }
        Ok(cfg)
    }

    /// Reads and parses a config file; a missing `--config` uses defaults.
    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = RunConfig::parse(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
