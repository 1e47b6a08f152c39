//! Five-stage image enhancement chain: wavelet detail gain, CLAHE, Fourier
//! bandpass, bilateral smoothing, and morphological structure blending, in
//! that fixed order. Every stage maps `[0,1]` grayscale images to `[0,1]`
//! grayscale images and disabled stages are identities.

mod bilateral;
mod clahe;
mod fourier;
mod morphology;
mod wavelet;

pub use bilateral::{bilateral_filter, gaussian_blur};
pub use clahe::{clahe, tile_mappings};
pub use fourier::{fourier_bandpass, MAX_RADIAL_FREQ};
pub use morphology::{close, dilate, erode, morphological_enhance, otsu_threshold};
pub use wavelet::{dwt2_haar, idwt2_haar, wavelet_enhance, WaveletSubbands};

use std::time::Instant;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Parameters of all five enhancement stages and their enable flags.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub wavelet_detail_gain: f64,
    pub clahe_tiles: (usize, usize),
    pub clahe_clip: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub bilateral_sigma_spatial: f64,
    pub bilateral_sigma_range: f64,
    pub morph_se_radius: usize,
    pub morph_blend_alpha: f32,
    pub enable_wavelet: bool,
    pub enable_clahe: bool,
    pub enable_fourier: bool,
    pub enable_bilateral: bool,
    pub enable_morphology: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            wavelet_detail_gain: 1.5,
            clahe_tiles: (8, 8),
            clahe_clip: 2.0,
            band_low: 0.0,
            band_high: 0.45,
            bilateral_sigma_spatial: 2.0,
            bilateral_sigma_range: 0.1,
            morph_se_radius: 3,
            morph_blend_alpha: 0.7,
            enable_wavelet: true,
            enable_clahe: true,
            enable_fourier: true,
            enable_bilateral: true,
            enable_morphology: true,
        }
    }
}

impl PreprocessConfig {
    /// All stages switched off (identity pipeline).
    pub fn disabled() -> Self {
        PreprocessConfig {
            enable_wavelet: false,
            enable_clahe: false,
            enable_fourier: false,
            enable_bilateral: false,
            enable_morphology: false,
            ..Default::default()
        }
    }

    pub fn any_enabled(&self) -> bool {
        self.enable_wavelet
            || self.enable_clahe
            || self.enable_fourier
            || self.enable_bilateral
            || self.enable_morphology
    }

    pub fn validate(&self) -> Result<()> {
        if self.wavelet_detail_gain < 1.0 {
            return Err(Error::Config(format!(
                "preprocess.wavelet_detail_gain must be >= 1, got {}",
                self.wavelet_detail_gain
            )));
        }
        if self.clahe_tiles.0 == 0 || self.clahe_tiles.1 == 0 {
            return Err(Error::Config("preprocess.clahe_tiles must be >= 1x1".to_string()));
        }
        if self.clahe_clip <= 0.0 {
            return Err(Error::Config(format!(
                "preprocess.clahe_clip must be > 0, got {}",
                self.clahe_clip
            )));
        }
        if self.band_low < 0.0 || self.band_low >= self.band_high || self.band_high > MAX_RADIAL_FREQ
        {
            return Err(Error::Config(format!(
                "preprocess band must satisfy 0 <= low < high <= {MAX_RADIAL_FREQ:.4}, got [{}, {}]",
                self.band_low, self.band_high
            )));
        }
        if self.bilateral_sigma_spatial <= 0.0 || self.bilateral_sigma_range <= 0.0 {
            return Err(Error::Config("preprocess bilateral sigmas must be > 0".to_string()));
        }
        if self.morph_se_radius == 0 {
            return Err(Error::Config("preprocess.morph_se_radius must be >= 1".to_string()));
        }
        if !(0.0..=1.0).contains(&self.morph_blend_alpha) {
            return Err(Error::Config(format!(
                "preprocess.morph_blend_alpha must lie in [0,1], got {}",
                self.morph_blend_alpha
            )));
        }
        Ok(())
    }
}

/// Wall time spent in each stage, microseconds.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    pub wavelet_us: u128,
    pub clahe_us: u128,
    pub fourier_us: u128,
    pub bilateral_us: u128,
    pub morphology_us: u128,
}

/// Runs the full enhancement chain. RGB inputs are reduced to luminance
/// before the chain and replicated back to three channels afterwards; with
/// every stage disabled the input passes through untouched.
pub fn mixprocess(img: &ImageBuffer, cfg: &PreprocessConfig) -> Result<ImageBuffer> {
    mixprocess_timed(img, cfg).map(|(out, _)| out)
}

/// [`mixprocess`] with per-stage wall-time measurements.
pub fn mixprocess_timed(
    img: &ImageBuffer,
    cfg: &PreprocessConfig,
) -> Result<(ImageBuffer, StageTimings)> {
    cfg.validate()?;
    let mut times = StageTimings::default();
    if !cfg.any_enabled() {
        return Ok((img.clone(), times));
    }
    let stage = |name: &'static str, e: Error| Error::Input(format!("stage {name}: {e}"));
    let mut work = img.to_gray();
    if cfg.enable_wavelet {
        let t0 = Instant::now();
        work = wavelet_enhance(&work, cfg.wavelet_detail_gain as f32)
            .map_err(|e| stage("wavelet", e))?;
        times.wavelet_us = t0.elapsed().as_micros();
    }
    if cfg.enable_clahe {
        let t0 = Instant::now();
        work = clahe(&work, cfg.clahe_tiles, cfg.clahe_clip).map_err(|e| stage("clahe", e))?;
        times.clahe_us = t0.elapsed().as_micros();
    }
    if cfg.enable_fourier {
        let t0 = Instant::now();
        work = fourier_bandpass(&work, cfg.band_low, cfg.band_high)
            .map_err(|e| stage("fourier", e))?;
        times.fourier_us = t0.elapsed().as_micros();
    }
    if cfg.enable_bilateral {
        let t0 = Instant::now();
        work = bilateral_filter(&work, cfg.bilateral_sigma_spatial, cfg.bilateral_sigma_range)
            .map_err(|e| stage("bilateral", e))?;
        times.bilateral_us = t0.elapsed().as_micros();
    }
    if cfg.enable_morphology {
        let t0 = Instant::now();
        work = morphological_enhance(&work, cfg.morph_se_radius, cfg.morph_blend_alpha)
            .map_err(|e| stage("morphology", e))?;
        times.morphology_us = t0.elapsed().as_micros();
    }
    let mut out = if img.channels == 3 {
        work.replicate_channels(3)
    } else {
        work
    };
    out.source_path = img.source_path.clone();
    out.label = img.label;
    Ok((out, times))
}

/// Deterministic 64×64 chest-phantom test image: soft vertical gradient,
/// bright soft-edged rib bands every 16 rows (centers at `y % 16 == 8`), and
/// seeded speckle noise.
pub fn synthetic_phantom(seed: u64) -> ImageBuffer {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = 64usize;
    let mut pixels = vec![0.0f32; n * n];
    for y in 0..n {
        for x in 0..n {
            let grad = 0.35 + 0.2 * (y as f32 / (n - 1) as f32);
            let phase = (y % 16) as f32 - 8.0;
            let rib = 0.22 * (-phase * phase / 3.0).exp();
            let speckle: f32 = rng.gen_range(-0.04..0.04);
            pixels[y * n + x] = (grad + rib + speckle).clamp(0.0, 1.0);
        }
    }
    ImageBuffer::new(n, n, 1, pixels).expect("static dims")
}
