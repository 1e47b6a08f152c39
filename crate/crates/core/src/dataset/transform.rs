//! Per-image transforms: decode+resize, channel normalization, and seeded
//! augmentation.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::rng::substream;
use crate::tensor::Tensor;

/// ImageNet channel means used by the input normalization.
pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
/// ImageNet channel standard deviations used by the input normalization.
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Decodes an image, bilinearly resizes it to `target`×`target`, and
/// replicates grayscale sources to three channels.
pub fn load_resize(path: &Path, target: usize) -> Result<ImageBuffer> {
    let img = ImageBuffer::load(path)?;
    Ok(resize_for_model(&img, target))
}

/// Resize to the model input square and force three channels.
pub fn resize_for_model(img: &ImageBuffer, target: usize) -> ImageBuffer {
    let resized = img.resize_bilinear(target, target);
    if resized.channels == 1 {
        resized.replicate_channels(3)
    } else {
        resized
    }
}

/// Per-channel `(x − μ_c) / σ_c` with the ImageNet statistics, emitting a
/// channel-planar `[3×H×W]` tensor.
pub fn normalize(img: &ImageBuffer) -> Result<Tensor> {
    if img.channels != 3 {
        return Err(Error::Input(format!(
            "normalize expects 3 channels, got {}",
            img.channels
        )));
    }
    let (h, w) = (img.height, img.width);
    let mut data = vec![0.0f32; 3 * h * w];
    for c in 0..3 {
        let (mean, std) = (IMAGENET_MEAN[c], IMAGENET_STD[c]);
        for y in 0..h {
            for x in 0..w {
                data[c * h * w + y * w + x] = (img.get(y, x, c) - mean) / std;
            }
        }
    }
    Tensor::new(vec![3, h, w], data)
}

/// Inverse of [`normalize`], for rendering tensors back into images.
pub fn denormalize(t: &Tensor) -> Result<ImageBuffer> {
    let s = t.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::Input(format!("denormalize expects [3,H,W], got {s:?}")));
    }
    let (h, w) = (s[1], s[2]);
    let mut pixels = vec![0.0f32; h * w * 3];
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                pixels[(y * w + x) * 3 + c] =
                    t.data()[c * h * w + y * w + x] * IMAGENET_STD[c] + IMAGENET_MEAN[c];
            }
        }
    }
    ImageBuffer::new(h, w, 3, pixels)
}

/// Augmentation magnitudes; all randomness comes from the seed plus the
/// sample index and epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub hflip_prob: f64,
    pub rotation_max_deg: f64,
    pub scale_range: (f64, f64),
    pub brightness_delta_max: f32,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            hflip_prob: 0.5,
            rotation_max_deg: 10.0,
            scale_range: (0.9, 1.1),
            brightness_delta_max: 0.1,
            seed: 11,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::Config(format!(
                "augment hflip probability must lie in [0,1], got {}",
                self.hflip_prob
            )));
        }
        if self.rotation_max_deg < 0.0 || self.brightness_delta_max < 0.0 {
            return Err(Error::Config("augment magnitudes must be non-negative".to_string()));
        }
        if !(self.scale_range.0 <= 1.0 && 1.0 <= self.scale_range.1) {
            return Err(Error::Config(format!(
                "augment scale range must bracket 1.0, got {:?}",
                self.scale_range
            )));
        }
        Ok(())
    }
}

fn hflip(img: &ImageBuffer) -> ImageBuffer {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..img.channels {
                out.set(y, x, c, img.get(y, img.width - 1 - x, c));
            }
        }
    }
    out
}

/// Inverse-maps every output pixel through rotation by `-angle` about the
/// image center, sampling bilinearly with edge clamping.
fn rotate(img: &ImageBuffer, angle_deg: f64) -> ImageBuffer {
    let theta = angle_deg.to_radians();
    let (sin_t, cos_t) = theta.sin_cos();
    let cy = (img.height - 1) as f64 / 2.0;
    let cx = (img.width - 1) as f64 / 2.0;
    warp(img, |y, x| {
        let (dy, dx) = (y - cy, x - cx);
        (cy + dy * cos_t - dx * sin_t, cx + dy * sin_t + dx * cos_t)
    })
}

/// Zoom about the center: output pixel maps to `center + (p − center)/s`,
/// which crops for `s > 1` and edge-pads for `s < 1`.
fn zoom(img: &ImageBuffer, s: f64) -> ImageBuffer {
    let cy = (img.height - 1) as f64 / 2.0;
    let cx = (img.width - 1) as f64 / 2.0;
    warp(img, |y, x| (cy + (y - cy) / s, cx + (x - cx) / s))
}

fn warp(img: &ImageBuffer, map: impl Fn(f64, f64) -> (f64, f64)) -> ImageBuffer {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            let (sy, sx) = map(y as f64, x as f64);
            let sy = sy.clamp(0.0, (img.height - 1) as f64);
            let sx = sx.clamp(0.0, (img.width - 1) as f64);
            let y0 = sy.floor() as usize;
            let x0 = sx.floor() as usize;
            let y1 = (y0 + 1).min(img.height - 1);
            let x1 = (x0 + 1).min(img.width - 1);
            let fy = (sy - y0 as f64) as f32;
            let fx = (sx - x0 as f64) as f32;
            for c in 0..img.channels {
                let top = img.get(y0, x0, c) + (img.get(y0, x1, c) - img.get(y0, x0, c)) * fx;
                let bot = img.get(y1, x0, c) + (img.get(y1, x1, c) - img.get(y1, x0, c)) * fx;
                out.set(y, x, c, top + (bot - top) * fy);
            }
        }
    }
    out
}

/// Applies flip → rotation → scale → brightness with a substream derived
/// from `(cfg.seed, sample_index, epoch)`. Zero-magnitude transforms are
/// skipped so an all-zero config is the bitwise identity.
pub fn augment(img: &ImageBuffer, cfg: &AugmentConfig, sample_index: u64, epoch: u64) -> ImageBuffer {
    let mut rng = substream(cfg.seed, &[sample_index, epoch]);
    // all four decisions are drawn unconditionally to keep substreams stable
    let flip = rng.gen_bool(cfg.hflip_prob);
    let angle = if cfg.rotation_max_deg > 0.0 {
        rng.gen_range(-cfg.rotation_max_deg..=cfg.rotation_max_deg)
    } else {
        0.0
    };
    let scale = if cfg.scale_range.0 < cfg.scale_range.1 {
        rng.gen_range(cfg.scale_range.0..=cfg.scale_range.1)
    } else {
        cfg.scale_range.0
    };
    let delta = if cfg.brightness_delta_max > 0.0 {
        rng.gen_range(-cfg.brightness_delta_max..=cfg.brightness_delta_max)
    } else {
        0.0
    };

    let mut out = if flip { hflip(img) } else { img.clone() };
    if angle != 0.0 {
        out = rotate(&out, angle);
    }
    if scale != 1.0 {
        out = zoom(&out, scale);
    }
    if delta != 0.0 {
        for v in &mut out.pixels {
            *v = (*v + delta).clamp(0.0, 1.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn random_image(seed: u64, h: usize, w: usize) -> ImageBuffer {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pixels = (0..h * w * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        ImageBuffer::new(h, w, 3, pixels).unwrap()
    }

    #[test]
    fn normalize_pins_the_channel_means_to_zero() {
        let mut img = ImageBuffer::constant(2, 2, 3, 0.0);
        for i in 0..4 {
            img.pixels[i * 3] = IMAGENET_MEAN[0];
            img.pixels[i * 3 + 1] = IMAGENET_MEAN[1];
            img.pixels[i * 3 + 2] = IMAGENET_MEAN[2];
        }
        let t = normalize(&img).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0), "channel means map to exact zero");
    }

    #[test]
    fn normalize_unit_and_frozen_values() {
        let mut img = ImageBuffer::constant(1, 1, 3, 0.0);
        img.pixels[1] = IMAGENET_MEAN[1] + IMAGENET_STD[1];
        let t = normalize(&img).unwrap();
        assert!((t.data()[1] - 1.0).abs() < 1e-6, "mean+std maps to 1");
        // blue channel at 0: -0.406/0.225
        assert!((t.data()[2] as f64 + 1.8044444444).abs() < 1e-5);
    }

    #[test]
    fn normalize_then_denormalize_is_identity() {
        let img = random_image(4, 6, 5);
        let back = denormalize(&normalize(&img).unwrap()).unwrap();
        for (a, b) in img.pixels.iter().zip(&back.pixels) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_magnitude_augment_is_identity() {
        let img = random_image(9, 8, 8);
        let cfg = AugmentConfig {
            hflip_prob: 0.0,
            rotation_max_deg: 0.0,
            scale_range: (1.0, 1.0),
            brightness_delta_max: 0.0,
            seed: 1,
        };
        let out = augment(&img, &cfg, 3, 7);
        assert_eq!(out.pixels, img.pixels);
    }

    #[test]
    fn hflip_is_an_involution() {
        let img = random_image(2, 5, 7);
        let twice = hflip(&hflip(&img));
        assert_eq!(twice.pixels, img.pixels);
    }

    #[test]
    fn augment_is_deterministic_per_stream() {
        let img = random_image(5, 8, 8);
        let cfg = AugmentConfig::default();
        let a = augment(&img, &cfg, 2, 1);
        let b = augment(&img, &cfg, 2, 1);
        assert_eq!(a.pixels, b.pixels);
        let c = augment(&img, &cfg, 3, 1);
        assert_ne!(a.pixels, c.pixels, "different samples draw different transforms");
    }
}
