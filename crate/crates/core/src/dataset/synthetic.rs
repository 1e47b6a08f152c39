//! Procedural five-class texture dataset for sanity runs and demos.
//!
//! One distinct pattern family per class, with per-image phase/frequency
//! jitter and speckle so the split generalizes but stays easy to learn.

use std::f32::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::dataset::CLASS_NAMES;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::rng::substream;

fn texture(class_id: usize, size: usize, seed: u64, index: u64) -> ImageBuffer {
    let mut rng = substream(seed, &[class_id as u64, index]);
    let freq: f32 = rng.gen_range(0.75..1.25) * 2.0 * PI / 8.0;
    let phase: f32 = rng.gen_range(0.0..2.0 * PI);
    let noise_amp = 0.05f32;
    let mut pixels = vec![0.0f32; size * size];
    for y in 0..size {
        for x in 0..size {
            let (yf, xf) = (y as f32, x as f32);
            let v = match class_id {
                0 => (freq * yf + phase).sin(),
                1 => (freq * xf + phase).sin(),
                2 => (freq * yf + phase).sin() * (freq * xf + phase).sin(),
                3 => {
                    let c = (size - 1) as f32 / 2.0;
                    let r = ((yf - c).powi(2) + (xf - c).powi(2)).sqrt();
                    (freq * r + phase).sin()
                }
                _ => (freq * (yf + xf) * std::f32::consts::FRAC_1_SQRT_2 + phase).sin(),
            };
            let n: f32 = rng.gen_range(-noise_amp..noise_amp);
            pixels[y * size + x] = (0.5 + 0.4 * v + n).clamp(0.0, 1.0);
        }
    }
    ImageBuffer::new(size, size, 1, pixels).expect("static dims")
}

/// Writes `per_class` PNGs for each of the five classes under `dir`,
/// following the class-directory dataset layout.
pub fn write_texture_dataset(dir: &Path, per_class: usize, size: usize, seed: u64) -> Result<()> {
    for (class_id, name) in CLASS_NAMES.iter().enumerate() {
        let class_dir = dir.join(name);
        fs::create_dir_all(&class_dir).map_err(|e| Error::io(&class_dir, e))?;
        for i in 0..per_class {
            let img = texture(class_id, size, seed, i as u64);
            img.save_png(&class_dir.join(format!("tex_{i:03}.png")))?;
        }
    }
    Ok(())
}
