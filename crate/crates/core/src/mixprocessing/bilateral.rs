//! Edge-preserving bilateral filter.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Standard bilateral weighting: spatial Gaussian × range Gaussian,
/// normalized per pixel, window radius `ceil(3·sigma_s)`. The accumulation
/// is centered on the pixel value, so constant regions pass through exactly
/// and the output never leaves the input value range.
pub fn bilateral_filter(img: &ImageBuffer, sigma_s: f64, sigma_r: f64) -> Result<ImageBuffer> {
    if img.channels != 1 {
        return Err(Error::Input(format!(
            "bilateral_filter expects grayscale, got {} channels",
            img.channels
        )));
    }
    assert!(sigma_s > 0.0 && sigma_r > 0.0, "sigmas must be positive");
    let radius = (3.0 * sigma_s).ceil() as isize;
    let inv_2ss = 1.0 / (2.0 * sigma_s * sigma_s);
    let inv_2sr = 1.0 / (2.0 * sigma_r * sigma_r);
    let side = (2 * radius + 1) as usize;
    let mut spatial = vec![0.0f64; side * side];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let idx = ((dy + radius) * (2 * radius + 1) + dx + radius) as usize;
            spatial[idx] = (-((dy * dy + dx * dx) as f64) * inv_2ss).exp();
        }
    }
    let (h, w) = (img.height as isize, img.width as isize);
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let center = img.get(y as usize, x as usize, 0) as f64;
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for dy in -radius..=radius {
                let ny = y + dy;
                if ny < 0 || ny >= h {
                    continue;
                }
                for dx in -radius..=radius {
                    let nx = x + dx;
                    if nx < 0 || nx >= w {
                        continue;
                    }
                    let v = img.get(ny as usize, nx as usize, 0) as f64;
                    let diff = v - center;
                    let wgt = spatial[((dy + radius) * (2 * radius + 1) + dx + radius) as usize]
                        * (-diff * diff * inv_2sr).exp();
                    num += wgt * diff;
                    den += wgt;
                }
            }
            let v = (center + num / den) as f32;
            out.set(y as usize, x as usize, 0, v.clamp(0.0, 1.0));
        }
    }
    Ok(out)
}

/// Plain truncated-Gaussian blur with the same window and edge handling,
/// used as a smoothing baseline.
pub fn gaussian_blur(img: &ImageBuffer, sigma_s: f64) -> Result<ImageBuffer> {
    if img.channels != 1 {
        return Err(Error::Input("gaussian_blur expects grayscale".to_string()));
    }
    assert!(sigma_s > 0.0, "sigma must be positive");
    let radius = (3.0 * sigma_s).ceil() as isize;
    let inv_2ss = 1.0 / (2.0 * sigma_s * sigma_s);
    let (h, w) = (img.height as isize, img.width as isize);
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for dy in -radius..=radius {
                let ny = y + dy;
                if ny < 0 || ny >= h {
                    continue;
                }
                for dx in -radius..=radius {
                    let nx = x + dx;
                    if nx < 0 || nx >= w {
                        continue;
                    }
                    let wgt = (-((dy * dy + dx * dx) as f64) * inv_2ss).exp();
                    num += wgt * img.get(ny as usize, nx as usize, 0) as f64;
                    den += wgt;
                }
            }
            out.set(y as usize, x as usize, 0, (num / den) as f32);
        }
    }
    Ok(out)
}
