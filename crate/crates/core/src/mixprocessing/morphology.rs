//! Otsu thresholding and binary morphology with a disk structuring element.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Otsu's threshold over a 256-bin histogram: the level maximizing
/// between-class variance, ties resolved to the lowest level. The foreground
/// mask is `level > threshold`.
pub fn otsu_threshold(img: &ImageBuffer) -> usize {
    let mut hist = [0u64; 256];
    for &v in &img.pixels {
        hist[(v.clamp(0.0, 1.0) * 255.0).round() as usize] += 1;
    }
    let total = img.pixels.len() as f64;
    let total_sum: f64 = hist.iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum();
    let mut best_t = 0usize;
    let mut best_var = -1.0f64;
    let mut w0 = 0.0f64;
    let mut sum0 = 0.0f64;
    #[allow(clippy::needless_range_loop)]
    for t in 0..256 {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            if best_var < 0.0 {
                best_var = 0.0;
                best_t = t;
            }
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (total_sum - sum0) / w1;
        let var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best_t = t;
        }
    }
    best_t
}

fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut offs = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dy * dy + dx * dx <= r * r {
                offs.push((dy, dx));
            }
        }
    }
    offs
}

/// Binary dilation: a pixel turns on if any structuring-element neighbor
/// inside the image is on.
pub fn dilate(mask: &[bool], h: usize, w: usize, radius: usize) -> Vec<bool> {
    let offs = disk_offsets(radius);
    let mut out = vec![false; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let on = offs.iter().any(|&(dy, dx)| {
                let (ny, nx) = (y + dy, x + dx);
                ny >= 0 && nx >= 0 && ny < h as isize && nx < w as isize
                    && mask[ny as usize * w + nx as usize]
            });
            out[y as usize * w + x as usize] = on;
        }
    }
    out
}

/// Binary erosion: a pixel stays on only if every structuring-element
/// neighbor inside the image is on (out-of-bounds neighbors are ignored,
/// which pairs with [`dilate`] as an adjunction so closing is idempotent).
pub fn erode(mask: &[bool], h: usize, w: usize, radius: usize) -> Vec<bool> {
    let offs = disk_offsets(radius);
    let mut out = vec![false; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let on = offs.iter().all(|&(dy, dx)| {
                let (ny, nx) = (y + dy, x + dx);
                ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize
                    || mask[ny as usize * w + nx as usize]
            });
            out[y as usize * w + x as usize] = on;
        }
    }
    out
}

/// Morphological closing: dilation followed by erosion.
pub fn close(mask: &[bool], h: usize, w: usize, radius: usize) -> Vec<bool> {
    erode(&dilate(mask, h, w, radius), h, w, radius)
}

/// Otsu threshold → closed foreground mask → blend
/// `alpha·img + (1−alpha)·(img ⊙ mask)`, clamped to `[0,1]`.
pub fn morphological_enhance(img: &ImageBuffer, se_radius: usize, alpha: f32) -> Result<ImageBuffer> {
    if img.channels != 1 {
        return Err(Error::Input(format!(
            "morphological_enhance expects grayscale, got {} channels",
            img.channels
        )));
    }
    assert!(se_radius >= 1, "structuring element radius must be >= 1");
    assert!((0.0..=1.0).contains(&alpha), "alpha must lie in [0,1]");
    let t = otsu_threshold(img);
    let mask: Vec<bool> = img
        .pixels
        .iter()
        .map(|&v| ((v.clamp(0.0, 1.0) * 255.0).round() as usize) > t)
        .collect();
    let closed = close(&mask, img.height, img.width, se_radius);
    let mut out = img.clone();
    for (i, v) in out.pixels.iter_mut().enumerate() {
        let masked = if closed[i] { *v } else { 0.0 };
        *v = (alpha * *v + (1.0 - alpha) * masked).clamp(0.0, 1.0);
    }
    Ok(out)
}
