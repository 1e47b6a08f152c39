//! Contrast-limited adaptive histogram equalization.
//!
//! Pixels are quantized to 256 levels; each tile gets a clipped histogram
//! (clip limit expressed as a multiple of the uniform bin height, excess
//! redistributed evenly) and a monotone transfer function built from the
//! interpolated CDF: `T(k) = (cdf_below(k) + (k/255)·hist(k)) / tile_pixels`.
//! This makes the mapping an exact fixed point on the 8-bit lattice when the
//! histogram is uniform, so constants survive the stage. Tile mappings are
//! blended bilinearly between tile centers.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

const BINS: usize = 256;

#[inline]
fn quantize(v: f32) -> usize {
    (v.clamp(0.0, 1.0) * 255.0).round() as usize
}

fn tile_bounds(len: usize, n: usize) -> Vec<usize> {
    (0..=n).map(|i| i * len / n).collect()
}

/// Transfer functions of every tile, row-major over the tile grid. Each
/// mapping is monotone non-decreasing over the 256 levels.
pub fn tile_mappings(
    img: &ImageBuffer,
    tiles: (usize, usize),
    clip: f64,
) -> Result<Vec<Vec<f32>>> {
    let (rows, cols) = tiles;
    if rows == 0 || cols == 0 {
        return Err(Error::Input("clahe tile grid must be at least 1x1".to_string()));
    }
    if rows > img.height || cols > img.width {
        return Err(Error::Input(format!(
            "clahe tile grid {rows}x{cols} larger than image {}x{}",
            img.height, img.width
        )));
    }
    if clip <= 0.0 {
        return Err(Error::Config(format!("clahe clip must be > 0, got {clip}")));
    }
    let rb = tile_bounds(img.height, rows);
    let cb = tile_bounds(img.width, cols);
    let mut maps = Vec::with_capacity(rows * cols);
    for ty in 0..rows {
        for tx in 0..cols {
            let mut hist = [0.0f64; BINS];
            for y in rb[ty]..rb[ty + 1] {
                for x in cb[tx]..cb[tx + 1] {
                    hist[quantize(img.get(y, x, 0))] += 1.0;
                }
            }
            let t = ((rb[ty + 1] - rb[ty]) * (cb[tx + 1] - cb[tx])) as f64;
            // clip and redistribute the excess uniformly
            let limit = clip * t / BINS as f64;
            let mut excess = 0.0;
            for h in hist.iter_mut() {
                if *h > limit {
                    excess += *h - limit;
                    *h = limit;
                }
            }
            let add = excess / BINS as f64;
            for h in hist.iter_mut() {
                *h += add;
            }
            let mut map = Vec::with_capacity(BINS);
            let mut below = 0.0f64;
            for (k, &h) in hist.iter().enumerate() {
                let frac = k as f64 / 255.0;
                map.push(((below + frac * h) / t) as f32);
                below += h;
            }
            maps.push(map);
        }
    }
    Ok(maps)
}

/// Per-tile clipped-histogram equalization with bilinear blending of the
/// tile transfer functions across pixels.
pub fn clahe(img: &ImageBuffer, tiles: (usize, usize), clip: f64) -> Result<ImageBuffer> {
    if img.channels != 1 {
        return Err(Error::Input(format!(
            "clahe expects grayscale, got {} channels",
            img.channels
        )));
    }
    let (rows, cols) = tiles;
    let maps = tile_mappings(img, tiles, clip)?;
    let rb = tile_bounds(img.height, rows);
    let cb = tile_bounds(img.width, cols);
    let centers_y: Vec<f64> = (0..rows)
        .map(|i| (rb[i] + rb[i + 1] - 1) as f64 / 2.0)
        .collect();
    let centers_x: Vec<f64> = (0..cols)
        .map(|i| (cb[i] + cb[i + 1] - 1) as f64 / 2.0)
        .collect();

    // index of the tile at-or-below the coordinate plus the blend weight
    let locate = |centers: &[f64], pos: f64| -> (usize, usize, f64) {
        if pos <= centers[0] {
            return (0, 0, 0.0);
        }
        if pos >= centers[centers.len() - 1] {
            let last = centers.len() - 1;
            return (last, last, 0.0);
        }
        let mut i = 0;
        while centers[i + 1] < pos {
            i += 1;
        }
        let w = (pos - centers[i]) / (centers[i + 1] - centers[i]);
        (i, i + 1, w)
    };

    let mut out = img.clone();
    for y in 0..img.height {
        let (ty0, ty1, wy) = locate(&centers_y, y as f64);
        for x in 0..img.width {
            let (tx0, tx1, wx) = locate(&centers_x, x as f64);
            let k = quantize(img.get(y, x, 0));
            let m00 = maps[ty0 * cols + tx0][k] as f64;
            let m01 = maps[ty0 * cols + tx1][k] as f64;
            let m10 = maps[ty1 * cols + tx0][k] as f64;
            let m11 = maps[ty1 * cols + tx1][k] as f64;
            let top = m00 + (m01 - m00) * wx;
            let bot = m10 + (m11 - m10) * wx;
            let v = top + (bot - top) * wy;
            out.set(y, x, 0, (v as f32).clamp(0.0, 1.0));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_image_stays_constant_within_one_level() {
        for v in [0.0f32, 0.1, 0.25, 0.5, 0.73, 0.9, 1.0] {
            let img = ImageBuffer::constant(16, 16, 1, v);
            let out = clahe(&img, (2, 2), 2.0).unwrap();
            let first = out.pixels[0];
            assert!(out.pixels.iter().all(|&p| p == first), "spatially uniform");
            assert!(
                (first - v).abs() <= 1.0 / 255.0 + 1e-6,
                "value {v} drifted to {first}"
            );
        }
    }

    #[test]
    fn tile_mappings_are_monotone() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let pixels: Vec<f32> = (0..24 * 24).map(|_| rng.gen_range(0.0..1.0)).collect();
            let img = ImageBuffer::new(24, 24, 1, pixels).unwrap();
            let maps = tile_mappings(&img, (3, 3), 2.0).unwrap();
            for map in maps {
                for pair in map.windows(2) {
                    assert!(pair[1] >= pair[0], "mapping must be non-decreasing");
                }
            }
        }
    }

    #[test]
    fn low_contrast_ramp_expands_with_single_tile() {
        // linear ramp occupying [0.4, 0.6]; a 1x1 tile with a large clip is
        // plain histogram equalization and should stretch the range
        let w = 64;
        let pixels: Vec<f32> = (0..w * w)
            .map(|i| 0.4 + 0.2 * (i % w) as f32 / (w - 1) as f32)
            .collect();
        let img = ImageBuffer::new(w, w, 1, pixels).unwrap();
        let out = clahe(&img, (1, 1), 1e9).unwrap();
        let (mn, mx) = out.min_max();
        assert!(mn <= 0.05, "min {mn}");
        assert!(mx >= 0.95, "max {mx}");
    }

    #[test]
    fn scalar_equalization_oracle_single_tile() {
        // independent oracle: for a 1x1 tile the output of pixel value v is
        // (count(levels < k) + (k/255)*count(level == k)) / total
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pixels: Vec<f32> = (0..32 * 32).map(|_| rng.gen_range(0.0..1.0)).collect();
        let img = ImageBuffer::new(32, 32, 1, pixels.clone()).unwrap();
        let out = clahe(&img, (1, 1), 1e9).unwrap();
        let levels: Vec<usize> = pixels.iter().map(|&v| quantize(v)).collect();
        for (i, &v) in pixels.iter().enumerate() {
            let k = quantize(v);
            let below = levels.iter().filter(|&&l| l < k).count() as f64;
            let at = levels.iter().filter(|&&l| l == k).count() as f64;
            let expect = (below + k as f64 / 255.0 * at) / levels.len() as f64;
            assert!(
                (out.pixels[i] as f64 - expect).abs() < 1e-5,
                "pixel {i}: {} vs {expect}",
                out.pixels[i]
            );
        }
    }

    #[test]
    fn rejects_oversized_tile_grid() {
        let img = ImageBuffer::constant(4, 4, 1, 0.5);
        assert!(clahe(&img, (5, 2), 2.0).is_err());
        assert!(clahe(&img, (2, 8), 2.0).is_err());
    }
}
