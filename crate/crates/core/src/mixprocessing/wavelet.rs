//! One-level orthonormal 2-D Haar decomposition and reconstruction.
//!
//! Per 2×2 block `[[a,b],[c,d]]` the four coefficients are
//! `A=(a+b+c+d)/2`, `H=(a+b−c−d)/2`, `V=(a−b+c−d)/2`, `D=(a−b−c+d)/2`
//! (the 1/2-per-block convention: a constant image `v` yields `A = 2v`).
//! Odd extents are edge-padded by one row/column and the padding is recorded
//! so the inverse can crop back.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Half-resolution approximation and detail planes of one grayscale image.
#[derive(Debug, Clone)]
pub struct WaveletSubbands {
    pub half_height: usize,
    pub half_width: usize,
    pub approx: Vec<f32>,
    pub detail_h: Vec<f32>,
    pub detail_v: Vec<f32>,
    pub detail_d: Vec<f32>,
    pub pad_bottom: bool,
    pub pad_right: bool,
}

impl WaveletSubbands {
    fn check(&self) -> Result<()> {
        let n = self.half_height * self.half_width;
        if self.half_height == 0
            || self.half_width == 0
            || self.approx.len() != n
            || self.detail_h.len() != n
            || self.detail_v.len() != n
            || self.detail_d.len() != n
        {
            return Err(Error::Input(format!(
                "inconsistent subband shapes for {}x{}",
                self.half_height, self.half_width
            )));
        }
        Ok(())
    }

    /// Multiplies all three detail planes in place.
    pub fn scale_details(&mut self, gain: f32) {
        for plane in [&mut self.detail_h, &mut self.detail_v, &mut self.detail_d] {
            for v in plane.iter_mut() {
                *v *= gain;
            }
        }
    }
}

pub fn dwt2_haar(img: &ImageBuffer) -> Result<WaveletSubbands> {
    if img.channels != 1 {
        return Err(Error::Input(format!(
            "dwt2_haar expects grayscale, got {} channels",
            img.channels
        )));
    }
    if img.height == 0 || img.width == 0 {
        return Err(Error::Input("dwt2_haar on zero-sized image".to_string()));
    }
    let pad_bottom = img.height % 2 == 1;
    let pad_right = img.width % 2 == 1;
    let h = img.height + pad_bottom as usize;
    let w = img.width + pad_right as usize;
    let sample = |y: usize, x: usize| -> f32 {
        img.get(y.min(img.height - 1), x.min(img.width - 1), 0)
    };
    let (hh, hw) = (h / 2, w / 2);
    let n = hh * hw;
    let mut sub = WaveletSubbands {
        half_height: hh,
        half_width: hw,
        approx: vec![0.0; n],
        detail_h: vec![0.0; n],
        detail_v: vec![0.0; n],
        detail_d: vec![0.0; n],
        pad_bottom,
        pad_right,
    };
    for by in 0..hh {
        for bx in 0..hw {
            let a = sample(2 * by, 2 * bx);
            let b = sample(2 * by, 2 * bx + 1);
            let c = sample(2 * by + 1, 2 * bx);
            let d = sample(2 * by + 1, 2 * bx + 1);
            let i = by * hw + bx;
            sub.approx[i] = (a + b + c + d) / 2.0;
            sub.detail_h[i] = (a + b - c - d) / 2.0;
            sub.detail_v[i] = (a - b + c - d) / 2.0;
            sub.detail_d[i] = (a - b - c + d) / 2.0;
        }
    }
    Ok(sub)
}

/// Exact inverse of [`dwt2_haar`] up to rounding; output clamped to `[0,1]`.
pub fn idwt2_haar(sub: &WaveletSubbands) -> Result<ImageBuffer> {
    sub.check()?;
    let (hh, hw) = (sub.half_height, sub.half_width);
    let (h, w) = (2 * hh, 2 * hw);
    let mut full = vec![0.0f32; h * w];
    for by in 0..hh {
        for bx in 0..hw {
            let i = by * hw + bx;
            let (a, hd, vd, dd) = (sub.approx[i], sub.detail_h[i], sub.detail_v[i], sub.detail_d[i]);
            full[(2 * by) * w + 2 * bx] = (a + hd + vd + dd) / 2.0;
            full[(2 * by) * w + 2 * bx + 1] = (a + hd - vd - dd) / 2.0;
            full[(2 * by + 1) * w + 2 * bx] = (a - hd + vd - dd) / 2.0;
            full[(2 * by + 1) * w + 2 * bx + 1] = (a - hd - vd + dd) / 2.0;
        }
    }
    let out_h = h - sub.pad_bottom as usize;
    let out_w = w - sub.pad_right as usize;
    let mut pixels = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        for x in 0..out_w {
            pixels.push(full[y * w + x].clamp(0.0, 1.0));
        }
    }
    ImageBuffer::new(out_h, out_w, 1, pixels)
}

/// Detail-gain enhancement: decompose, amplify detail planes, reconstruct.
pub fn wavelet_enhance(img: &ImageBuffer, gain: f32) -> Result<ImageBuffer> {
    let mut sub = dwt2_haar(img)?;
    sub.scale_details(gain);
    idwt2_haar(&sub)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_image_has_no_detail() {
        let img = ImageBuffer::constant(6, 6, 1, 0.4);
        let sub = dwt2_haar(&img).unwrap();
        for &v in &sub.approx {
            assert!((v - 0.8).abs() < 1e-6); // 2c under the 1/2 convention
        }
        for plane in [&sub.detail_h, &sub.detail_v, &sub.detail_d] {
            assert!(plane.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_subbands_reconstruct_zero_image() {
        let sub = WaveletSubbands {
            half_height: 2,
            half_width: 2,
            approx: vec![0.0; 4],
            detail_h: vec![0.0; 4],
            detail_v: vec![0.0; 4],
            detail_d: vec![0.0; 4],
            pad_bottom: false,
            pad_right: false,
        };
        let img = idwt2_haar(&sub).unwrap();
        assert!(img.pixels.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn round_trip_within_tolerance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for (h, w) in [(8, 8), (7, 9), (5, 4), (1, 1), (3, 3)] {
            let pixels: Vec<f32> = (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
            let img = ImageBuffer::new(h, w, 1, pixels).unwrap();
            let back = idwt2_haar(&dwt2_haar(&img).unwrap()).unwrap();
            assert_eq!(back.height, h);
            assert_eq!(back.width, w);
            for (a, b) in img.pixels.iter().zip(&back.pixels) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn checkerboard_energy_lands_in_diagonal_detail() {
        // 2x2-period checkerboard: within each block only D is non-zero
        let mut pixels = vec![0.0f32; 64];
        for y in 0..8 {
            for x in 0..8 {
                pixels[y * 8 + x] = ((y + x) % 2) as f32;
            }
        }
        let img = ImageBuffer::new(8, 8, 1, pixels).unwrap();
        let sub = dwt2_haar(&img).unwrap();
        assert!(sub.detail_h.iter().all(|&v| v == 0.0));
        assert!(sub.detail_v.iter().all(|&v| v == 0.0));
        assert!(sub.detail_d.iter().all(|&v| v.abs() == 1.0));
        assert!(sub.approx.iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn detail_gain_on_ramp_matches_dense_reference() {
        // independent per-block arithmetic for gain g on a horizontal ramp
        let (h, w) = (4, 6);
        let gain = 1.5f32;
        let pixels: Vec<f32> = (0..h * w)
            .map(|i| (i % w) as f32 / (w - 1) as f32 * 0.5 + 0.25)
            .collect();
        let img = ImageBuffer::new(h, w, 1, pixels.clone()).unwrap();
        let out = wavelet_enhance(&img, gain).unwrap();

        for by in 0..h / 2 {
            for bx in 0..w / 2 {
                let a = pixels[(2 * by) * w + 2 * bx];
                let b = pixels[(2 * by) * w + 2 * bx + 1];
                let c = pixels[(2 * by + 1) * w + 2 * bx];
                let d = pixels[(2 * by + 1) * w + 2 * bx + 1];
                let ca = (a + b + c + d) / 2.0;
                let ch = gain * (a + b - c - d) / 2.0;
                let cv = gain * (a - b + c - d) / 2.0;
                let cd = gain * (a - b - c + d) / 2.0;
                let expect = [
                    (ca + ch + cv + cd) / 2.0,
                    (ca + ch - cv - cd) / 2.0,
                    (ca - ch + cv - cd) / 2.0,
                    (ca - ch - cv + cd) / 2.0,
                ];
                let got = [
                    out.get(2 * by, 2 * bx, 0),
                    out.get(2 * by, 2 * bx + 1, 0),
                    out.get(2 * by + 1, 2 * bx, 0),
                    out.get(2 * by + 1, 2 * bx + 1, 0),
                ];
                for (g, e) in got.iter().zip(expect.iter()) {
                    assert!((g - e.clamp(0.0, 1.0)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn rejects_multichannel_and_reports_bad_shapes() {
        let rgb = ImageBuffer::constant(4, 4, 3, 0.5);
        assert!(dwt2_haar(&rgb).is_err());
        let bad = WaveletSubbands {
            half_height: 2,
            half_width: 2,
            approx: vec![0.0; 3],
            detail_h: vec![0.0; 4],
            detail_v: vec![0.0; 4],
            detail_d: vec![0.0; 4],
            pad_bottom: false,
            pad_right: false,
        };
        assert!(idwt2_haar(&bad).is_err());
    }
}
