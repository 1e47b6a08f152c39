//! Ideal annular bandpass filtering in the 2-D Fourier domain.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Highest radial frequency on the grid: the Nyquist corner `0.5·√2`.
pub const MAX_RADIAL_FREQ: f64 = std::f64::consts::SQRT_2 * 0.5;

fn fft_2d(data: &mut [Complex<f64>], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(w)
    } else {
        planner.plan_fft_forward(w)
    };
    for row in data.chunks_mut(w) {
        row_fft.process(row);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(h)
    } else {
        planner.plan_fft_forward(h)
    };
    let mut col = vec![Complex::default(); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = data[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            data[y * w + x] = col[y];
        }
    }
}

/// Keeps radial frequencies `low ≤ r ≤ high` (frequencies normalized so the
/// Nyquist axis is 0.5; the DC term survives iff `low == 0`), then inverse
/// transforms, takes the real part and clamps to `[0,1]`.
pub fn fourier_bandpass(img: &ImageBuffer, low: f64, high: f64) -> Result<ImageBuffer> {
    if img.channels != 1 {
        return Err(Error::Input(format!(
            "fourier_bandpass expects grayscale, got {} channels",
            img.channels
        )));
    }
    if !(0.0..).contains(&low) || low >= high {
        return Err(Error::Config(format!(
            "band must satisfy 0 <= low < high, got [{low}, {high}]"
        )));
    }
    let (h, w) = (img.height, img.width);
    let mut spec: Vec<Complex<f64>> = img
        .pixels
        .iter()
        .map(|&v| Complex::new(v as f64, 0.0))
        .collect();
    fft_2d(&mut spec, h, w, false);

    for u in 0..h {
        let fy = if u <= h / 2 { u as f64 } else { u as f64 - h as f64 } / h as f64;
        for v in 0..w {
            let fx = if v <= w / 2 { v as f64 } else { v as f64 - w as f64 } / w as f64;
            let r = (fy * fy + fx * fx).sqrt();
            if r < low || r > high {
                spec[u * w + v] = Complex::default();
            }
        }
    }

    fft_2d(&mut spec, h, w, true);
    let scale = 1.0 / (h * w) as f64;
    let pixels = spec
        .iter()
        .map(|c| ((c.re * scale) as f32).clamp(0.0, 1.0))
        .collect();
    let mut out = ImageBuffer::new(h, w, 1, pixels)?;
    out.source_path = img.source_path.clone();
    out.label = img.label;
    Ok(out)
}
