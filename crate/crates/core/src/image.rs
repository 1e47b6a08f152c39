//! Floating-point image buffer with PNG/JPG codecs and bilinear resize.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// H×W×C image with pixels in `[0,1]`, interleaved row-major
/// (`pixels[(y*width + x)*channels + c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<f32>,
    pub source_path: Option<PathBuf>,
    pub label: Option<usize>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Input(format!("zero-sized image {height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Input(format!("unsupported channel count {channels}")));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::Input(format!(
                "pixel count {} does not match {height}x{width}x{channels}",
                pixels.len()
            )));
        }
        Ok(ImageBuffer {
            height,
            width,
            channels,
            pixels,
            source_path: None,
            label: None,
        })
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f32) -> Self {
        ImageBuffer {
            height,
            width,
            channels,
            pixels: vec![value; height * width * channels],
            source_path: None,
            label: None,
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    /// Luminance conversion `0.299 R + 0.587 G + 0.114 B`; single-channel
    /// inputs pass through unchanged.
    pub fn to_gray(&self) -> ImageBuffer {
        if self.channels == 1 {
            return self.clone();
        }
        let mut pixels = Vec::with_capacity(self.height * self.width);
        for px in self.pixels.chunks(3) {
            pixels.push((0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]).clamp(0.0, 1.0));
        }
        ImageBuffer {
            height: self.height,
            width: self.width,
            channels: 1,
            pixels,
            source_path: self.source_path.clone(),
            label: self.label,
        }
    }

    /// Copies a single-channel image into `n` identical channels.
    pub fn replicate_channels(&self, n: usize) -> ImageBuffer {
        assert_eq!(self.channels, 1, "replicate_channels expects grayscale");
        if n == 1 {
            return self.clone();
        }
        let mut pixels = Vec::with_capacity(self.height * self.width * n);
        for &v in &self.pixels {
            for _ in 0..n {
                pixels.push(v);
            }
        }
        ImageBuffer {
            height: self.height,
            width: self.width,
            channels: n,
            pixels,
            source_path: self.source_path.clone(),
            label: self.label,
        }
    }

    /// Bilinear resize with the pixel-center convention
    /// `src = (dst + 0.5) * (src_len / dst_len) - 0.5`; a same-size resize is
    /// an exact copy.
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> ImageBuffer {
        if out_h == self.height && out_w == self.width {
            return self.clone();
        }
        let sy_scale = self.height as f64 / out_h as f64;
        let sx_scale = self.width as f64 / out_w as f64;
        let mut pixels = vec![0.0f32; out_h * out_w * self.channels];
        for oy in 0..out_h {
            let sy = ((oy as f64 + 0.5) * sy_scale - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = sy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let fy = (sy - y0 as f64) as f32;
            for ox in 0..out_w {
                let sx = ((ox as f64 + 0.5) * sx_scale - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = sx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let fx = (sx - x0 as f64) as f32;
                for c in 0..self.channels {
                    let p00 = self.get(y0, x0, c);
                    let p01 = self.get(y0, x1, c);
                    let p10 = self.get(y1, x0, c);
                    let p11 = self.get(y1, x1, c);
                    let top = p00 + (p01 - p00) * fx;
                    let bot = p10 + (p11 - p10) * fx;
                    pixels[(oy * out_w + ox) * self.channels + c] = top + (bot - top) * fy;
                }
            }
        }
        ImageBuffer {
            height: out_h,
            width: out_w,
            channels: self.channels,
            pixels,
            source_path: self.source_path.clone(),
            label: self.label,
        }
    }

    /// Decodes a PNG or JPG file. Grayscale sources stay single-channel;
    /// everything else becomes RGB.
    pub fn load(path: &Path) -> Result<ImageBuffer> {
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let mut buf = match img {
            image::DynamicImage::ImageLuma8(g) => {
                let (w, h) = (g.width() as usize, g.height() as usize);
                let pixels = g.into_raw().iter().map(|&v| v as f32 / 255.0).collect();
                ImageBuffer::new(h, w, 1, pixels)?
            }
            other => {
                let rgb = other.into_rgb8();
                let (w, h) = (rgb.width() as usize, rgb.height() as usize);
                let pixels = rgb.into_raw().iter().map(|&v| v as f32 / 255.0).collect();
                ImageBuffer::new(h, w, 3, pixels)?
            }
        };
        buf.source_path = Some(path.to_path_buf());
        Ok(buf)
    }

    /// Encodes as 8-bit PNG, rounding each pixel to the nearest level.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let to_u8 = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let bytes: Vec<u8> = self.pixels.iter().map(|&v| to_u8(v)).collect();
        let (w, h) = (self.width as u32, self.height as u32);
        let res = if self.channels == 1 {
            image::GrayImage::from_raw(w, h, bytes)
                .expect("sized buffer")
                .save_with_format(path, image::ImageFormat::Png)
        } else {
            image::RgbImage::from_raw(w, h, bytes)
                .expect("sized buffer")
                .save_with_format(path, image::ImageFormat::Png)
        };
        res.map_err(|e| Error::Image {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn min_max(&self) -> (f32, f32) {
        let mut mn = f32::INFINITY;
        let mut mx = f32::NEG_INFINITY;
        for &v in &self.pixels {
            mn = mn.min(v);
            mx = mx.max(v);
        }
        (mn, mx)
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&v| v as f64).sum::<f64>() / self.pixels.len() as f64
    }

    pub fn std(&self) -> f64 {
        let mean = self.mean();
        let var = self
            .pixels
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / self.pixels.len() as f64;
        var.sqrt()
    }
}
