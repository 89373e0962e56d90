//! Images as planar float buffers in [0, 1], plus PNG I/O and bicubic
//! resampling.
//!
//! Pixels are stored channel-planar (C x H x W) so conversion to batch
//! tensors is a straight copy. Resampling is classic Catmull-Rom bicubic
//! with a fixed 4-tap footprint in source space; it is deliberately NOT
//! widened when shrinking, so plain downscaling aliases the way direct
//! subsampling does. Anti-aliased shrinking is the pyramid module's job.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::Config(format!(
                "image extents must be >= 1 with 1 or 3 channels, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "image buffer holds {} values, expected {}",
                data.len(),
                height * width * channels
            )));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Image {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// Single-channel period-2 checkerboard with values {0, 1} and
    /// phase such that pixel (0, 0) is `phase`.
    pub fn checkerboard(height: usize, width: usize, phase: f32) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                let v = if (x + y) % 2 == 0 { phase } else { 1.0 - phase };
                data.push(v);
            }
        }
        Image {
            height,
            width,
            channels: 1,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shortest_side(&self) -> usize {
        self.height.min(self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// One channel plane as a contiguous slice.
    pub fn plane(&self, c: usize) -> &[f32] {
        &self.data[c * self.height * self.width..(c + 1) * self.height * self.width]
    }

    pub fn min_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    /// Copy into a C x H x W tensor.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new(
            vec![self.channels, self.height, self.width],
            self.data.clone(),
        )
        .expect("image buffer is consistent by construction")
    }

    /// Decode an 8-bit PNG. Grayscale sources load as one channel,
    /// everything else as RGB; values are scaled to [0, 1].
    pub fn load_png(path: &Path) -> Result<Self> {
        let decoded = image::open(path).map_err(|source| Error::ImageDecode {
            path: path.to_path_buf(),
            source,
        })?;
        let (data, channels, width, height);
        match decoded {
            image::DynamicImage::ImageLuma8(img) => {
                width = img.width() as usize;
                height = img.height() as usize;
                channels = 1;
                data = img.into_raw();
            }
            other => {
                let img = other.into_rgb8();
                width = img.width() as usize;
                height = img.height() as usize;
                channels = 3;
                data = img.into_raw();
            }
        }
        // Interleaved bytes -> planar floats.
        let mut planar = vec![0.0f32; data.len()];
        let plane = width * height;
        for (i, chunk) in data.chunks_exact(channels).enumerate() {
            for (c, &byte) in chunk.iter().enumerate() {
                planar[c * plane + i] = byte as f32 / 255.0;
            }
        }
        Image::new(height, width, channels, planar)
    }

    /// Encode as 8-bit PNG (gray for one channel, RGB for three).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let plane = self.height * self.width;
        let mut bytes = vec![0u8; plane * self.channels];
        for i in 0..plane {
            for c in 0..self.channels {
                let v = (self.data[c * plane + i].clamp(0.0, 1.0) * 255.0).round();
                bytes[i * self.channels + c] = v as u8;
            }
        }
        let width = self.width as u32;
        let height = self.height as u32;
        let result = match self.channels {
            1 => image::GrayImage::from_raw(width, height, bytes)
                .expect("buffer sized above")
                .save_with_format(path, image::ImageFormat::Png),
            _ => image::RgbImage::from_raw(width, height, bytes)
                .expect("buffer sized above")
                .save_with_format(path, image::ImageFormat::Png),
        };
        result.map_err(|source| Error::ImageDecode {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Resample to exactly `height` x `width` with bicubic interpolation,
    /// clamped back to [0, 1]. Returns a bit-exact copy when the target
    /// equals the current size.
    pub fn resize_to(&self, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Config("resize target must be >= 1".into()));
        }
        if height == self.height && width == self.width {
            return Ok(self.clone());
        }
        // Separable passes: columns first (height), then rows (width).
        let pass1 = resample_axis(
            &self.data,
            self.channels,
            self.height,
            self.width,
            height,
            Axis::Vertical,
        );
        let pass2 = resample_axis(&pass1, self.channels, height, self.width, width, Axis::Horizontal);
        let data = pass2.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Image::new(height, width, self.channels, data)
    }
}

enum Axis {
    Vertical,
    Horizontal,
}

/// Catmull-Rom kernel (a = -0.5).
fn cubic_weight(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        (1.5 * t - 2.5) * t * t + 1.0
    } else if t < 2.0 {
        ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
    } else {
        0.0
    }
}

fn resample_axis(
    data: &[f32],
    channels: usize,
    height: usize,
    width: usize,
    target: usize,
    axis: Axis,
) -> Vec<f32> {
    let (src_len, out_h, out_w) = match axis {
        Axis::Vertical => (height, target, width),
        Axis::Horizontal => (width, height, target),
    };
    // Center-aligned mapping with 4 taps around the sample point.
    let scale = src_len as f64 / target as f64;
    let taps: Vec<([usize; 4], [f64; 4])> = (0..target)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale - 0.5;
            let base = center.floor() as isize;
            let mut idx = [0usize; 4];
            let mut wts = [0f64; 4];
            let mut sum = 0.0;
            for k in 0..4 {
                let src = base - 1 + k as isize;
                idx[k] = src.clamp(0, src_len as isize - 1) as usize;
                wts[k] = cubic_weight(center - src as f64);
                sum += wts[k];
            }
            for w in &mut wts {
                *w /= sum;
            }
            (idx, wts)
        })
        .collect();

    let mut out = vec![0.0f32; channels * out_h * out_w];
    for c in 0..channels {
        let src_plane = &data[c * height * width..(c + 1) * height * width];
        let dst_plane = &mut out[c * out_h * out_w..(c + 1) * out_h * out_w];
        match axis {
            Axis::Vertical => {
                for (oy, (idx, wts)) in taps.iter().enumerate() {
                    for x in 0..width {
                        let mut acc = 0.0f64;
                        for k in 0..4 {
                            acc += wts[k] * src_plane[idx[k] * width + x] as f64;
                        }
                        dst_plane[oy * width + x] = acc as f32;
                    }
                }
            }
            Axis::Horizontal => {
                for y in 0..out_h {
                    let row = &src_plane[y * width..(y + 1) * width];
                    for (ox, (idx, wts)) in taps.iter().enumerate() {
                        let mut acc = 0.0f64;
                        for k in 0..4 {
                            acc += wts[k] * row[idx[k]] as f64;
                        }
                        dst_plane[y * out_w + ox] = acc as f32;
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_survives_resize() {
        let img = Image::constant(40, 30, 3, 0.7);
        let out = img.resize_to(17, 11).unwrap();
        for &v in out.data() {
            assert!((v - 0.7).abs() < 1e-6, "got {v}");
        }
    }

    #[test]
    fn identity_resize_is_bit_exact() {
        let img = Image::checkerboard(10, 12, 0.0);
        let out = img.resize_to(10, 12).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn resize_clamps_overshoot() {
        // Catmull-Rom overshoots near hard edges; outputs must stay in [0,1].
        let mut img = Image::constant(8, 8, 1, 0.0);
        for y in 0..8 {
            for x in 4..8 {
                img.set(0, y, x, 1.0);
            }
        }
        let out = img.resize_to(13, 13).unwrap();
        assert!(out.min_value() >= 0.0 && out.max_value() <= 1.0);
    }

    #[test]
    fn png_roundtrip_gray_and_rgb() {
        let dir = tempfile::tempdir().unwrap();
        for channels in [1usize, 3] {
            let mut img = Image::constant(9, 7, channels, 0.0);
            for (i, v) in img.data_mut().iter_mut().enumerate() {
                *v = (i % 256) as f32 / 255.0;
            }
            let path = dir.path().join(format!("c{channels}.png"));
            img.save_png(&path).unwrap();
            let back = Image::load_png(&path).unwrap();
            assert_eq!(back.channels(), channels);
            assert_eq!(back, img, "8-bit values in [0,1] roundtrip exactly");
        }
    }
}
