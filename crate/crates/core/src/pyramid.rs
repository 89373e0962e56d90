//! Gaussian and naive multi-scale image pyramids.
//!
//! A Gaussian pyramid is built by recursively smoothing with the fixed
//! 5x5 binomial kernel G and removing every other pixel row and column,
//! so each level carries half the spatial frequency band of the previous
//! one. The naive pyramid resamples the original image straight to each
//! target size with plain bicubic interpolation and no pre-smoothing; its
//! coarser levels alias, which is exactly the baseline behaviour the
//! toolkit contrasts against. Both pyramids share a bit-identical finest
//! level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// 1-D factor of the smoothing kernel: [1, 4, 6, 4, 1] / 16.
pub const GAUSSIAN_KERNEL_1D: [f64; 5] = [
    1.0 / 16.0,
    4.0 / 16.0,
    6.0 / 16.0,
    4.0 / 16.0,
    1.0 / 16.0,
];

/// The 5x5 smoothing kernel G = outer(g, g) with g the 1-D factor.
/// Entries are k/256 for integer k and sum to exactly 1.
pub fn gaussian_kernel_2d() -> [[f64; 5]; 5] {
    let mut k = [[0.0; 5]; 5];
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = GAUSSIAN_KERNEL_1D[i] * GAUSSIAN_KERNEL_1D[j];
        }
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PyramidKind {
    Gaussian,
    Naive,
}

impl std::fmt::Display for PyramidKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PyramidKind::Gaussian => write!(f, "gaussian"),
            PyramidKind::Naive => write!(f, "naive"),
        }
    }
}

impl std::str::FromStr for PyramidKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(PyramidKind::Gaussian),
            "naive" => Ok(PyramidKind::Naive),
            other => Err(Error::Config(format!(
                "unknown pyramid kind '{other}' (expected gaussian or naive)"
            ))),
        }
    }
}

/// Ordered set of scale levels for one image, coarsest first, finest last.
#[derive(Debug, Clone)]
pub struct ImagePyramid {
    pub levels: Vec<Image>,
    pub base_shortest_side: usize,
    pub kind: PyramidKind,
}

impl ImagePyramid {
    /// Shortest side of every level, coarse to fine.
    pub fn shortest_sides(&self) -> Vec<usize> {
        self.levels.iter().map(Image::shortest_side).collect()
    }

    pub fn finest(&self) -> &Image {
        self.levels.last().expect("a pyramid has at least one level")
    }
}

/// Resize so the shortest side equals `target`, preserving aspect ratio
/// (the longer side rounds to the nearest integer, never below `target`).
pub fn resize_shortest_side(img: &Image, target: usize) -> Result<Image> {
    if target == 0 {
        return Err(Error::Config("target shortest side must be >= 1".into()));
    }
    let (h, w) = (img.height(), img.width());
    let (th, tw) = if h <= w {
        let tw = ((w as f64 * target as f64 / h as f64).round() as usize).max(target);
        (target, tw)
    } else {
        let th = ((h as f64 * target as f64 / w as f64).round() as usize).max(target);
        (th, target)
    };
    img.resize_to(th, tw)
}

/// Convolve each channel with G, reflect-padded at the borders, keeping
/// the image size. Implemented as two 1-D passes of the separable factor;
/// taps accumulate in f64 so constants and value ranges are preserved to
/// well below 1e-9.
pub fn gaussian_smooth(img: &Image) -> Image {
    let h = img.height();
    let w = img.width();
    let c = img.channels();
    // reflect-101 indexing: ..., 2, 1, | 0, 1, 2, ..., n-1 | n-2, n-3, ...
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * (n - 1) - i;
        }
        i.clamp(0, n - 1) as usize
    };

    let mut vertical = vec![0.0f64; c * h * w];
    for ch in 0..c {
        let plane = img.plane(ch);
        let dst = &mut vertical[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            let rows: Vec<&[f32]> = (-2..=2)
                .map(|dy| {
                    let sy = reflect(y as isize + dy, h);
                    &plane[sy * w..(sy + 1) * w]
                })
                .collect();
            for x in 0..w {
                let mut acc = 0.0f64;
                for (k, row) in rows.iter().enumerate() {
                    acc += GAUSSIAN_KERNEL_1D[k] * row[x] as f64;
                }
                dst[y * w + x] = acc;
            }
        }
    }

    let mut out = vec![0.0f32; c * h * w];
    for ch in 0..c {
        let src = &vertical[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for x in 0..w {
                let mut acc = 0.0f64;
                for (k, coeff) in GAUSSIAN_KERNEL_1D.iter().enumerate() {
                    let sx = reflect(x as isize + k as isize - 2, w);
                    acc += coeff * row[sx];
                }
                dst[y * w + x] = acc as f32;
            }
        }
    }
    Image::new(h, w, c, out).expect("smoothing preserves extents")
}

/// Keep the even-indexed rows and columns: H x W -> ceil(H/2) x ceil(W/2).
pub fn downsample2(img: &Image) -> Result<Image> {
    let (h, w) = (img.height(), img.width());
    if h < 2 || w < 2 {
        return Err(Error::Config(format!(
            "cannot subsample a {h}x{w} image; both sides must be >= 2"
        )));
    }
    let oh = h.div_ceil(2);
    let ow = w.div_ceil(2);
    let c = img.channels();
    let mut data = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = img.plane(ch);
        for y in (0..h).step_by(2) {
            for x in (0..w).step_by(2) {
                data.push(plane[y * w + x]);
            }
        }
    }
    Image::new(oh, ow, c, data)
}

fn validate_pyramid_request(levels: usize, base_shortest_side: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::Config("a pyramid needs at least one level".into()));
    }
    let divisor = 1usize << (levels - 1);
    if base_shortest_side % divisor != 0 {
        return Err(Error::Config(format!(
            "base shortest side {base_shortest_side} is not divisible by 2^{}",
            levels - 1
        )));
    }
    if base_shortest_side / divisor < 8 {
        return Err(Error::Config(format!(
            "coarsest level would be {} px on the short side; need >= 8",
            base_shortest_side / divisor
        )));
    }
    Ok(())
}

/// Build the anti-aliased pyramid: the finest level is the image resized
/// to `base_shortest_side`, and every coarser level is the previous one
/// smoothed with G and then subsampled by two.
pub fn build_gaussian_pyramid(
    img: &Image,
    levels: usize,
    base_shortest_side: usize,
) -> Result<ImagePyramid> {
    validate_pyramid_request(levels, base_shortest_side)?;
    let finest = resize_shortest_side(img, base_shortest_side)?;
    let mut stack = vec![finest];
    for _ in 1..levels {
        let next = downsample2(&gaussian_smooth(stack.last().unwrap()))?;
        stack.push(next);
    }
    stack.reverse();
    Ok(ImagePyramid {
        levels: stack,
        base_shortest_side,
        kind: PyramidKind::Gaussian,
    })
}

/// Build the direct-subsampling baseline pyramid: every level is the
/// original image resampled with plain bicubic interpolation, no
/// smoothing. Level extents follow the same ceil-halving chain as the
/// Gaussian pyramid so the two line up shape-for-shape, and the finest
/// level is bit-identical between the two kinds.
pub fn build_naive_pyramid(
    img: &Image,
    levels: usize,
    base_shortest_side: usize,
) -> Result<ImagePyramid> {
    validate_pyramid_request(levels, base_shortest_side)?;
    let finest = resize_shortest_side(img, base_shortest_side)?;
    let (mut h, mut w) = (finest.height(), finest.width());
    let mut stack = vec![finest];
    for _ in 1..levels {
        h = h.div_ceil(2);
        w = w.div_ceil(2);
        stack.push(img.resize_to(h, w)?);
    }
    stack.reverse();
    Ok(ImagePyramid {
        levels: stack,
        base_shortest_side,
        kind: PyramidKind::Naive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_sums_to_one_and_separates() {
        let k = gaussian_kernel_2d();
        let sum: f64 = k.iter().flatten().sum();
        assert_eq!(sum, 1.0);
        for (i, row) in k.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, GAUSSIAN_KERNEL_1D[i] * GAUSSIAN_KERNEL_1D[j]);
            }
        }
        // Integer form: 256 * G is the binomial outer product.
        assert_eq!((k[2][2] * 256.0).round(), 36.0);
        assert_eq!((k[0][0] * 256.0).round(), 1.0);
    }

    #[test]
    fn resize_shortest_side_preserves_aspect() {
        let img = Image::constant(100, 200, 1, 0.5);
        let out = resize_shortest_side(&img, 50).unwrap();
        assert_eq!((out.height(), out.width()), (50, 100));
        let tall = Image::constant(300, 90, 1, 0.5);
        let out = resize_shortest_side(&tall, 30).unwrap();
        assert_eq!((out.height(), out.width()), (100, 30));
    }

    #[test]
    fn resize_at_target_is_identity() {
        let img = Image::checkerboard(64, 96, 1.0);
        let out = resize_shortest_side(&img, 64).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn smooth_preserves_constants() {
        let img = Image::constant(17, 23, 3, 0.42);
        let out = gaussian_smooth(&img);
        for &v in out.data() {
            assert!((v - 0.42).abs() < 1e-6);
        }
    }

    #[test]
    fn smooth_impulse_reproduces_kernel() {
        let mut img = Image::constant(11, 11, 1, 0.0);
        img.set(0, 5, 5, 1.0);
        let out = gaussian_smooth(&img);
        let k = gaussian_kernel_2d();
        for y in 0..11 {
            for x in 0..11 {
                let expected = if (3..=7).contains(&y) && (3..=7).contains(&x) {
                    k[y - 3][x - 3]
                } else {
                    0.0
                };
                assert!(
                    (out.get(0, y, x) as f64 - expected).abs() < 1e-7,
                    "pixel ({y},{x})"
                );
            }
        }
    }

    #[test]
    fn smooth_flattens_period2_checkerboard() {
        let img = Image::checkerboard(32, 32, 0.0);
        let out = gaussian_smooth(&img);
        for y in 2..30 {
            for x in 2..30 {
                assert!(
                    (out.get(0, y, x) - 0.5).abs() < 1e-6,
                    "interior pixel ({y},{x}) = {}",
                    out.get(0, y, x)
                );
            }
        }
    }

    #[test]
    fn downsample_keeps_even_indices() {
        let data: Vec<f32> = (0..16).map(|v| v as f32).collect();
        let img = Image::new(4, 4, 1, data).unwrap();
        let out = downsample2(&img).unwrap();
        assert_eq!((out.height(), out.width()), (2, 2));
        assert_eq!(out.data(), &[0.0, 2.0, 8.0, 10.0]);
    }

    #[test]
    fn downsample_ceils_odd_extents() {
        let img = Image::constant(5, 5, 1, 0.3);
        let out = downsample2(&img).unwrap();
        assert_eq!((out.height(), out.width()), (3, 3));
        assert!(out.data().iter().all(|&v| v == 0.3));
        assert!(downsample2(&Image::constant(1, 5, 1, 0.0)).is_err());
    }

    #[test]
    fn gaussian_pyramid_shortest_sides_halve() {
        let img = Image::constant(300, 420, 3, 0.6);
        let pyr = build_gaussian_pyramid(&img, 4, 256).unwrap();
        assert_eq!(pyr.shortest_sides(), vec![32, 64, 128, 256]);
        assert_eq!(pyr.levels.len(), 4);
        // Constant input stays constant at every level.
        for level in &pyr.levels {
            for &v in level.data() {
                assert!((v - 0.6).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn single_level_pyramids_agree() {
        let img = Image::checkerboard(40, 56, 0.0);
        let g = build_gaussian_pyramid(&img, 1, 32).unwrap();
        let n = build_naive_pyramid(&img, 1, 32).unwrap();
        assert_eq!(g.levels[0], n.levels[0]);
    }

    #[test]
    fn finest_levels_bitwise_equal_across_kinds() {
        let mut img = Image::constant(130, 170, 1, 0.0);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = ((i * 2654435761) % 256) as f32 / 255.0;
        }
        let g = build_gaussian_pyramid(&img, 3, 64).unwrap();
        let n = build_naive_pyramid(&img, 3, 64).unwrap();
        assert_eq!(g.finest(), n.finest());
        // Coarser levels differ: smoothing matters.
        assert_ne!(g.levels[0], n.levels[0]);
    }

    #[test]
    fn checkerboard_gaussian_level_is_flat_but_naive_subsample_aliases() {
        let img = Image::checkerboard(64, 64, 0.0);
        let pyr = build_gaussian_pyramid(&img, 2, 64).unwrap();
        let coarse = &pyr.levels[0];
        for y in 1..coarse.height() - 1 {
            for x in 1..coarse.width() - 1 {
                assert!(
                    (coarse.get(0, y, x) - 0.5).abs() < 1e-6,
                    "anti-aliased level should be flat"
                );
            }
        }
        // Direct subsampling locks onto one phase: a constant image.
        let aliased = downsample2(&img).unwrap();
        assert!(aliased.data().iter().all(|&v| v == 0.0));
        let aliased_other = downsample2(&Image::checkerboard(64, 64, 1.0)).unwrap();
        assert!(aliased_other.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn pyramid_preconditions_rejected() {
        let img = Image::constant(64, 64, 1, 0.5);
        assert!(build_gaussian_pyramid(&img, 0, 64).is_err());
        assert!(build_gaussian_pyramid(&img, 4, 32).is_err(), "coarsest would be 4 px");
        assert!(build_gaussian_pyramid(&img, 2, 63).is_err(), "odd base not divisible");
    }
}
