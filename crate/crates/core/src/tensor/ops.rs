//! Differentiable layer operations.
//!
//! Convolution uses the cross-correlation convention (no kernel flip) with
//! zero padding, lowered to a GEMM per image over im2col patch matrices.
//! Backward passes return exact analytic gradients of the forward maps.
//!
//! Operations parallelize over the batch dimension. Per-image partial
//! results are reduced in index order, so outputs are bitwise reproducible
//! no matter how many worker threads are available.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Geometry of one convolution layer: filter count, kernel extent,
/// stride and zero padding (applied on all four sides).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub fn new(out_channels: usize, kernel: (usize, usize), stride: usize, pad: usize) -> Self {
        ConvSpec {
            out_channels,
            kernel,
            stride,
            pad,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_channels == 0 || self.kernel.0 == 0 || self.kernel.1 == 0 || self.stride == 0 {
            return Err(Error::Config(format!(
                "conv spec requires out_channels, kernel and stride >= 1: {self:?}"
            )));
        }
        Ok(())
    }

    /// Output spatial extent for an input extent, or an error when the
    /// padded input does not cover the kernel.
    pub fn out_extent(&self, input: usize, axis_kernel: usize) -> Result<usize> {
        let padded = input + 2 * self.pad;
        if padded < axis_kernel {
            return Err(Error::Shape(format!(
                "input extent {input} with pad {} is smaller than kernel {axis_kernel}",
                self.pad
            )));
        }
        Ok((padded - axis_kernel) / self.stride + 1)
    }

    pub fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        Ok((
            self.out_extent(h, self.kernel.0)?,
            self.out_extent(w, self.kernel.1)?,
        ))
    }
}

fn check_conv_shapes<S: Scalar>(
    input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
    spec: &ConvSpec,
) -> Result<(usize, usize, usize, usize, usize, usize, usize)> {
    spec.validate()?;
    let (n, c_in, h, w) = input.dims4()?;
    let (c_out, wc_in, kh, kw) = weights.dims4()?;
    if wc_in != c_in {
        return Err(Error::Shape(format!(
            "input has {c_in} channels but weights expect {wc_in}"
        )));
    }
    if c_out != spec.out_channels || (kh, kw) != spec.kernel {
        return Err(Error::Shape(format!(
            "weight shape {:?} disagrees with spec {spec:?}",
            weights.shape()
        )));
    }
    if bias.shape() != [c_out] {
        return Err(Error::Shape(format!(
            "bias shape {:?} must be [{c_out}]",
            bias.shape()
        )));
    }
    Ok((n, c_in, h, w, c_out, kh, kw))
}

/// Gather the padded receptive fields of one image into a (Cin*kh*kw) x (Ho*Wo)
/// patch matrix. Out-of-bounds taps read as zero.
#[allow(clippy::too_many_arguments)]
fn im2col<S: Scalar>(
    image: &[S],
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    cols: &mut [S],
) {
    debug_assert_eq!(cols.len(), c_in * kh * kw * ho * wo);
    let plane = h * w;
    for ci in 0..c_in {
        for i in 0..kh {
            for j in 0..kw {
                let row = ((ci * kh + i) * kw + j) * (ho * wo);
                for y in 0..ho {
                    let iy = (y * stride + i) as isize - pad as isize;
                    let out_row = &mut cols[row + y * wo..row + (y + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        out_row.fill(S::zero());
                        continue;
                    }
                    let src = &image[ci * plane + iy as usize * w..];
                    for (x, slot) in out_row.iter_mut().enumerate() {
                        let ix = (x * stride + j) as isize - pad as isize;
                        *slot = if ix < 0 || ix >= w as isize {
                            S::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add a patch-matrix gradient back onto the padded input grid.
#[allow(clippy::too_many_arguments)]
fn col2im<S: Scalar>(
    cols: &[S],
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    image: &mut [S],
) {
    let plane = h * w;
    for ci in 0..c_in {
        for i in 0..kh {
            for j in 0..kw {
                let row = ((ci * kh + i) * kw + j) * (ho * wo);
                for y in 0..ho {
                    let iy = (y * stride + i) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_base = ci * plane + iy as usize * w;
                    for x in 0..wo {
                        let ix = (x * stride + j) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        image[dst_base + ix as usize] += cols[row + y * wo + x];
                    }
                }
            }
        }
    }
}

/// 2-D convolution (cross-correlation) of an N x Cin x H x W batch with a
/// Cout x Cin x kh x kw filter bank plus per-channel bias.
pub fn conv2d_forward<S: Scalar>(
    input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
    spec: &ConvSpec,
) -> Result<Tensor<S>> {
    let (n, c_in, h, w, c_out, kh, kw) = check_conv_shapes(input, weights, bias, spec)?;
    let (ho, wo) = spec.out_hw(h, w)?;
    let k = c_in * kh * kw;
    let out_plane = ho * wo;

    let mut out = Tensor::zeros(&[n, c_out, ho, wo]);
    let in_stride = c_in * h * w;
    let pointwise = kh == 1 && kw == 1 && spec.stride == 1 && spec.pad == 0;

    out.data_mut()
        .par_chunks_mut(c_out * out_plane)
        .enumerate()
        .for_each(|(img, out_img)| {
            let image = &input.data()[img * in_stride..(img + 1) * in_stride];
            let run_gemm = |patches: &[S], dst: &mut [S]| unsafe {
                S::gemm(
                    c_out,
                    k,
                    out_plane,
                    S::one(),
                    weights.data().as_ptr(),
                    k as isize,
                    1,
                    patches.as_ptr(),
                    out_plane as isize,
                    1,
                    S::zero(),
                    dst.as_mut_ptr(),
                    out_plane as isize,
                    1,
                )
            };
            if pointwise {
                // 1x1 stride-1 convolution: the image already is the patch matrix.
                run_gemm(image, out_img);
            } else {
                let mut cols = vec![S::zero(); k * out_plane];
                im2col(image, c_in, h, w, kh, kw, spec.stride, spec.pad, ho, wo, &mut cols);
                run_gemm(&cols, out_img);
            }
            for co in 0..c_out {
                let b = bias.data()[co];
                for v in &mut out_img[co * out_plane..(co + 1) * out_plane] {
                    *v += b;
                }
            }
        });
    Ok(out)
}

/// Gradients of [`conv2d_forward`] with respect to its three tensor inputs.
pub struct ConvGrads<S: Scalar> {
    pub input: Tensor<S>,
    pub weights: Tensor<S>,
    pub bias: Tensor<S>,
}

pub fn conv2d_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    input: &Tensor<S>,
    weights: &Tensor<S>,
    spec: &ConvSpec,
) -> Result<ConvGrads<S>> {
    let bias = Tensor::zeros(&[spec.out_channels]);
    let (n, c_in, h, w, c_out, kh, kw) = check_conv_shapes(input, weights, &bias, spec)?;
    let (ho, wo) = spec.out_hw(h, w)?;
    if grad_out.shape() != [n, c_out, ho, wo] {
        return Err(Error::Shape(format!(
            "grad_out shape {:?} does not match forward output [{n}, {c_out}, {ho}, {wo}]",
            grad_out.shape()
        )));
    }
    let k = c_in * kh * kw;
    let out_plane = ho * wo;
    let in_stride = c_in * h * w;
    let pointwise = kh == 1 && kw == 1 && spec.stride == 1 && spec.pad == 0;

    let mut grad_input = Tensor::zeros(&[n, c_in, h, w]);

    // Per-image weight-gradient partials, reduced in index order below.
    let partials: Vec<Vec<S>> = grad_input
        .data_mut()
        .par_chunks_mut(in_stride)
        .enumerate()
        .map(|(img, gin_img)| {
            let image = &input.data()[img * in_stride..(img + 1) * in_stride];
            let gout = &grad_out.data()[img * c_out * out_plane..(img + 1) * c_out * out_plane];

            // dW partial: grad_out (Cout x P) * patches^T (P x K)
            let mut dw = vec![S::zero(); c_out * k];
            let mut cols_buf = Vec::new();
            let patches: &[S] = if pointwise {
                image
            } else {
                cols_buf.resize(k * out_plane, S::zero());
                im2col(
                    image, c_in, h, w, kh, kw, spec.stride, spec.pad, ho, wo, &mut cols_buf,
                );
                &cols_buf
            };
            unsafe {
                S::gemm(
                    c_out,
                    out_plane,
                    k,
                    S::one(),
                    gout.as_ptr(),
                    out_plane as isize,
                    1,
                    patches.as_ptr(),
                    1,
                    out_plane as isize,
                    S::zero(),
                    dw.as_mut_ptr(),
                    k as isize,
                    1,
                );
            }

            // dX: W^T (K x Cout) * grad_out (Cout x P), scattered back on the grid.
            if pointwise {
                unsafe {
                    S::gemm(
                        k,
                        c_out,
                        out_plane,
                        S::one(),
                        weights.data().as_ptr(),
                        1,
                        k as isize,
                        gout.as_ptr(),
                        out_plane as isize,
                        1,
                        S::zero(),
                        gin_img.as_mut_ptr(),
                        out_plane as isize,
                        1,
                    );
                }
            } else {
                let mut gcols = vec![S::zero(); k * out_plane];
                unsafe {
                    S::gemm(
                        k,
                        c_out,
                        out_plane,
                        S::one(),
                        weights.data().as_ptr(),
                        1,
                        k as isize,
                        gout.as_ptr(),
                        out_plane as isize,
                        1,
                        S::zero(),
                        gcols.as_mut_ptr(),
                        out_plane as isize,
                        1,
                    );
                }
                col2im(
                    &gcols, c_in, h, w, kh, kw, spec.stride, spec.pad, ho, wo, gin_img,
                );
            }
            dw
        })
        .collect();

    let mut grad_weights = Tensor::zeros(&[c_out, c_in, kh, kw]);
    for partial in &partials {
        for (dst, &src) in grad_weights.data_mut().iter_mut().zip(partial) {
            *dst += src;
        }
    }

    let mut grad_bias = Tensor::zeros(&[c_out]);
    for img in 0..n {
        for co in 0..c_out {
            let base = (img * c_out + co) * out_plane;
            let mut acc = S::zero();
            for &g in &grad_out.data()[base..base + out_plane] {
                acc += g;
            }
            grad_bias.data_mut()[co] += acc;
        }
    }

    Ok(ConvGrads {
        input: grad_input,
        weights: grad_weights,
        bias: grad_bias,
    })
}

/// Elementwise max(0, x).
pub fn relu<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    input.map(|v| v.max(S::zero()))
}

/// ReLU backward gate: gradient passes only where the forward input was positive.
pub fn relu_backward<S: Scalar>(grad_out: &Tensor<S>, forward_input: &Tensor<S>) -> Tensor<S> {
    let data = grad_out
        .data()
        .iter()
        .zip(forward_input.data())
        .map(|(&g, &x)| if x > S::zero() { g } else { S::zero() })
        .collect();
    Tensor {
        shape: grad_out.shape().to_vec(),
        data,
    }
}

/// Guided-backprop gate: gradient passes only where the forward input was
/// positive AND the incoming gradient is positive.
pub fn relu_backward_guided<S: Scalar>(
    grad_out: &Tensor<S>,
    forward_input: &Tensor<S>,
) -> Tensor<S> {
    let data = grad_out
        .data()
        .iter()
        .zip(forward_input.data())
        .map(|(&g, &x)| {
            if x > S::zero() && g > S::zero() {
                g
            } else {
                S::zero()
            }
        })
        .collect();
    Tensor {
        shape: grad_out.shape().to_vec(),
        data,
    }
}

/// Multiplicative dropout mask with the survivor scale folded in.
#[derive(Debug, Clone)]
pub struct DropoutMask<S: Scalar> {
    mask: Vec<S>,
}

/// Inverted dropout. In training mode each element is zeroed independently
/// with probability `rate` and survivors are scaled by 1/(1-rate); in eval
/// mode the input passes through untouched.
pub fn dropout_forward<S: Scalar>(
    input: &Tensor<S>,
    rate: f64,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor<S>, Option<DropoutMask<S>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let scale = S::from_f64(1.0 / (1.0 - rate));
    let mask: Vec<S> = (0..input.len())
        .map(|_| {
            if rng.gen::<f64>() < rate {
                S::zero()
            } else {
                scale
            }
        })
        .collect();
    let data = input
        .data()
        .iter()
        .zip(&mask)
        .map(|(&v, &m)| v * m)
        .collect();
    Ok((
        Tensor {
            shape: input.shape().to_vec(),
            data,
        },
        Some(DropoutMask { mask }),
    ))
}

pub fn dropout_backward<S: Scalar>(grad_out: &Tensor<S>, mask: &DropoutMask<S>) -> Tensor<S> {
    let data = grad_out
        .data()
        .iter()
        .zip(&mask.mask)
        .map(|(&g, &m)| g * m)
        .collect();
    Tensor {
        shape: grad_out.shape().to_vec(),
        data,
    }
}

/// Spatial mean per channel: N x C x H x W -> N x C. Works for any spatial
/// size including 1 x 1, so the classifier head places no restriction on
/// the input resolution.
pub fn global_average_pool<S: Scalar>(input: &Tensor<S>) -> Result<Tensor<S>> {
    let (n, c, h, w) = input.dims4()?;
    let plane = h * w;
    let inv = S::from_f64(1.0 / plane as f64);
    let mut out = Tensor::zeros(&[n, c]);
    for img in 0..n {
        for ch in 0..c {
            let base = (img * c + ch) * plane;
            let mut acc = S::zero();
            for &v in &input.data()[base..base + plane] {
                acc += v;
            }
            out.data_mut()[img * c + ch] = acc * inv;
        }
    }
    Ok(out)
}

/// Backward of [`global_average_pool`]: grad spreads uniformly over the plane.
pub fn global_average_pool_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    h: usize,
    w: usize,
) -> Result<Tensor<S>> {
    let (n, c) = grad_out.dims2()?;
    let plane = h * w;
    let inv = S::from_f64(1.0 / plane as f64);
    let mut out = Tensor::zeros(&[n, c, h, w]);
    for img in 0..n {
        for ch in 0..c {
            let g = grad_out.data()[img * c + ch] * inv;
            let base = (img * c + ch) * plane;
            out.data_mut()[base..base + plane].fill(g);
        }
    }
    Ok(out)
}

/// Row-wise softmax of an N x K logit matrix, stabilized by max subtraction.
pub fn softmax<S: Scalar>(logits: &Tensor<S>) -> Result<Tensor<S>> {
    let (n, k) = logits.dims2()?;
    let mut out = Tensor::zeros(&[n, k]);
    for row in 0..n {
        let src = &logits.data()[row * k..(row + 1) * k];
        let dst = &mut out.data_mut()[row * k..(row + 1) * k];
        let mut m = src[0];
        for &v in src {
            m = m.max(v);
        }
        let mut sum = S::zero();
        for (d, &v) in dst.iter_mut().zip(src) {
            *d = (v - m).exp();
            sum += *d;
        }
        for d in dst.iter_mut() {
            *d = *d / sum;
        }
    }
    Ok(out)
}

/// Loss, posteriors and logit gradient of softmax cross-entropy.
#[derive(Debug)]
pub struct SoftmaxXent<S: Scalar> {
    pub loss: S,
    pub posteriors: Tensor<S>,
    pub grad_logits: Tensor<S>,
}

/// Mean cross-entropy between row-softmaxed logits and integer labels.
/// The logit gradient is (posterior - one_hot) / N.
pub fn softmax_xent<S: Scalar>(logits: &Tensor<S>, labels: &[usize]) -> Result<SoftmaxXent<S>> {
    let (n, k) = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{n} logit rows but {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Config(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    let posteriors = softmax(logits)?;
    let inv_n = S::from_f64(1.0 / n as f64);
    let mut loss = S::zero();
    let mut grad = posteriors.clone();
    for (row, &label) in labels.iter().enumerate() {
        let p = posteriors.data()[row * k + label];
        loss += -(p.ln());
        grad.data_mut()[row * k + label] = grad.data()[row * k + label] - S::one();
    }
    for g in grad.data_mut() {
        *g = *g * inv_n;
    }
    Ok(SoftmaxXent {
        loss: loss * inv_n,
        posteriors,
        grad_logits: grad,
    })
}
