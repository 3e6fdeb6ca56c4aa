//! Valid (unpadded), stride-1 2-D cross-correlation via im2col + GEMM.

use crate::scalar::{gemm, Trans};
use crate::{Error, Result, Scalar, Tensor};

/// Shapes of one convolution: `channels×height×width` input, `out_channels×channels×kh×kw` kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        self.height - self.kh + 1
    }

    pub fn out_w(&self) -> usize {
        self.width - self.kw + 1
    }

    pub fn patch(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn positions(&self) -> usize {
        self.out_h() * self.out_w()
    }

    pub fn input_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn output_len(&self) -> usize {
        self.out_channels * self.positions()
    }
}

fn im2col<T: Scalar>(g: &ConvGeometry, x: &[T], cols: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let p = oh * ow;
    for c in 0..g.channels {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let src = (c * g.height + oy + ky) * g.width + kx;
                    dst[oy * ow..(oy + 1) * ow].copy_from_slice(&x[src..src + ow]);
                }
            }
        }
    }
}

fn col2im_add<T: Scalar>(g: &ConvGeometry, cols: &[T], dx: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let p = oh * ow;
    for c in 0..g.channels {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let base = (c * g.height + oy + ky) * g.width + kx;
                    for (d, &s) in dx[base..base + ow].iter_mut().zip(&src[oy * ow..(oy + 1) * ow]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// `out = kernels ⋆ x` for a single sample. `cols` is scratch of length `patch * positions`.
pub(crate) fn conv_forward_into<T: Scalar>(
    g: &ConvGeometry,
    x: &[T],
    kernels: &[T],
    out: &mut [T],
    cols: &mut Vec<T>,
) {
    cols.resize(g.patch() * g.positions(), T::zero());
    im2col(g, x, cols);
    gemm(
        g.out_channels,
        g.patch(),
        g.positions(),
        T::one(),
        kernels,
        Trans::No,
        cols,
        Trans::No,
        T::zero(),
        out,
    );
}

/// Accumulates the kernel gradient into `grad_k` and, when given, the input gradient into `grad_x`.
pub(crate) fn conv_backward_into<T: Scalar>(
    g: &ConvGeometry,
    x: &[T],
    kernels: &[T],
    grad_out: &[T],
    grad_k: &mut [T],
    grad_x: Option<&mut [T]>,
    cols: &mut Vec<T>,
) {
    let (o, patch, p) = (g.out_channels, g.patch(), g.positions());
    cols.resize(patch * p, T::zero());
    im2col(g, x, cols);
    gemm(o, p, patch, T::one(), grad_out, Trans::No, cols, Trans::Yes, T::one(), grad_k);
    if let Some(dx) = grad_x {
        gemm(patch, o, p, T::one(), kernels, Trans::Yes, grad_out, Trans::No, T::zero(), cols);
        col2im_add(g, cols, dx);
    }
}

fn geometry<T: Scalar>(input: &Tensor<T>, kernels: &Tensor<T>) -> Result<ConvGeometry> {
    let [c, h, w] = input.shape()[..] else {
        return Err(Error::Dimension(format!("conv2d input must be CHW, got {:?}", input.shape())));
    };
    let [o, kc, kh, kw] = kernels.shape()[..] else {
        return Err(Error::Dimension(format!(
            "conv2d kernels must be OCHW, got {:?}",
            kernels.shape()
        )));
    };
    if kc != c {
        return Err(Error::Dimension(format!(
            "conv2d channel mismatch: input {:?}, kernels {:?}",
            input.shape(),
            kernels.shape()
        )));
    }
    if kh > h || kw > w {
        return Err(Error::Dimension(format!(
            "conv2d kernel {kh}x{kw} larger than input {h}x{w}"
        )));
    }
    Ok(ConvGeometry { channels: c, height: h, width: w, out_channels: o, kh, kw })
}

/// Valid cross-correlation (no kernel flip) of a `C×H×W` input with `O×C×kh×kw` kernels.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, kernels: &Tensor<T>) -> Result<Tensor<T>> {
    let g = geometry(input, kernels)?;
    let mut out = vec![T::zero(); g.output_len()];
    let mut cols = Vec::new();
    conv_forward_into(&g, input.data(), kernels.data(), &mut out, &mut cols);
    Tensor::from_vec(&[g.out_channels, g.out_h(), g.out_w()], out)
}

/// Gradients of `conv2d` with respect to the input and the kernels.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let g = geometry(input, kernels)?;
    if grad_out.shape() != [g.out_channels, g.out_h(), g.out_w()] {
        return Err(Error::Dimension(format!(
            "conv2d upstream gradient has shape {:?}, expected {:?}",
            grad_out.shape(),
            [g.out_channels, g.out_h(), g.out_w()]
        )));
    }
    let mut gx = Tensor::zeros_like(input);
    let mut gk = Tensor::zeros_like(kernels);
    let mut cols = Vec::new();
    conv_backward_into(
        &g,
        input.data(),
        kernels.data(),
        grad_out.data(),
        gk.data_mut(),
        Some(gx.data_mut()),
        &mut cols,
    );
    Ok((gx, gk))
}
