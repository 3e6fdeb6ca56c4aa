//! 2×2 non-overlapping max pooling.

use crate::{Error, Result, Scalar, Tensor};

/// Winning position per output cell, as a row-major index into its 2×2 window (0..=3).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolMask {
    pub input_shape: [usize; 3],
    pub winners: Vec<u8>,
}

/// Pools `x` (`c×h×w`) into `out` (`c×h/2×w/2`, floor). Ties go to the first index.
pub(crate) fn pool_forward_into<T: Scalar>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    out: &mut [T],
    winners: &mut [u8],
) {
    let (oh, ow) = (h / 2, w / 2);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = (ch * h + 2 * oy) * w + 2 * ox;
                let cand = [x[base], x[base + 1], x[base + w], x[base + w + 1]];
                let mut best = 0;
                for (i, &v) in cand.iter().enumerate().skip(1) {
                    if v > cand[best] {
                        best = i;
                    }
                }
                let o = (ch * oh + oy) * ow + ox;
                out[o] = cand[best];
                winners[o] = best as u8;
            }
        }
    }
}

/// Routes `grad_out` back to the winning positions, adding into `grad_x`.
pub(crate) fn pool_backward_into<T: Scalar>(
    grad_out: &[T],
    winners: &[u8],
    c: usize,
    h: usize,
    w: usize,
    grad_x: &mut [T],
) {
    let (oh, ow) = (h / 2, w / 2);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let o = (ch * oh + oy) * ow + ox;
                let k = winners[o] as usize;
                let idx = (ch * h + 2 * oy + k / 2) * w + 2 * ox + k % 2;
                grad_x[idx] += grad_out[o];
            }
        }
    }
}

fn chw<T: Scalar>(input: &Tensor<T>) -> Result<[usize; 3]> {
    match input.shape()[..] {
        [c, h, w] => Ok([c, h, w]),
        _ => Err(Error::Dimension(format!("max pooling expects CHW, got {:?}", input.shape()))),
    }
}

fn pool<T: Scalar>(input: &Tensor<T>, [c, h, w]: [usize; 3]) -> Result<(Tensor<T>, PoolMask)> {
    if h < 2 || w < 2 {
        return Err(Error::Dimension(format!("max pooling needs extents >= 2, got {h}x{w}")));
    }
    let n = c * (h / 2) * (w / 2);
    let mut out = vec![T::zero(); n];
    let mut winners = vec![0u8; n];
    pool_forward_into(input.data(), c, h, w, &mut out, &mut winners);
    Ok((
        Tensor::from_vec(&[c, h / 2, w / 2], out)?,
        PoolMask { input_shape: [c, h, w], winners },
    ))
}

/// 2×2 max pooling of a `C×H×W` tensor with even `H` and `W`.
pub fn maxpool2<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolMask)> {
    let s = chw(input)?;
    if s[1] % 2 != 0 || s[2] % 2 != 0 {
        return Err(Error::Dimension(format!(
            "max pooling needs even extents, got {}x{}",
            s[1], s[2]
        )));
    }
    pool(input, s)
}

/// Like [`maxpool2`] but odd extents drop their last row/column (floor semantics).
pub fn maxpool2_floor<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolMask)> {
    let s = chw(input)?;
    pool(input, s)
}

pub fn maxpool2_backward<T: Scalar>(grad_out: &Tensor<T>, mask: &PoolMask) -> Result<Tensor<T>> {
    let [c, h, w] = mask.input_shape;
    if grad_out.shape() != [c, h / 2, w / 2] {
        return Err(Error::Dimension(format!(
            "pool upstream gradient {:?} does not match mask for input {:?}",
            grad_out.shape(),
            mask.input_shape
        )));
    }
    let mut gx = Tensor::zeros(&[c, h, w])?;
    pool_backward_into(grad_out.data(), &mask.winners, c, h, w, gx.data_mut());
    Ok(gx)
}
