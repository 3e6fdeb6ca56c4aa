//! Cosine logits and the additive-margin (cosface) loss.

use crate::network::ClassifierHead;
use crate::tensor::{dot, normalize_in_place};
use crate::{Error, Result, Scalar, Tensor};

use super::{check_labels, LossValue};

/// `cos θ_ij` between each embedding and each class vector, with what backward needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineLogits<T> {
    pub cosines: Tensor<T>,
    z_hat: Tensor<T>,
    z_norm: Vec<T>,
    /// Unit class vectors as rows, `classes × embed_dim`.
    w_hat: Tensor<T>,
    w_norm: Vec<T>,
}

/// Cosines between `z` rows and the head's class vectors. Both sides are
/// normalized inside, so the result lies in `[-1, 1]`.
pub fn cosine_logits<T: Scalar>(head: &ClassifierHead<T>, z: &Tensor<T>) -> Result<CosineLogits<T>> {
    if !head.normalized {
        return Err(Error::Config("cosine logits need a normalized classifier head".into()));
    }
    let (n, d) = z.dims2()?;
    if d != head.embed_dim() {
        return Err(Error::Dimension(format!(
            "embeddings {:?} do not match head input dimension {}",
            z.shape(),
            head.embed_dim()
        )));
    }
    let m = head.classes();
    let mut z_hat = z.clone();
    let mut z_norm = Vec::with_capacity(n);
    for i in 0..n {
        let nrm = normalize_in_place(z_hat.row_mut(i))
            .map_err(|_| Error::Degenerate(format!("embedding {i} has near-zero norm")))?;
        z_norm.push(nrm);
    }
    let mut w_hat = head.class_vectors();
    let mut w_norm = Vec::with_capacity(m);
    for j in 0..m {
        let nrm = normalize_in_place(w_hat.row_mut(j))
            .map_err(|_| Error::Degenerate(format!("class vector {j} has near-zero norm")))?;
        w_norm.push(nrm);
    }
    let mut cos = vec![T::zero(); n * m];
    for i in 0..n {
        for j in 0..m {
            let c = dot(z_hat.row(i), w_hat.row(j));
            cos[i * m + j] = c.max(-T::one()).min(T::one());
        }
    }
    Ok(CosineLogits { cosines: Tensor::from_vec(&[n, m], cos)?, z_hat, z_norm, w_hat, w_norm })
}

/// Pulls `∂L/∂cos` back through both normalizations. Adds the class-vector
/// gradient into `head.weight.grad` and returns `∂L/∂z`.
pub fn cosine_backward<T: Scalar>(
    cache: &CosineLogits<T>,
    head: &mut ClassifierHead<T>,
    grad_cos: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, m) = cache.cosines.dims2()?;
    if grad_cos.shape() != [n, m] {
        return Err(Error::Dimension(format!(
            "cosine gradient {:?} does not match [{n}, {m}]",
            grad_cos.shape()
        )));
    }
    let d = cache.z_hat.shape()[1];
    let mut gz = Tensor::zeros(&[n, d])?;
    let mut gw_hat = vec![T::zero(); m * d];
    for i in 0..n {
        let g = grad_cos.row(i);
        let zh = cache.z_hat.row(i);
        let mut gzh = vec![T::zero(); d];
        for j in 0..m {
            let wj = cache.w_hat.row(j);
            for k in 0..d {
                gzh[k] += g[j] * wj[k];
                gw_hat[j * d + k] += g[j] * zh[k];
            }
        }
        project_tangent(&mut gzh, zh, cache.z_norm[i]);
        gz.row_mut(i).copy_from_slice(&gzh);
    }
    let wgrad = head.weight.grad.data_mut();
    for j in 0..m {
        let gj = &mut gw_hat[j * d..(j + 1) * d];
        project_tangent(gj, cache.w_hat.row(j), cache.w_norm[j]);
        for (k, &v) in gj.iter().enumerate() {
            wgrad[k * m + j] += v;
        }
    }
    Ok(gz)
}

/// `g ← (I − u uᵀ) g / ‖x‖`: Jacobian of `x ↦ x/‖x‖` at `x = ‖x‖·u`.
fn project_tangent<T: Scalar>(g: &mut [T], u: &[T], norm: T) {
    let along = dot(g, u);
    for (gk, &uk) in g.iter_mut().zip(u) {
        *gk = (*gk - along * uk) / norm;
    }
}

/// Mean of `−log( e^{s(cos θ_y − m)} / (e^{s(cos θ_y − m)} + Σ_{j≠y} e^{s cos θ_j}) )`;
/// gradient w.r.t. the cosines.
pub fn cosface_loss<T: Scalar>(
    cosines: &Tensor<T>,
    labels: &[usize],
    margin: f64,
    scale: f64,
) -> Result<LossValue<T>> {
    if !(0.0..2.0).contains(&margin) {
        return Err(Error::Config(format!("cosface margin must be in [0, 2), got {margin}")));
    }
    if !(scale > 0.0) {
        return Err(Error::Config(format!("cosface scale must be positive, got {scale}")));
    }
    let (n, m) = cosines.dims2()?;
    check_labels(labels, n, m)?;
    let (s, mg) = (T::of(scale), T::of(margin));
    let mut logits = cosines.map(|c| s * c);
    for (i, &y) in labels.iter().enumerate() {
        logits.row_mut(i)[y] -= s * mg;
    }
    let mut out = super::softmax_loss(&logits, labels)?;
    out.grad.data_mut().iter_mut().for_each(|g| *g *= s);
    Ok(out)
}

/// Rows scaled to unit norm.
pub fn project_to_hypersphere<T: Scalar>(z: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, _) = z.dims2()?;
    let mut out = z.clone();
    for i in 0..n {
        normalize_in_place(out.row_mut(i))
            .map_err(|_| Error::Degenerate(format!("row {i} has near-zero norm")))?;
    }
    Ok(out)
}
