use crate::{Error, Result, Scalar, Tensor};

use super::{check_labels, mean_scale, LossValue};

/// Per-class centers `c_y` (`classes × embed_dim`), moved toward batch class means.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCenters<T> {
    pub centers: Tensor<T>,
    /// Update rate in `(0, 1]`.
    pub alpha: f64,
}

impl<T: Scalar> ClassCenters<T> {
    /// All centers start at the origin.
    pub fn new(classes: usize, embed_dim: usize, alpha: f64) -> Result<Self> {
        Self::from_tensor(Tensor::zeros(&[classes, embed_dim])?, alpha)
    }

    pub fn from_tensor(centers: Tensor<T>, alpha: f64) -> Result<Self> {
        centers.dims2()?;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config(format!("center update rate must be in (0, 1], got {alpha}")));
        }
        Ok(ClassCenters { centers, alpha })
    }

    pub fn classes(&self) -> usize {
        self.centers.shape()[0]
    }

    /// `c_y ← c_y − α (c_y − mean of the batch members of class y)`; absent classes stay put.
    pub fn update(&mut self, z: &Tensor<T>, labels: &[usize]) -> Result<()> {
        let (n, d) = z.dims2()?;
        if d != self.centers.shape()[1] {
            return Err(Error::Dimension(format!(
                "embeddings {:?} do not match centers {:?}",
                z.shape(),
                self.centers.shape()
            )));
        }
        let m = self.classes();
        check_labels(labels, n, m)?;
        let mut sums = vec![T::zero(); m * d];
        let mut counts = vec![0usize; m];
        for (i, &y) in labels.iter().enumerate() {
            counts[y] += 1;
            for (s, &v) in sums[y * d..(y + 1) * d].iter_mut().zip(z.row(i)) {
                *s += v;
            }
        }
        let alpha = T::of(self.alpha);
        for y in 0..m {
            if counts[y] == 0 {
                continue;
            }
            let cnt = T::of(counts[y] as f64);
            for (c, &s) in self.centers.row_mut(y).iter_mut().zip(&sums[y * d..(y + 1) * d]) {
                *c = *c - alpha * (*c - s / cnt);
            }
        }
        Ok(())
    }
}

/// Mean of `(λ/2)‖z − c_y‖²` and its gradient w.r.t. `z`. Centers receive no gradient.
pub fn center_loss<T: Scalar>(
    z: &Tensor<T>,
    labels: &[usize],
    centers: &ClassCenters<T>,
    lambda: f64,
) -> Result<LossValue<T>> {
    let (n, d) = z.dims2()?;
    if d != centers.centers.shape()[1] {
        return Err(Error::Dimension(format!(
            "embeddings {:?} do not match centers {:?}",
            z.shape(),
            centers.centers.shape()
        )));
    }
    check_labels(labels, n, centers.classes())?;
    let lam = T::of(lambda);
    let half = T::of(0.5);
    let scale = mean_scale::<T>(n);
    let mut grad = Tensor::zeros(&[n, d])?;
    let mut total = T::zero();
    for (i, &y) in labels.iter().enumerate() {
        let c = centers.centers.row(y);
        let g = grad.row_mut(i);
        for k in 0..d {
            let diff = z.row(i)[k] - c[k];
            total += diff * diff;
            g[k] = lam * diff * scale;
        }
    }
    Ok(LossValue { value: half * lam * total * scale, grad })
}
