//! Regression onto fixed class targets, and nearest-point classification.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::tensor::sq_dist;
use crate::{Error, Result, Scalar, Tensor};

use super::{check_labels, mean_scale, LossValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayoutKind {
    Raster,
    Circle,
}

impl LayoutKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayoutKind::Raster => "raster",
            LayoutKind::Circle => "circle",
        }
    }
}

impl fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raster" => Ok(LayoutKind::Raster),
            "circle" => Ok(LayoutKind::Circle),
            _ => Err(Error::Config(format!("unknown target layout `{s}`"))),
        }
    }
}

/// One fixed target point `t_j` per class.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetLayout<T> {
    pub kind: LayoutKind,
    /// `classes × embed_dim`.
    pub targets: Tensor<T>,
    /// Circle radius or grid spacing.
    pub scale: f64,
}

/// Circle: `t_j = scale·(cos 2πj/M, sin 2πj/M[, 0])`.
/// Raster: row-major grid (square in 2-D, cubic in 3-D) with `scale` spacing, centered on the origin.
pub fn make_target_layout<T: Scalar>(
    kind: LayoutKind,
    classes: usize,
    embed_dim: usize,
    scale: f64,
) -> Result<TargetLayout<T>> {
    if classes < 2 {
        return Err(Error::Config(format!("a target layout needs at least 2 classes, got {classes}")));
    }
    if !(2..=3).contains(&embed_dim) {
        return Err(Error::Config(format!("target layouts support 2 or 3 dimensions, got {embed_dim}")));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Config(format!("layout scale must be positive, got {scale}")));
    }
    let mut data = Vec::with_capacity(classes * embed_dim);
    match kind {
        LayoutKind::Circle => {
            for j in 0..classes {
                let a = 2.0 * PI * j as f64 / classes as f64;
                data.extend([scale * a.cos(), scale * a.sin()]);
                if embed_dim == 3 {
                    data.push(0.0);
                }
            }
        }
        LayoutKind::Raster if embed_dim == 2 => {
            let cols = (classes as f64).sqrt().ceil() as usize;
            let rows = classes.div_ceil(cols);
            for j in 0..classes {
                let (r, c) = (j / cols, j % cols);
                data.push((c as f64 - (cols - 1) as f64 / 2.0) * scale);
                data.push(((rows - 1) as f64 / 2.0 - r as f64) * scale);
            }
        }
        LayoutKind::Raster => {
            let mut side = (classes as f64).cbrt().round() as usize;
            while side.pow(3) < classes {
                side += 1;
            }
            let mid = (side - 1) as f64 / 2.0;
            for j in 0..classes {
                let (x, y, z) = (j % side, (j / side) % side, j / (side * side));
                data.extend([(x as f64 - mid) * scale, (mid - y as f64) * scale, (z as f64 - mid) * scale]);
            }
        }
    }
    let targets = Tensor::from_vec(&[classes, embed_dim], data.into_iter().map(T::of).collect())?;
    Ok(TargetLayout { kind, targets, scale })
}

/// Mean `‖z − t_y‖²`; gradient `2(z − t_y)/N`.
pub fn regression_loss<T: Scalar>(z: &Tensor<T>, labels: &[usize], layout: &TargetLayout<T>) -> Result<LossValue<T>> {
    let (n, d) = z.dims2()?;
    let (m, td) = layout.targets.dims2()?;
    if d != td {
        return Err(Error::Dimension(format!(
            "embeddings {:?} do not match targets {:?}",
            z.shape(),
            layout.targets.shape()
        )));
    }
    check_labels(labels, n, m)?;
    let scale = mean_scale::<T>(n);
    let two = T::of(2.0);
    let mut grad = Tensor::zeros(&[n, d])?;
    let mut total = T::zero();
    for (i, &y) in labels.iter().enumerate() {
        let t = layout.targets.row(y);
        for k in 0..d {
            let diff = z.row(i)[k] - t[k];
            total += diff * diff;
            grad.row_mut(i)[k] = two * diff * scale;
        }
    }
    Ok(LossValue { value: total * scale, grad })
}

/// Index of the reference point closest to `z` (Euclidean); ties go to the lower index.
pub fn classify_nearest<T: Scalar>(z: &[T], references: &Tensor<T>) -> usize {
    let (m, _) = references.dims2().expect("references are rank 2");
    let mut best = 0;
    let mut best_d = T::infinity();
    for j in 0..m {
        let d = sq_dist(z, references.row(j));
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

pub fn classify_nearest_batch<T: Scalar>(z: &Tensor<T>, references: &Tensor<T>) -> Result<Vec<usize>> {
    let (n, d) = z.dims2()?;
    let (_, rd) = references.dims2()?;
    if d != rd {
        return Err(Error::Dimension(format!(
            "queries {:?} do not match references {:?}",
            z.shape(),
            references.shape()
        )));
    }
    Ok((0..n).map(|i| classify_nearest(z.row(i), references)).collect())
}
