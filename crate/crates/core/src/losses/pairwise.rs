//! Contrastive (pairs) and triplet losses on raw embeddings.

use crate::tensor::sq_dist;
use crate::{Error, Result, Scalar, Tensor};

use super::{mean_scale, LossValue};

/// `Y` of the contrastive loss: 0 for a same-class pair, 1 otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Similarity {
    Same,
    Different,
}

impl Similarity {
    pub fn of_labels(a: usize, b: usize) -> Self {
        if a == b {
            Similarity::Same
        } else {
            Similarity::Different
        }
    }

    /// The numeric `Y`.
    pub fn y(self) -> u8 {
        match self {
            Similarity::Same => 0,
            Similarity::Different => 1,
        }
    }
}

/// Two embeddings and whether they share a class.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample<T> {
    pub z0: Vec<T>,
    pub z1: Vec<T>,
    pub y: Similarity,
}

/// Batch indices of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub y: Similarity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairTerm<T> {
    pub value: T,
    pub grad_z0: Vec<T>,
    pub grad_z1: Vec<T>,
}

/// `½(1−Y)‖z0−z1‖² + ½Y·max(0, m − ‖z0−z1‖)²` for one pair.
///
/// At `z0 = z1` with `Y = 1` the distance is not differentiable; the gradient
/// returned there is zero.
pub fn contrastive_loss<T: Scalar>(pair: &PairSample<T>, margin: f64) -> PairTerm<T> {
    let half = T::of(0.5);
    let diff: Vec<T> = pair.z0.iter().zip(&pair.z1).map(|(&a, &b)| a - b).collect();
    let d2: T = diff.iter().map(|&v| v * v).sum();
    let (value, coef) = match pair.y {
        Similarity::Same => (half * d2, T::one()),
        Similarity::Different => {
            let d = d2.sqrt();
            let gap = T::of(margin) - d;
            if gap > T::zero() && d > T::zero() {
                (half * gap * gap, -gap / d)
            } else if gap > T::zero() {
                (half * gap * gap, T::zero())
            } else {
                (T::zero(), T::zero())
            }
        }
    };
    let grad_z0: Vec<T> = diff.iter().map(|&v| coef * v).collect();
    let grad_z1 = grad_z0.iter().map(|&v| -v).collect();
    PairTerm { value, grad_z0, grad_z1 }
}

/// Mean contrastive loss over index pairs into the batch `z`; gradient w.r.t. `z`.
pub fn contrastive_batch_loss<T: Scalar>(z: &Tensor<T>, pairs: &[Pair], margin: f64) -> Result<LossValue<T>> {
    let (n, _) = z.dims2()?;
    check_indices(pairs.iter().flat_map(|p| [p.i, p.j]), n)?;
    let scale = mean_scale::<T>(pairs.len());
    let mut grad = Tensor::zeros_like(z);
    let mut total = T::zero();
    for p in pairs {
        let term = contrastive_loss(
            &PairSample { z0: z.row(p.i).to_vec(), z1: z.row(p.j).to_vec(), y: p.y },
            margin,
        );
        total += term.value;
        axpy(grad.row_mut(p.i), &term.grad_z0, scale);
        axpy(grad.row_mut(p.j), &term.grad_z1, scale);
    }
    Ok(LossValue { value: total * scale, grad })
}

/// Anchor, positive (same class) and negative (other class) embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletSample<T> {
    pub za: Vec<T>,
    pub zp: Vec<T>,
    pub zn: Vec<T>,
}

/// Batch indices of a triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletTerm<T> {
    pub value: T,
    pub grad_a: Vec<T>,
    pub grad_p: Vec<T>,
    pub grad_n: Vec<T>,
}

/// `max(‖za−zp‖² − ‖za−zn‖² + m, 0)` for one triplet; zero gradient when inactive.
pub fn triplet_loss<T: Scalar>(t: &TripletSample<T>, margin: f64) -> TripletTerm<T> {
    let raw = sq_dist(&t.za, &t.zp) - sq_dist(&t.za, &t.zn) + T::of(margin);
    let d = t.za.len();
    if raw > T::zero() {
        let two = T::of(2.0);
        TripletTerm {
            value: raw,
            grad_a: (0..d).map(|k| two * (t.zn[k] - t.zp[k])).collect(),
            grad_p: (0..d).map(|k| two * (t.zp[k] - t.za[k])).collect(),
            grad_n: (0..d).map(|k| two * (t.za[k] - t.zn[k])).collect(),
        }
    } else {
        TripletTerm { value: T::zero(), grad_a: vec![T::zero(); d], grad_p: vec![T::zero(); d], grad_n: vec![T::zero(); d] }
    }
}

/// Mean triplet loss over index triplets into `z`; gradient w.r.t. `z`.
pub fn triplet_batch_loss<T: Scalar>(z: &Tensor<T>, triplets: &[Triplet], margin: f64) -> Result<LossValue<T>> {
    let (n, _) = z.dims2()?;
    check_indices(triplets.iter().flat_map(|t| [t.anchor, t.positive, t.negative]), n)?;
    let scale = mean_scale::<T>(triplets.len());
    let mut grad = Tensor::zeros_like(z);
    let mut total = T::zero();
    for t in triplets {
        let term = triplet_loss(
            &TripletSample {
                za: z.row(t.anchor).to_vec(),
                zp: z.row(t.positive).to_vec(),
                zn: z.row(t.negative).to_vec(),
            },
            margin,
        );
        total += term.value;
        axpy(grad.row_mut(t.anchor), &term.grad_a, scale);
        axpy(grad.row_mut(t.positive), &term.grad_p, scale);
        axpy(grad.row_mut(t.negative), &term.grad_n, scale);
    }
    Ok(LossValue { value: total * scale, grad })
}

fn axpy<T: Scalar>(dst: &mut [T], src: &[T], a: T) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

fn check_indices(mut idx: impl Iterator<Item = usize>, n: usize) -> Result<()> {
    match idx.find(|&i| i >= n) {
        Some(bad) => Err(Error::Input(format!("sample index {bad} out of range for batch of {n}"))),
        None => Ok(()),
    }
}
