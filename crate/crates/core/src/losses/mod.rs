//! Loss functions that shape the embedded space, with analytic gradients.
//!
//! Classifier-based losses (softmax, normalized softmax, cosface, center) act
//! on the head's scores; contrastive, triplet and regression losses act on the
//! embeddings directly. Every loss is a batch mean.

mod center;
mod cosface;
mod mining;
mod pairwise;
mod regression;
mod softmax;

use std::fmt;
use std::str::FromStr;

pub use center::{center_loss, ClassCenters};
pub use cosface::{cosface_loss, cosine_backward, cosine_logits, project_to_hypersphere, CosineLogits};
pub use mining::{enumerate_triplets, mine_triplets, sample_pairs, MiningStrategy, PairDraw};
pub use pairwise::{
    contrastive_batch_loss, contrastive_loss, triplet_batch_loss, triplet_loss, Pair, PairSample, PairTerm,
    Similarity, Triplet, TripletSample, TripletTerm,
};
pub use regression::{classify_nearest, classify_nearest_batch, make_target_layout, regression_loss, LayoutKind, TargetLayout};
pub use softmax::softmax_loss;

use crate::{Error, Result, Scalar, Tensor};

/// Batch-mean loss value and its gradient with respect to the loss input.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue<T> {
    pub value: T,
    pub grad: Tensor<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Softmax,
    SoftmaxNormalized,
    Cosface,
    Center,
    Contrastive,
    Triplet,
    Regression,
}

impl LossKind {
    pub const ALL: [LossKind; 7] = [
        LossKind::Softmax,
        LossKind::SoftmaxNormalized,
        LossKind::Cosface,
        LossKind::Center,
        LossKind::Contrastive,
        LossKind::Triplet,
        LossKind::Regression,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Softmax => "softmax",
            LossKind::SoftmaxNormalized => "softmax_normalized",
            LossKind::Cosface => "cosface",
            LossKind::Center => "center",
            LossKind::Contrastive => "contrastive",
            LossKind::Triplet => "triplet",
            LossKind::Regression => "regression",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown loss kind `{s}`")))
    }
}

/// Which triplet miner a triplet run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiningKind {
    Random,
    SemiHard,
}

impl MiningKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MiningKind::Random => "random",
            MiningKind::SemiHard => "semi_hard",
        }
    }
}

impl FromStr for MiningKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(MiningKind::Random),
            "semi_hard" => Ok(MiningKind::SemiHard),
            _ => Err(Error::Config(format!("unknown mining strategy `{s}`"))),
        }
    }
}

/// A loss family together with exactly the hyperparameters it needs.
#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec {
    Softmax,
    /// Softmax with `‖W_j‖ = 1`, `b_j = 0`.
    SoftmaxNormalized,
    /// Additive cosine margin `margin` with scale `scale`. `project_features` only
    /// affects plotting: embeddings are drawn on the unit hypersphere.
    Cosface { margin: f64, scale: f64, project_features: bool },
    /// Softmax plus `(λ/2)‖z − c_y‖²`, centers moved at rate `alpha`.
    Center { lambda: f64, alpha: f64, normalized: bool },
    Contrastive { margin: f64, pairs_per_batch: usize },
    Triplet { margin: f64, mining: MiningKind },
    Regression { layout: LayoutKind, scale: f64 },
}

impl LossSpec {
    pub fn kind(&self) -> LossKind {
        match self {
            LossSpec::Softmax => LossKind::Softmax,
            LossSpec::SoftmaxNormalized => LossKind::SoftmaxNormalized,
            LossSpec::Cosface { .. } => LossKind::Cosface,
            LossSpec::Center { .. } => LossKind::Center,
            LossSpec::Contrastive { .. } => LossKind::Contrastive,
            LossSpec::Triplet { .. } => LossKind::Triplet,
            LossSpec::Regression { .. } => LossKind::Regression,
        }
    }

    /// `Some(normalized)` when the loss trains a classifier head.
    pub fn head(&self) -> Option<bool> {
        match self {
            LossSpec::Softmax => Some(false),
            LossSpec::SoftmaxNormalized | LossSpec::Cosface { .. } => Some(true),
            LossSpec::Center { normalized, .. } => Some(*normalized),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match *self {
            LossSpec::Cosface { margin, scale, .. } => {
                if !(0.0..2.0).contains(&margin) {
                    return bad(format!("cosface margin must be in [0, 2), got {margin}"));
                }
                if !(scale > 0.0 && scale.is_finite()) {
                    return bad(format!("cosface scale must be positive, got {scale}"));
                }
            }
            LossSpec::Center { lambda, alpha, .. } => {
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return bad(format!("center lambda must be >= 0, got {lambda}"));
                }
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return bad(format!("center alpha must be in (0, 1], got {alpha}"));
                }
            }
            LossSpec::Contrastive { margin, pairs_per_batch } => {
                if !(margin > 0.0 && margin.is_finite()) {
                    return bad(format!("contrastive margin must be positive, got {margin}"));
                }
                if pairs_per_batch == 0 {
                    return bad("contrastive pairs_per_batch must be positive".into());
                }
            }
            LossSpec::Triplet { margin, .. } => {
                if !(margin >= 0.0 && margin.is_finite()) {
                    return bad(format!("triplet margin must be >= 0, got {margin}"));
                }
            }
            LossSpec::Regression { scale, .. } => {
                if !(scale > 0.0 && scale.is_finite()) {
                    return bad(format!("regression layout scale must be positive, got {scale}"));
                }
            }
            LossSpec::Softmax | LossSpec::SoftmaxNormalized => {}
        }
        Ok(())
    }
}

pub(crate) fn check_labels(labels: &[usize], n: usize, classes: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Input(format!("{} labels for {n} samples", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Input(format!("label {bad} out of range for {classes} classes")));
    }
    Ok(())
}

pub(crate) fn mean_scale<T: Scalar>(n: usize) -> T {
    if n == 0 {
        T::zero()
    } else {
        T::one() / T::of(n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(k.as_str().parse::<LossKind>().unwrap(), k);
        }
    }

    #[test]
    fn cosface_margin_of_two_rejected() {
        let spec = LossSpec::Cosface { margin: 2.0, scale: 10.0, project_features: false };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        let spec = LossSpec::Cosface { margin: 0.2, scale: 0.0, project_features: false };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn head_requirements() {
        assert_eq!(LossSpec::Softmax.head(), Some(false));
        assert_eq!(LossSpec::SoftmaxNormalized.head(), Some(true));
        assert_eq!(LossSpec::Contrastive { margin: 1.0, pairs_per_batch: 8 }.head(), None);
    }
}
