//! Accuracy and embedding-geometry statistics.

use crate::{Result, Scalar, Tensor};

/// Fraction of positions where `predicted` equals `labels`; 0 for empty input.
pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

/// Per-class mean embedding (`classes × d`) and member counts. Empty classes keep a zero row.
pub fn class_centroids<T: Scalar>(z: &Tensor<T>, labels: &[usize], classes: usize) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, d) = z.dims2()?;
    crate::losses::check_labels(labels, n, classes)?;
    let mut sums = vec![0.0f64; classes * d];
    let mut counts = vec![0usize; classes];
    for (i, &y) in labels.iter().enumerate() {
        counts[y] += 1;
        for (s, v) in sums[y * d..(y + 1) * d].iter_mut().zip(z.row(i)) {
            *s += v.to_f64_lossy();
        }
    }
    for (y, &c) in counts.iter().enumerate() {
        if c > 0 {
            sums[y * d..(y + 1) * d].iter_mut().for_each(|s| *s /= c as f64);
        }
    }
    Ok((Tensor::from_vec(&[classes, d], sums.into_iter().map(T::of).collect())?, counts))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingStats {
    /// Mean over present classes of the mean squared distance to the class centroid.
    pub intra_class_variance: f64,
    /// Mean Euclidean distance over all pairs of present class centroids.
    pub inter_class_distance: f64,
}

pub fn embedding_stats<T: Scalar>(z: &Tensor<T>, labels: &[usize], classes: usize) -> Result<EmbeddingStats> {
    let (centroids, counts) = class_centroids(z, labels, classes)?;
    let d = centroids.shape()[1];
    let mut spread = vec![0.0f64; classes];
    for (i, &y) in labels.iter().enumerate() {
        let c = centroids.row(y);
        spread[y] += z
            .row(i)
            .iter()
            .zip(c)
            .map(|(a, b)| {
                let t = a.to_f64_lossy() - b.to_f64_lossy();
                t * t
            })
            .sum::<f64>();
    }
    let present: Vec<usize> = (0..classes).filter(|&y| counts[y] > 0).collect();
    let intra = if present.is_empty() {
        0.0
    } else {
        present.iter().map(|&y| spread[y] / counts[y] as f64).sum::<f64>() / present.len() as f64
    };
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (a, &ya) in present.iter().enumerate() {
        for &yb in &present[a + 1..] {
            let dist: f64 = (0..d)
                .map(|k| {
                    let t = centroids.row(ya)[k].to_f64_lossy() - centroids.row(yb)[k].to_f64_lossy();
                    t * t
                })
                .sum::<f64>()
                .sqrt();
            total += dist;
            pairs += 1;
        }
    }
    let inter = if pairs == 0 { 0.0 } else { total / pairs as f64 };
    Ok(EmbeddingStats { intra_class_variance: intra, inter_class_distance: inter })
}
