//! Pair sampling and triplet mining within a batch.

use crate::tensor::sq_dist;
use crate::{Error, Result, Rng, Scalar, Tensor};

use super::pairwise::{Pair, Similarity, Triplet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MiningStrategy {
    /// Uniform draws (with replacement) from all valid triplets; `None` returns
    /// every valid triplet in shuffled order.
    Random { count: Option<usize> },
    /// For each anchor-positive pair, a negative with `d_ap² < d_an² < d_ap² + margin`,
    /// or the hardest negative when that window is empty.
    SemiHard { margin: f64 },
}

/// Every `(anchor, positive, negative)` with `anchor ≠ positive` sharing a label
/// and `negative` carrying a different one, in lexicographic order.
pub fn enumerate_triplets(labels: &[usize]) -> Vec<Triplet> {
    let mut out = Vec::new();
    for (a, &la) in labels.iter().enumerate() {
        for (p, &lp) in labels.iter().enumerate() {
            if p == a || lp != la {
                continue;
            }
            for (n, &ln) in labels.iter().enumerate() {
                if ln != la {
                    out.push(Triplet { anchor: a, positive: p, negative: n });
                }
            }
        }
    }
    out
}

/// Triplets for one batch. Empty when the batch holds no valid triplet.
pub fn mine_triplets<T: Scalar>(
    z: &Tensor<T>,
    labels: &[usize],
    strategy: MiningStrategy,
    rng: &mut Rng,
) -> Result<Vec<Triplet>> {
    let (n, _) = z.dims2()?;
    if labels.len() != n {
        return Err(Error::Input(format!("{} labels for {n} embeddings", labels.len())));
    }
    match strategy {
        MiningStrategy::Random { count } => {
            let mut all = enumerate_triplets(labels);
            if all.is_empty() {
                return Ok(all);
            }
            Ok(match count {
                None => {
                    rng.shuffle(&mut all);
                    all
                }
                Some(k) => (0..k).map(|_| all[rng.below(all.len())]).collect(),
            })
        }
        MiningStrategy::SemiHard { margin } => {
            let m = T::of(margin);
            let mut out = Vec::new();
            let mut window = Vec::new();
            for a in 0..n {
                for p in 0..n {
                    if p == a || labels[p] != labels[a] {
                        continue;
                    }
                    let dap = sq_dist(z.row(a), z.row(p));
                    window.clear();
                    let mut hardest: Option<(usize, T)> = None;
                    for neg in 0..n {
                        if labels[neg] == labels[a] {
                            continue;
                        }
                        let dan = sq_dist(z.row(a), z.row(neg));
                        if dan > dap && dan < dap + m {
                            window.push(neg);
                        }
                        if hardest.is_none_or(|(_, best)| dan < best) {
                            hardest = Some((neg, dan));
                        }
                    }
                    let negative = if window.is_empty() {
                        match hardest {
                            Some((neg, _)) => neg,
                            None => continue,
                        }
                    } else {
                        window[rng.below(window.len())]
                    };
                    out.push(Triplet { anchor: a, positive: p, negative });
                }
            }
            Ok(out)
        }
    }
}

/// Sampled pairs and whether the batch held a single class (so every pair is `Same`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairDraw {
    pub pairs: Vec<Pair>,
    pub single_class: bool,
}

/// `count` index pairs; each draw is same- or different-class with equal odds
/// when the batch allows both.
pub fn sample_pairs(labels: &[usize], rng: &mut Rng, count: usize) -> Result<PairDraw> {
    let n = labels.len();
    if n < 2 {
        return Err(Error::Input(format!("pair sampling needs at least 2 samples, got {n}")));
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }
    let pairable: Vec<usize> = (0..n).filter(|&i| members[labels[i]].len() >= 2).collect();
    let single_class = members.iter().filter(|m| !m.is_empty()).count() == 1;
    let can_same = !pairable.is_empty();
    let can_diff = !single_class;
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let same = match (can_same, can_diff) {
            (true, true) => rng.coin(),
            (true, false) => true,
            _ => false,
        };
        if same {
            let i = pairable[rng.below(pairable.len())];
            let cls = &members[labels[i]];
            let mut j = cls[rng.below(cls.len() - 1)];
            if j == i {
                j = *cls.last().expect("class has >= 2 members");
            }
            pairs.push(Pair { i, j, y: Similarity::Same });
        } else {
            let i = rng.below(n);
            let others = n - members[labels[i]].len();
            let mut k = rng.below(others);
            let j = (0..n)
                .filter(|&j| labels[j] != labels[i])
                .find(|_| {
                    let hit = k == 0;
                    k = k.saturating_sub(1);
                    hit
                })
                .expect("a different-class sample exists");
            pairs.push(Pair { i, j, y: Similarity::Different });
        }
    }
    Ok(PairDraw { pairs, single_class })
}
