//! Dataset loading (IDX for MNIST / Fashion-MNIST, CIFAR-10 binary batches),
//! train/test splitting and deterministic batching.

mod cifar;
mod idx;
mod synthetic;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use cifar::{encode_cifar10, load_cifar10, write_cifar10, CIFAR_RECORD_LEN};
pub use idx::{encode_idx, load_idx, write_idx, IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC};
pub use synthetic::{synthetic, write_standard};

use crate::{Error, Result, Rng, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetName {
    Mnist,
    FashionMnist,
    Cifar10,
}

const MNIST_CLASSES: [&str; 10] = ["0", "1", "2", "3", "4", "5", "6", "7", "8", "9"];
const FASHION_CLASSES: [&str; 10] =
    ["T-shirt/top", "Trouser", "Pullover", "Dress", "Coat", "Sandal", "Shirt", "Sneaker", "Bag", "Ankle boot"];
const CIFAR_CLASSES: [&str; 10] =
    ["airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"];

impl DatasetName {
    pub const ALL: [DatasetName; 3] = [DatasetName::Mnist, DatasetName::FashionMnist, DatasetName::Cifar10];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::FashionMnist => "fashion_mnist",
            DatasetName::Cifar10 => "cifar10",
        }
    }

    pub fn class_names(self) -> Vec<String> {
        let names: &[&str] = match self {
            DatasetName::Mnist => &MNIST_CLASSES,
            DatasetName::FashionMnist => &FASHION_CLASSES,
            DatasetName::Cifar10 => &CIFAR_CLASSES,
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    /// `[channels, height, width]` of one image.
    pub fn image_shape(self) -> [usize; 3] {
        match self {
            DatasetName::Mnist | DatasetName::FashionMnist => [1, 28, 28],
            DatasetName::Cifar10 => [3, 32, 32],
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DatasetName::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown dataset `{s}` (expected mnist, fashion_mnist or cifar10)")))
    }
}

/// Images scaled to `[0, 1]` with one class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub name: DatasetName,
    /// `N × C × H × W`.
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(name: DatasetName, images: Tensor<T>, labels: Vec<usize>) -> Result<Self> {
        let class_names = name.class_names();
        if images.rank() != 4 {
            return Err(Error::Dimension(format!("dataset images must be NCHW, got {:?}", images.shape())));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::Consistency(format!(
                "{} images but {} labels",
                images.shape()[0],
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_names.len()) {
            return Err(Error::Value(format!("label {bad} out of range for {}", name)));
        }
        if images.data().iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
            return Err(Error::Value("pixel values must lie in [0, 1]".into()));
        }
        Ok(Dataset { name, images, labels, class_names })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    /// `[C, H, W]`.
    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Ok(Dataset {
            name: self.name,
            images: self.images.select_outer(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        })
    }

    /// The first `n` samples (all of them when `n >= len`).
    pub fn take(&self, n: usize) -> Result<Self> {
        if n >= self.len() {
            return Ok(self.clone());
        }
        self.subset(&(0..n).collect::<Vec<_>>())
    }
}

/// Random disjoint partition of `0..n`; the first part holds `round(fraction·n)` indices.
pub fn split_indices(n: usize, fraction: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("split fraction must be in (0, 1), got {fraction}")));
    }
    let perm = rng.permutation(n);
    let k = (fraction * n as f64).round() as usize;
    Ok((perm[..k].to_vec(), perm[k..].to_vec()))
}

pub fn split<T: Scalar>(ds: &Dataset<T>, train_fraction: f64, rng: &mut Rng) -> Result<(Dataset<T>, Dataset<T>)> {
    let (a, b) = split_indices(ds.len(), train_fraction, rng)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::Config(format!(
            "split of {} samples at {train_fraction} leaves an empty side",
            ds.len()
        )));
    }
    Ok((ds.subset(&a)?, ds.subset(&b)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: u64,
    pub drop_last: bool,
}

impl BatchPlan {
    pub fn new(batch_size: usize, seed: u64, drop_last: bool) -> Result<Self> {
        if batch_size < 2 {
            return Err(Error::Config(format!("batch_size must be at least 2, got {batch_size}")));
        }
        Ok(BatchPlan { batch_size, seed, drop_last })
    }

    /// Sample order for `epoch` over `n` samples; a pure function of `(seed, epoch)`.
    pub fn order(&self, n: usize, epoch: u64) -> Vec<usize> {
        Rng::derive(self.seed, epoch).permutation(n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
    /// Dataset indices of the samples, in batch order.
    pub indices: Vec<usize>,
}

/// Iterator over one epoch's shuffled batches.
pub struct Batches<'a, T> {
    ds: &'a Dataset<T>,
    order: Vec<usize>,
    pos: usize,
    plan: BatchPlan,
}

impl<T: Scalar> Iterator for Batches<'_, T> {
    type Item = Batch<T>;

    fn next(&mut self) -> Option<Batch<T>> {
        let remaining = self.order.len() - self.pos;
        if remaining == 0 || (self.plan.drop_last && remaining < self.plan.batch_size) {
            return None;
        }
        let end = self.pos + remaining.min(self.plan.batch_size);
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        let images = self.ds.images.select_outer(&indices).expect("indices come from the dataset");
        let labels = indices.iter().map(|&i| self.ds.labels[i]).collect();
        Some(Batch { images, labels, indices })
    }
}

pub fn batches<T: Scalar>(ds: &Dataset<T>, plan: BatchPlan, epoch: u64) -> Batches<'_, T> {
    Batches { ds, order: plan.order(ds.len(), epoch), pos: 0, plan }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Standard distribution file names under `root/<dataset>/`. A `.gz` variant is
/// used when the plain file is absent.
pub fn standard_files(root: &Path, name: DatasetName, split: Split) -> Vec<PathBuf> {
    let dir = root.join(name.as_str());
    let names: Vec<String> = match (name, split) {
        (DatasetName::Cifar10, Split::Train) => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
        (DatasetName::Cifar10, Split::Test) => vec!["test_batch.bin".into()],
        (_, Split::Train) => vec!["train-images-idx3-ubyte".into(), "train-labels-idx1-ubyte".into()],
        (_, Split::Test) => vec!["t10k-images-idx3-ubyte".into(), "t10k-labels-idx1-ubyte".into()],
    };
    names
        .into_iter()
        .map(|n| {
            let plain = dir.join(&n);
            let gz = dir.join(format!("{n}.gz"));
            if !plain.exists() && gz.exists() {
                gz
            } else {
                plain
            }
        })
        .collect()
}

/// Loads the standard train or test split of `name` from `root`.
pub fn load_standard<T: Scalar>(root: &Path, name: DatasetName, split: Split) -> Result<Dataset<T>> {
    let files = standard_files(root, name, split);
    match name {
        DatasetName::Cifar10 => load_cifar10(&files),
        _ => load_idx(&files[0], &files[1], name),
    }
}

/// Reads a file, transparently inflating gzip (detected by its `1f 8b` magic).
pub(crate) fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    use std::io::Read;
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::format(path, format!("gzip decompression failed: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Byte to pixel value, as both file readers scale it.
pub(crate) fn dequantize<T: Scalar>(b: u8) -> T {
    T::of(f64::from(b)) * T::of(1.0 / 255.0)
}

pub(crate) fn quantize<T: Scalar>(v: T) -> u8 {
    (v.to_f64_lossy() * 255.0).round().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset<f64> {
        let images = Tensor::from_vec(&[n, 1, 1, 2], (0..2 * n).map(|i| i as f64 / (2 * n) as f64).collect()).unwrap();
        Dataset::new(DatasetName::Mnist, images, (0..n).map(|i| i % 10).collect()).unwrap()
    }

    #[test]
    fn split_halves_and_partitions() {
        let (a, b) = split_indices(10, 0.5, &mut Rng::new(3)).unwrap();
        assert_eq!((a.len(), b.len()), (5, 5));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        let again = split_indices(10, 0.5, &mut Rng::new(3)).unwrap();
        assert_eq!((a, b), again);
        assert!(split_indices(10, 1.0, &mut Rng::new(3)).is_err());
        let (tr, te) = split(&toy(10), 0.5, &mut Rng::new(1)).unwrap();
        assert_eq!((tr.len(), te.len()), (5, 5));
    }

    #[test]
    fn single_batch_is_a_permutation() {
        let ds = toy(7);
        let plan = BatchPlan::new(7, 1, false).unwrap();
        let all: Vec<Batch<f64>> = batches(&ds, plan, 0).collect();
        assert_eq!(all.len(), 1);
        let mut idx = all[0].indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn epochs_reshuffle_deterministically() {
        let ds = toy(20);
        let plan = BatchPlan::new(4, 9, false).unwrap();
        let order = |e| batches(&ds, plan, e).flat_map(|b| b.indices).collect::<Vec<_>>();
        assert_eq!(order(0), order(0));
        assert_ne!(order(0), order(1));
    }

    #[test]
    fn drop_last_tail() {
        let ds = toy(10);
        let plan = BatchPlan::new(3, 0, true).unwrap();
        let b: Vec<_> = batches(&ds, plan, 0).collect();
        assert_eq!(b.len(), 3);
        assert_eq!(b.iter().map(|b| b.labels.len()).sum::<usize>(), 9);
        let plan = BatchPlan::new(3, 0, false).unwrap();
        assert_eq!(batches(&ds, plan, 0).count(), 4);
        assert!(BatchPlan::new(1, 0, false).is_err());
    }

    #[test]
    fn epoch_visits_every_index_once() {
        let ds = toy(23);
        let plan = BatchPlan::new(5, 4, false).unwrap();
        for epoch in 0..3 {
            let mut seen: Vec<usize> = batches(&ds, plan, epoch).flat_map(|b| b.indices).collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..23).collect::<Vec<_>>());
        }
    }

    #[test]
    fn batch_contents_follow_indices() {
        let ds = toy(6);
        let plan = BatchPlan::new(4, 2, false).unwrap();
        for b in batches(&ds, plan, 0) {
            for (k, &i) in b.indices.iter().enumerate() {
                assert_eq!(b.labels[k], ds.labels[i]);
                assert_eq!(b.images.slice_outer(k, k + 1).unwrap().data(), ds.images.slice_outer(i, i + 1).unwrap().data());
            }
        }
    }

    #[test]
    fn dataset_invariants() {
        let images = Tensor::<f64>::zeros(&[2, 1, 2, 2]).unwrap();
        assert!(matches!(Dataset::new(DatasetName::Mnist, images.clone(), vec![0]), Err(Error::Consistency(_))));
        assert!(matches!(Dataset::new(DatasetName::Mnist, images.clone(), vec![0, 10]), Err(Error::Value(_))));
        let bright = images.map(|_| 1.5);
        assert!(Dataset::new(DatasetName::Mnist, bright, vec![0, 1]).is_err());
    }
}
