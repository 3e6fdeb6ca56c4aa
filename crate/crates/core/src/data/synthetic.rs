use std::path::Path;

use crate::{Error, Result, Rng, Scalar, Tensor};

use super::{write_cifar10, write_idx, Dataset, DatasetName, Split};

/// A separable stand-in for `name`: class `k` lights up the `k`-th cell of a
/// 2×5 grid over the image, on top of uniform background noise. Pixels are
/// multiples of 1/255 so they survive the 8-bit file formats unchanged.
pub fn synthetic<T: Scalar>(name: DatasetName, n: usize, seed: u64) -> Result<Dataset<T>> {
    let [c, h, w] = name.image_shape();
    let classes = name.class_names().len();
    let mut rng = Rng::new(seed);
    let mut data = Vec::with_capacity(n * c * h * w);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = (i + rng.below(classes)) % classes;
        labels.push(y);
        let (cell_r, cell_c) = (y / 5, y % 5);
        for _ in 0..c {
            for r in 0..h {
                for col in 0..w {
                    let lit = r * 2 / h == cell_r && col * 5 / w == cell_c;
                    let base = if lit { 180 } else { 0 };
                    let v = base + rng.below(60);
                    data.push(super::dequantize::<T>(v as u8));
                }
            }
        }
    }
    Dataset::new(name, Tensor::from_vec(&[n, c, h, w], data)?, labels)
}

/// Writes `train` and `test` under `root` in the standard file layout.
pub fn write_standard<T: Scalar>(root: &Path, train: &Dataset<T>, test: &Dataset<T>) -> Result<()> {
    if train.name != test.name {
        return Err(Error::Consistency(format!("train set is {} but test set is {}", train.name, test.name)));
    }
    let name = train.name;
    let dir = root.join(name.as_str());
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (ds, split) in [(train, Split::Train), (test, Split::Test)] {
        let files = super::standard_files(root, name, split);
        match name {
            DatasetName::Cifar10 if split == Split::Train => {
                let per = ds.len().div_ceil(files.len());
                for (b, path) in files.iter().enumerate() {
                    let idx: Vec<usize> = (b * per..((b + 1) * per).min(ds.len())).collect();
                    write_cifar10(&ds.subset(&idx)?, path)?;
                }
            }
            DatasetName::Cifar10 => write_cifar10(ds, &files[0])?,
            _ => write_idx(ds, &files[0], &files[1])?,
        }
    }
    Ok(())
}
