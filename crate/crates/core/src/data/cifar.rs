//! CIFAR-10 binary batches: records of one label byte followed by 3072 pixel
//! bytes (R, G, B planes of 32×32, row-major).

use std::path::{Path, PathBuf};

use crate::{Error, Result, Scalar, Tensor};

use super::{dequantize, quantize, read_maybe_gz, Dataset, DatasetName};

pub const CIFAR_RECORD_LEN: usize = 1 + 3 * 32 * 32;

pub fn load_cifar10<T: Scalar>(paths: &[PathBuf]) -> Result<Dataset<T>> {
    if paths.is_empty() {
        return Err(Error::Config("no CIFAR-10 batch files given".into()));
    }
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let bytes = read_maybe_gz(path)?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD_LEN != 0 {
            return Err(Error::format(
                path,
                format!("size {} is not a positive multiple of {CIFAR_RECORD_LEN}", bytes.len()),
            ));
        }
        for (r, rec) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
            if rec[0] > 9 {
                return Err(Error::Value(format!("{}: record {r} has label {}", path.display(), rec[0])));
            }
            labels.push(usize::from(rec[0]));
            pixels.extend(rec[1..].iter().map(|&b| dequantize::<T>(b)));
        }
    }
    let images = Tensor::from_vec(&[labels.len(), 3, 32, 32], pixels)?;
    Dataset::new(DatasetName::Cifar10, images, labels)
}

pub fn encode_cifar10<T: Scalar>(ds: &Dataset<T>) -> Result<Vec<u8>> {
    if ds.image_shape() != [3, 32, 32] {
        return Err(Error::Dimension(format!("CIFAR-10 records are 3x32x32, got {:?}", ds.image_shape())));
    }
    let mut out = Vec::with_capacity(ds.len() * CIFAR_RECORD_LEN);
    for (i, &y) in ds.labels.iter().enumerate() {
        out.push(y as u8);
        let img = &ds.images.data()[i * 3072..(i + 1) * 3072];
        out.extend(img.iter().map(|&v| quantize(v)));
    }
    Ok(out)
}

pub fn write_cifar10<T: Scalar>(ds: &Dataset<T>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_cifar10(ds)?).map_err(|e| Error::io(path, e))
}
