//! Big-endian IDX files (the MNIST / Fashion-MNIST distribution format).

use std::path::Path;

use crate::{Error, Result, Scalar, Tensor};

use super::{dequantize, quantize, read_maybe_gz, Dataset, DatasetName};

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated { path: path.into(), expected: at + 4, found: bytes.len() })
}

fn check_len(bytes: &[u8], expected: usize, path: &Path) -> Result<()> {
    if bytes.len() < expected {
        return Err(Error::Truncated { path: path.into(), expected, found: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(Error::format(path, format!("{} trailing bytes after {expected}", bytes.len() - expected)));
    }
    Ok(())
}

fn expect_magic(bytes: &[u8], want: u32, path: &Path) -> Result<()> {
    let got = be_u32(bytes, 0, path)?;
    if got != want {
        return Err(Error::format(path, format!("magic 0x{got:08x}, expected 0x{want:08x}")));
    }
    Ok(())
}

/// Parses an image file and a label file; pixels are scaled by 1/255.
pub fn load_idx<T: Scalar>(images_path: &Path, labels_path: &Path, name: DatasetName) -> Result<Dataset<T>> {
    let img = read_maybe_gz(images_path)?;
    expect_magic(&img, IDX_IMAGE_MAGIC, images_path)?;
    let n = be_u32(&img, 4, images_path)? as usize;
    let rows = be_u32(&img, 8, images_path)? as usize;
    let cols = be_u32(&img, 12, images_path)? as usize;
    if n == 0 || rows == 0 || cols == 0 {
        return Err(Error::format(images_path, format!("empty image set {n}x{rows}x{cols}")));
    }
    check_len(&img, 16 + n * rows * cols, images_path)?;

    let lab = read_maybe_gz(labels_path)?;
    expect_magic(&lab, IDX_LABEL_MAGIC, labels_path)?;
    let nl = be_u32(&lab, 4, labels_path)? as usize;
    if nl != n {
        return Err(Error::Consistency(format!(
            "{} holds {n} images but {} holds {nl} labels",
            images_path.display(),
            labels_path.display()
        )));
    }
    check_len(&lab, 8 + n, labels_path)?;

    let pixels = img[16..].iter().map(|&b| dequantize(b)).collect();
    let images = Tensor::from_vec(&[n, 1, rows, cols], pixels)?;
    let labels: Vec<usize> = lab[8..].iter().map(|&b| usize::from(b)).collect();
    if let Some(&bad) = labels.iter().find(|&&y| y >= 10) {
        return Err(Error::Value(format!("{}: label {bad} out of range", labels_path.display())));
    }
    Dataset::new(name, images, labels)
}

/// IDX bytes `(images, labels)` for a single-channel dataset; pixels are rounded to `u8`.
pub fn encode_idx<T: Scalar>(ds: &Dataset<T>) -> Result<(Vec<u8>, Vec<u8>)> {
    let [c, h, w] = ds.image_shape();
    if c != 1 {
        return Err(Error::Dimension(format!("IDX images must have one channel, got {c}")));
    }
    let n = ds.len();
    let mut img = Vec::with_capacity(16 + n * h * w);
    for v in [IDX_IMAGE_MAGIC, n as u32, h as u32, w as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend(ds.images.data().iter().map(|&v| quantize(v)));
    let mut lab = Vec::with_capacity(8 + n);
    for v in [IDX_LABEL_MAGIC, n as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend(ds.labels.iter().map(|&y| y as u8));
    Ok((img, lab))
}

pub fn write_idx<T: Scalar>(ds: &Dataset<T>, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (img, lab) = encode_idx(ds)?;
    std::fs::write(images_path, img).map_err(|e| Error::io(images_path, e))?;
    std::fs::write(labels_path, lab).map_err(|e| Error::io(labels_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        let mut img = Vec::new();
        for v in [IDX_IMAGE_MAGIC, 2, 2, 2] {
            img.extend_from_slice(&v.to_be_bytes());
        }
        img.extend_from_slice(&[0, 255, 51, 102, 255, 0, 0, 0]);
        let mut lab = Vec::new();
        for v in [IDX_LABEL_MAGIC, 2] {
            lab.extend_from_slice(&v.to_be_bytes());
        }
        lab.extend_from_slice(&[7, 3]);
        let (ip, lp) = (dir.join("img"), dir.join("lab"));
        std::fs::write(&ip, img).unwrap();
        std::fs::write(&lp, lab).unwrap();
        (ip, lp)
    }

    #[test]
    fn hand_built_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());
        let ds: Dataset<f64> = load_idx(&ip, &lp, DatasetName::Mnist).unwrap();
        assert_eq!(ds.images.shape(), &[2, 1, 2, 2]);
        assert_eq!(ds.images.data(), &[0.0, 1.0, 0.2, 0.4, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(ds.labels, vec![7, 3]);
    }

    #[test]
    fn gzip_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());
        let gz = dir.path().join("img.gz");
        let mut enc = flate2::write::GzEncoder::new(std::fs::File::create(&gz).unwrap(), flate2::Compression::default());
        enc.write_all(&std::fs::read(&ip).unwrap()).unwrap();
        enc.finish().unwrap();
        let plain: Dataset<f64> = load_idx(&ip, &lp, DatasetName::Mnist).unwrap();
        let packed: Dataset<f64> = load_idx(&gz, &lp, DatasetName::Mnist).unwrap();
        assert_eq!(plain, packed);
    }

    #[test]
    fn label_file_in_image_slot() {
        let dir = tempfile::tempdir().unwrap();
        let (_, lp) = fixture(dir.path());
        let err = load_idx::<f64>(&lp, &lp, DatasetName::Mnist).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        assert!(err.to_string().contains("0x00000801"), "{err}");
    }

    #[test]
    fn truncation_and_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());
        let bytes = std::fs::read(&ip).unwrap();
        let cut = dir.path().join("cut");
        std::fs::write(&cut, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(load_idx::<f64>(&cut, &lp, DatasetName::Mnist), Err(Error::Truncated { .. })));
        std::fs::write(&cut, &bytes[..6]).unwrap();
        assert!(matches!(load_idx::<f64>(&cut, &lp, DatasetName::Mnist), Err(Error::Truncated { .. })));

        let mut lab = Vec::new();
        for v in [IDX_LABEL_MAGIC, 3] {
            lab.extend_from_slice(&v.to_be_bytes());
        }
        lab.extend_from_slice(&[1, 2, 3]);
        let lp3 = dir.path().join("lab3");
        std::fs::write(&lp3, lab).unwrap();
        assert!(matches!(load_idx::<f64>(&ip, &lp3, DatasetName::Mnist), Err(Error::Consistency(_))));
        assert!(matches!(
            load_idx::<f64>(&dir.path().join("missing"), &lp, DatasetName::Mnist),
            Err(Error::Io { .. })
        ));
    }
}
