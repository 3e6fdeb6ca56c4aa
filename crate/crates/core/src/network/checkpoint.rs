//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "EMBL"                      4-byte magic
//! u32                         format version
//! u32 + bytes                 UTF-8 description text (key = value lines)
//! per tensor, until end of file: u32 rank, rank × u32 extents, product(extents) × f64
//! ```

use std::fs;
use std::path::Path;

use crate::{Error, Result, Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EMBL";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointContents {
    pub text: String,
    pub tensors: Vec<Tensor<f64>>,
}

pub fn encode_checkpoint<T: Scalar>(text: &str, tensors: &[&Tensor<T>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &e in t.shape() {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
    }
    out
}

pub fn write_checkpoint<T: Scalar>(path: &Path, text: &str, tensors: &[&Tensor<T>]) -> Result<()> {
    fs::write(path, encode_checkpoint(text, tensors)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(self.path, format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<CheckpointContents> {
    let mut r = Reader { bytes, pos: 0, path };
    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::format(path, format!("bad magic {magic:02x?}, expected \"EMBL\"")));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let len = r.u32("text length")? as usize;
    let text = std::str::from_utf8(r.take(len, "text")?)
        .map_err(|e| Error::format(path, format!("description is not UTF-8: {e}")))?
        .to_owned();
    let mut tensors = Vec::new();
    while r.pos < bytes.len() {
        let i = tensors.len();
        let rank = r.u32("tensor rank")? as usize;
        if !(1..=4).contains(&rank) {
            return Err(Error::format(path, format!("tensor {i} has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("tensor extent")? as usize);
        }
        let n = shape.iter().try_fold(1usize, |a, &e| a.checked_mul(e)).unwrap_or(usize::MAX);
        let raw = r.take(n.saturating_mul(8), "tensor data")?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        tensors.push(
            Tensor::from_vec(&shape, data).map_err(|e| Error::format(path, format!("tensor {i}: {e}")))?,
        );
    }
    Ok(CheckpointContents { text, tensors })
}

pub fn read_checkpoint(path: &Path) -> Result<CheckpointContents> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(path, &bytes)
}
