#![allow(dead_code)]

use std::path::{Path, PathBuf};

use embedlab::data::{synthetic, DatasetName};
use embedlab::losses::LossKind;
use embedlab::train::TrainConfig;
use embedlab::Dataset64;

pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn shipped(kind: LossKind) -> TrainConfig {
    TrainConfig::from_file(&configs_dir().join(format!("{kind}.cfg"))).unwrap()
}

pub fn toy(n: usize, seed: u64) -> Dataset64 {
    synthetic(DatasetName::Mnist, n, seed).unwrap()
}

/// A shipped config shrunk for quick runs.
pub fn quick(kind: LossKind, epochs: usize) -> TrainConfig {
    let mut cfg = shipped(kind);
    cfg.epochs = epochs;
    cfg.batch_size = 32;
    cfg.network.conv_channels = vec![4, 8, 8];
    cfg.network.fc_width = 32;
    cfg
}
