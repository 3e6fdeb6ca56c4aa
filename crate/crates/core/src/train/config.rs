//! Training configuration and its plain-text file format.
//!
//! ```text
//! # comment
//! loss.kind = cosface
//! loss.m = 0.2
//! network.embed_dim = 2
//! optimizer.kind = adam
//! train.epochs = 10
//! data.name = mnist
//! output.dir = runs/cosface
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::DatasetName;
use crate::kv::KvFile;
use crate::losses::{LayoutKind, LossKind, LossSpec, MiningKind};
use crate::network::NetworkConfig;
use crate::ops::Activation;
use crate::{Error, Result};

/// Environment variable naming the default dataset root.
pub const DATA_DIR_ENV: &str = "EMBEDLAB_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    SgdMomentum,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::SgdMomentum => "sgd_momentum",
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd_momentum" => Ok(OptimizerKind::SgdMomentum),
            _ => Err(Error::Config(format!("unknown optimizer `{s}` (expected adam or sgd_momentum)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { kind: OptimizerKind::Adam, lr: 1e-3, momentum: 0.9, beta1: 0.9, beta2: 0.999, clip_norm: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub name: DatasetName,
    /// Holds `mnist/`, `fashion_mnist/` and `cifar10/`.
    pub root: PathBuf,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    /// When set, train and test are both drawn from the training files with this train fraction.
    pub split: Option<f64>,
}

impl DataConfig {
    pub fn new(name: DatasetName) -> Self {
        DataConfig { name, root: default_data_root(), train_limit: None, test_limit: None, split: None }
    }
}

pub fn default_data_root() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from("data"), PathBuf::from)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossSpec,
    pub network: NetworkConfig,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub data: DataConfig,
    pub output_dir: PathBuf,
}

pub const DEFAULT_EPOCHS: usize = 10;
pub const DEFAULT_BATCH_SIZE: usize = 64;

impl TrainConfig {
    /// Reference network, Adam, default epochs and batch size.
    pub fn new(loss: LossSpec, dataset: DatasetName, embed_dim: usize) -> Self {
        TrainConfig {
            loss,
            network: NetworkConfig::reference(dataset.image_shape(), embed_dim),
            optimizer: OptimizerConfig::default(),
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 0,
            data: DataConfig::new(dataset),
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// `origin` only labels diagnostics.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let kv = KvFile::parse(text, origin)?;
        let name: DatasetName = kv.require("data.name")?;
        let data = DataConfig {
            name,
            root: kv.parse_opt::<PathBuf>("data.root")?.unwrap_or_else(default_data_root),
            train_limit: kv.parse_opt("data.train_limit")?,
            test_limit: kv.parse_opt("data.test_limit")?,
            split: kv.parse_opt("data.split")?,
        };
        let loss = read_loss(&kv, DEFAULT_BATCH_SIZE)?;
        let network = read_network(&kv, name.image_shape())?;
        let d = OptimizerConfig::default();
        let optimizer = OptimizerConfig {
            kind: kv.parse_or("optimizer.kind", d.kind)?,
            lr: kv.parse_or("optimizer.lr", d.lr)?,
            momentum: kv.parse_or("optimizer.momentum", d.momentum)?,
            beta1: kv.parse_or("optimizer.beta1", d.beta1)?,
            beta2: kv.parse_or("optimizer.beta2", d.beta2)?,
            clip_norm: kv.parse_or("optimizer.clip_norm", d.clip_norm)?,
        };
        let cfg = TrainConfig {
            loss,
            network,
            optimizer,
            epochs: kv.parse_or("train.epochs", DEFAULT_EPOCHS)?,
            batch_size: kv.parse_or("train.batch_size", DEFAULT_BATCH_SIZE)?,
            seed: kv.parse_or("train.seed", 0)?,
            data,
            output_dir: kv.parse_or("output.dir", PathBuf::from("out"))?,
        };
        kv.finish()?;
        cfg.validate().map_err(|e| match e {
            Error::Config(detail) => Error::Config(format!("{}: {detail}", origin.display())),
            other => other,
        })?;
        Ok(cfg)
    }

    /// Switches dataset, keeping everything else; the network input follows.
    pub fn set_dataset(&mut self, name: DatasetName) {
        self.data.name = name;
        self.network.input_shape = name.image_shape();
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return bad(format!("optimizer.lr must be positive, got {}", o.lr));
        }
        if !(0.0..1.0).contains(&o.momentum) {
            return bad(format!("optimizer.momentum must be in [0, 1), got {}", o.momentum));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return bad(format!("optimizer betas must be in [0, 1), got {} and {}", o.beta1, o.beta2));
        }
        if !(o.clip_norm > 0.0) {
            return bad(format!("optimizer.clip_norm must be positive, got {}", o.clip_norm));
        }
        if self.epochs == 0 {
            return bad("train.epochs must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad(format!("train.batch_size must be at least 2, got {}", self.batch_size));
        }
        if let Some(f) = self.data.split {
            if !(f > 0.0 && f < 1.0) {
                return bad(format!("data.split must be in (0, 1), got {f}"));
            }
        }
        if self.data.train_limit == Some(0) || self.data.test_limit == Some(0) {
            return bad("data limits must be positive".into());
        }
        if self.network.input_shape != self.data.name.image_shape() {
            return bad(format!(
                "network input {:?} does not match {} images {:?}",
                self.network.input_shape,
                self.data.name,
                self.data.name.image_shape()
            ));
        }
        self.loss.validate()?;
        self.network.validate()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        write_loss(&self.loss, &mut s);
        write_network(&self.network, &mut s);
        let o = &self.optimizer;
        let _ = writeln!(s, "optimizer.kind = {}", o.kind.as_str());
        let _ = writeln!(s, "optimizer.lr = {}", o.lr);
        let _ = writeln!(s, "optimizer.momentum = {}", o.momentum);
        let _ = writeln!(s, "optimizer.beta1 = {}", o.beta1);
        let _ = writeln!(s, "optimizer.beta2 = {}", o.beta2);
        let _ = writeln!(s, "optimizer.clip_norm = {}", o.clip_norm);
        let _ = writeln!(s, "train.epochs = {}", self.epochs);
        let _ = writeln!(s, "train.batch_size = {}", self.batch_size);
        let _ = writeln!(s, "train.seed = {}", self.seed);
        let _ = writeln!(s, "data.name = {}", self.data.name);
        let _ = writeln!(s, "data.root = {}", self.data.root.display());
        if let Some(n) = self.data.train_limit {
            let _ = writeln!(s, "data.train_limit = {n}");
        }
        if let Some(n) = self.data.test_limit {
            let _ = writeln!(s, "data.test_limit = {n}");
        }
        if let Some(f) = self.data.split {
            let _ = writeln!(s, "data.split = {f}");
        }
        let _ = writeln!(s, "output.dir = {}", self.output_dir.display());
        s
    }
}

/// Keys each loss accepts besides `loss.kind`.
fn loss_keys(kind: LossKind) -> &'static [&'static str] {
    match kind {
        LossKind::Softmax | LossKind::SoftmaxNormalized => &[],
        LossKind::Cosface => &["loss.m", "loss.s", "loss.project_features"],
        LossKind::Center => &["loss.lambda", "loss.alpha", "loss.normalized"],
        LossKind::Contrastive => &["loss.m", "loss.pairs_per_batch"],
        LossKind::Triplet => &["loss.m", "loss.mining"],
        LossKind::Regression => &["loss.layout", "loss.scale"],
    }
}

const ALL_LOSS_KEYS: [&str; 10] = [
    "loss.m",
    "loss.s",
    "loss.project_features",
    "loss.lambda",
    "loss.alpha",
    "loss.normalized",
    "loss.pairs_per_batch",
    "loss.mining",
    "loss.layout",
    "loss.scale",
];

pub(crate) fn read_loss(kv: &KvFile, default_pairs: usize) -> Result<LossSpec> {
    let kind: LossKind = kv.require("loss.kind")?;
    let allowed = loss_keys(kind);
    if let Some(k) = ALL_LOSS_KEYS.iter().find(|k| kv.contains(k) && !allowed.contains(k)) {
        return Err(kv.error(k, format!("does not apply to loss.kind = {kind}")));
    }
    let spec = match kind {
        LossKind::Softmax => LossSpec::Softmax,
        LossKind::SoftmaxNormalized => LossSpec::SoftmaxNormalized,
        LossKind::Cosface => LossSpec::Cosface {
            margin: kv.parse_or("loss.m", 0.2)?,
            scale: kv.parse_or("loss.s", 10.0)?,
            project_features: kv.parse_or("loss.project_features", false)?,
        },
        LossKind::Center => LossSpec::Center {
            lambda: kv.parse_or("loss.lambda", 0.3)?,
            alpha: kv.parse_or("loss.alpha", 0.5)?,
            normalized: kv.parse_or("loss.normalized", false)?,
        },
        LossKind::Contrastive => LossSpec::Contrastive {
            margin: kv.parse_or("loss.m", 1.0)?,
            pairs_per_batch: kv.parse_or("loss.pairs_per_batch", default_pairs)?,
        },
        LossKind::Triplet => LossSpec::Triplet {
            margin: kv.parse_or("loss.m", 1.0)?,
            mining: kv.parse_or("loss.mining", MiningKind::SemiHard)?,
        },
        LossKind::Regression => LossSpec::Regression {
            layout: kv.parse_or("loss.layout", LayoutKind::Circle)?,
            scale: kv.parse_or("loss.scale", 2.0)?,
        },
    };
    spec.validate().map_err(|e| match e {
        Error::Config(detail) => kv.error("loss.kind", detail),
        other => other,
    })?;
    Ok(spec)
}

pub(crate) fn write_loss(spec: &LossSpec, s: &mut String) {
    let _ = writeln!(s, "loss.kind = {}", spec.kind());
    match spec {
        LossSpec::Softmax | LossSpec::SoftmaxNormalized => {}
        LossSpec::Cosface { margin, scale, project_features } => {
            let _ = writeln!(s, "loss.m = {margin}\nloss.s = {scale}\nloss.project_features = {project_features}");
        }
        LossSpec::Center { lambda, alpha, normalized } => {
            let _ = writeln!(s, "loss.lambda = {lambda}\nloss.alpha = {alpha}\nloss.normalized = {normalized}");
        }
        LossSpec::Contrastive { margin, pairs_per_batch } => {
            let _ = writeln!(s, "loss.m = {margin}\nloss.pairs_per_batch = {pairs_per_batch}");
        }
        LossSpec::Triplet { margin, mining } => {
            let _ = writeln!(s, "loss.m = {margin}\nloss.mining = {}", mining.as_str());
        }
        LossSpec::Regression { layout, scale } => {
            let _ = writeln!(s, "loss.layout = {}\nloss.scale = {scale}", layout.as_str());
        }
    }
}

pub(crate) fn read_network(kv: &KvFile, input_shape: [usize; 3]) -> Result<NetworkConfig> {
    let r = NetworkConfig::reference(input_shape, 2);
    Ok(NetworkConfig {
        input_shape,
        conv_channels: kv.list_opt("network.conv_channels")?.unwrap_or(r.conv_channels),
        fc_width: kv.parse_or("network.fc_width", r.fc_width)?,
        embed_dim: kv.parse_or("network.embed_dim", r.embed_dim)?,
        penult_activation: kv.parse_or::<Activation>("network.penult_activation", r.penult_activation)?,
        hidden_activation: kv.parse_or::<Activation>("network.hidden_activation", r.hidden_activation)?,
    })
}

pub(crate) fn write_network(n: &NetworkConfig, s: &mut String) {
    let chans: Vec<String> = n.conv_channels.iter().map(usize::to_string).collect();
    let _ = writeln!(s, "network.conv_channels = {}", chans.join(","));
    let _ = writeln!(s, "network.fc_width = {}", n.fc_width);
    let _ = writeln!(s, "network.embed_dim = {}", n.embed_dim);
    let _ = writeln!(s, "network.penult_activation = {}", n.penult_activation);
    let _ = writeln!(s, "network.hidden_activation = {}", n.hidden_activation);
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "data.name = mnist\nloss.kind = softmax\n";

    #[test]
    fn defaults_fill_in() {
        let cfg = TrainConfig::parse(MINIMAL, Path::new("m.cfg")).unwrap();
        assert_eq!(cfg.optimizer, OptimizerConfig::default());
        assert_eq!(cfg.network, NetworkConfig::reference([1, 28, 28], 2));
        assert_eq!(cfg.batch_size, DEFAULT_BATCH_SIZE);
    }

    #[test]
    fn text_round_trip() {
        for spec in [
            LossSpec::Softmax,
            LossSpec::SoftmaxNormalized,
            LossSpec::Cosface { margin: 0.05, scale: 12.5, project_features: true },
            LossSpec::Center { lambda: 0.3, alpha: 0.25, normalized: true },
            LossSpec::Contrastive { margin: 1.5, pairs_per_batch: 33 },
            LossSpec::Triplet { margin: 0.7, mining: MiningKind::Random },
            LossSpec::Regression { layout: LayoutKind::Raster, scale: 3.0 },
        ] {
            let mut cfg = TrainConfig::new(spec, DatasetName::Cifar10, 3);
            cfg.seed = 17;
            cfg.data.split = Some(0.8);
            cfg.data.train_limit = Some(100);
            cfg.optimizer.kind = OptimizerKind::SgdMomentum;
            cfg.optimizer.lr = 0.1 + 0.2;
            let back = TrainConfig::parse(&cfg.to_text(), Path::new("x")).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn diagnostics_name_file_and_key() {
        let err = TrainConfig::parse("data.name = mnist\nloss.kind = softmax\nloss.s = 3\n", Path::new("a.cfg"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("a.cfg:3") && err.contains("loss.s"), "{err}");
        let err = TrainConfig::parse("data.name = mnist\nloss.kind = softmax\ntrain.epoch = 3\n", Path::new("a.cfg"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("train.epoch") && err.contains("unknown"), "{err}");
        let err = TrainConfig::parse("data.name = svhn\nloss.kind = softmax\n", Path::new("a.cfg")).unwrap_err();
        assert!(err.to_string().contains("data.name"), "{err}");
        let err = TrainConfig::parse("data.name = mnist\nloss.kind = cosface\nloss.m = 2\n", Path::new("a.cfg"))
            .unwrap_err();
        assert!(err.to_string().contains("margin"), "{err}");
    }

    #[test]
    fn invalid_values() {
        for extra in ["optimizer.lr = 0", "train.epochs = 0", "train.batch_size = 1", "data.split = 1", "network.embed_dim = 4"] {
            let text = format!("{MINIMAL}{extra}\n");
            assert!(TrainConfig::parse(&text, Path::new("c")).is_err(), "{extra}");
        }
    }
}
