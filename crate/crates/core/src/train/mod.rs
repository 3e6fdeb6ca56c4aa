//! Deterministic training loop, optimizers, evaluation and run reports.

mod config;
mod metrics;
mod model;
mod optim;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::{Duration, Instant};

pub use config::{
    default_data_root, DataConfig, OptimizerConfig, OptimizerKind, TrainConfig, DATA_DIR_ENV, DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
};
pub use metrics::{accuracy, class_centroids, embedding_stats, EmbeddingStats};
pub use model::{Model, EMBED_CHUNK};
pub use optim::{adam_step, check_finite, clip_global_norm, sgd_step, Optimizer, ADAM_EPSILON};

use crate::data::{batches, load_standard, split, BatchPlan, Dataset, Split};
use crate::losses::{
    center_loss, contrastive_batch_loss, cosface_loss, cosine_backward, cosine_logits, mine_triplets, regression_loss,
    sample_pairs, softmax_loss, triplet_batch_loss, LossSpec, MiningKind, MiningStrategy,
};
use crate::network::Param;
use crate::{Error, Result, Rng, Scalar, Tensor};

const INIT_STREAM: u64 = u64::MAX;
const SPLIT_STREAM: u64 = u64::MAX - 1;
const STEP_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

/// Metrics recorded after one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean batch loss over the epoch's optimizer steps.
    pub train_loss: f64,
    pub steps: usize,
    pub test_accuracy: f64,
    pub intra_class_variance: f64,
    pub inter_class_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    /// Not serialized, so saved reports stay reproducible.
    pub wall_clock: Duration,
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    /// One line per epoch:
    /// `epoch=<n> train_loss=<f> steps=<n> test_accuracy=<f> intra_class_variance=<f> inter_class_distance=<f>`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            let _ = writeln!(
                s,
                "epoch={} train_loss={} steps={} test_accuracy={} intra_class_variance={} inter_class_distance={}",
                r.epoch, r.train_loss, r.steps, r.test_accuracy, r.intra_class_variance, r.inter_class_distance
            );
        }
        s
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub stats: EmbeddingStats,
}

/// Accuracy by the model's inference rule plus test-embedding statistics.
pub fn evaluate<T: Scalar>(model: &Model<T>, ds: &Dataset<T>) -> Result<Evaluation> {
    let z = model.embed(&ds.images)?;
    evaluate_embeddings(model, &z, &ds.labels)
}

pub fn evaluate_embeddings<T: Scalar>(model: &Model<T>, z: &Tensor<T>, labels: &[usize]) -> Result<Evaluation> {
    let predicted = model.predict(z)?;
    Ok(Evaluation { accuracy: accuracy(&predicted, labels), stats: embedding_stats(z, labels, model.classes())? })
}

/// Train and test sets as the data section describes them.
pub fn load_data<T: Scalar>(cfg: &TrainConfig) -> Result<(Dataset<T>, Dataset<T>)> {
    let d = &cfg.data;
    let (train, test) = match d.split {
        Some(f) => {
            let all = load_standard(&d.root, d.name, Split::Train)?;
            split(&all, f, &mut Rng::derive(cfg.seed, SPLIT_STREAM))?
        }
        None => (load_standard(&d.root, d.name, Split::Train)?, load_standard(&d.root, d.name, Split::Test)?),
    };
    let train = match d.train_limit {
        Some(n) => train.take(n)?,
        None => train,
    };
    let test = match d.test_limit {
        Some(n) => test.take(n)?,
        None => test,
    };
    Ok((train, test))
}

/// Single-writer owner of a model and its optimizer state.
pub struct Trainer<T> {
    cfg: TrainConfig,
    model: Model<T>,
    optimizer: Optimizer<T>,
    steps: u64,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::derive(cfg.seed, INIT_STREAM);
        let model = Model::new(&cfg.network, cfg.loss.clone(), cfg.data.name, &mut rng)?;
        let optimizer = Optimizer::new(cfg.optimizer.clone());
        Ok(Trainer { cfg, model, optimizer, steps: 0 })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &Model<T> {
        &self.model
    }

    pub fn into_model(self) -> Model<T> {
        self.model
    }

    /// Optimizer steps taken so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One optimizer step on a batch. `None` when the batch offers nothing to
    /// learn from (no pairs or triplets), in which case nothing changes.
    pub fn step(&mut self, images: &Tensor<T>, labels: &[usize]) -> Result<Option<f64>> {
        let mut rng = Rng::derive(self.cfg.seed.wrapping_add(STEP_SEED_OFFSET), self.steps);
        let model = &mut self.model;
        model.extractor.zero_grad();
        if let Some(h) = &mut model.head {
            h.zero_grad();
        }
        let z = model.extractor.forward_features(images)?;
        let (value, grad_z) = match &model.loss {
            LossSpec::Softmax | LossSpec::SoftmaxNormalized => {
                let head = model.head.as_mut().expect("softmax models carry a head");
                let l = softmax_loss(&head.forward_logits(&z)?, labels)?;
                (l.value, head.backward_logits(&z, &l.grad)?)
            }
            LossSpec::Cosface { margin, scale, .. } => {
                let head = model.head.as_mut().expect("cosface models carry a head");
                let cos = cosine_logits(head, &z)?;
                let l = cosface_loss(&cos.cosines, labels, *margin, *scale)?;
                (l.value, cosine_backward(&cos, head, &l.grad)?)
            }
            LossSpec::Center { lambda, .. } => {
                let head = model.head.as_mut().expect("center models carry a head");
                let centers = model.centers.as_ref().expect("center models carry centers");
                let s = softmax_loss(&head.forward_logits(&z)?, labels)?;
                let c = center_loss(&z, labels, centers, *lambda)?;
                let mut g = head.backward_logits(&z, &s.grad)?;
                g.data_mut().iter_mut().zip(c.grad.data()).for_each(|(a, &b)| *a += b);
                (s.value + c.value, g)
            }
            LossSpec::Contrastive { margin, pairs_per_batch } => {
                if labels.len() < 2 {
                    return Ok(None);
                }
                let draw = sample_pairs(labels, &mut rng, *pairs_per_batch)?;
                let l = contrastive_batch_loss(&z, &draw.pairs, *margin)?;
                (l.value, l.grad)
            }
            LossSpec::Triplet { margin, mining } => {
                let strategy = match mining {
                    MiningKind::Random => MiningStrategy::Random { count: None },
                    MiningKind::SemiHard => MiningStrategy::SemiHard { margin: *margin },
                };
                let triplets = mine_triplets(&z, labels, strategy, &mut rng)?;
                if triplets.is_empty() {
                    return Ok(None);
                }
                let l = triplet_batch_loss(&z, &triplets, *margin)?;
                (l.value, l.grad)
            }
            LossSpec::Regression { .. } => {
                let layout = model.layout.as_ref().expect("regression models carry a layout");
                let l = regression_loss(&z, labels, layout)?;
                (l.value, l.grad)
            }
        };
        let value = value.to_f64_lossy();
        if !value.is_finite() {
            return Err(Error::NonFinite { param: "loss".into(), detail: format!("batch loss is {value}") });
        }
        model.extractor.backward(&grad_z)?;

        let mut params: Vec<&mut Param<T>> = model.extractor.params_mut().iter_mut().collect();
        if let Some(h) = &mut model.head {
            params.extend(h.params_mut());
        }
        self.optimizer.step(&mut params)?;
        if let Some(h) = &mut model.head {
            if h.normalized {
                h.renormalize()?;
            }
        }
        if let Some(c) = &mut model.centers {
            c.update(&z, labels)?;
        }
        self.steps += 1;
        Ok(Some(value))
    }

    /// One pass over `train` in the epoch's shuffled order; returns mean loss and step count.
    pub fn run_epoch(&mut self, train: &Dataset<T>, epoch: u64) -> Result<(f64, usize)> {
        let plan = BatchPlan::new(self.cfg.batch_size, self.cfg.seed, false)?;
        let mut total = 0.0;
        let mut count = 0usize;
        for batch in batches(train, plan, epoch) {
            if let Some(v) = self.step(&batch.images, &batch.labels)? {
                total += v;
                count += 1;
            }
        }
        Ok((if count == 0 { 0.0 } else { total / count as f64 }, count))
    }

    /// Recomputes class centroids of the training embeddings (used by pair-based losses).
    pub fn refresh_centroids(&mut self, train: &Dataset<T>) -> Result<()> {
        if matches!(self.model.loss, LossSpec::Contrastive { .. } | LossSpec::Triplet { .. }) {
            let z = self.model.embed(&train.images)?;
            self.model.centroids = Some(class_centroids(&z, &train.labels, self.model.classes())?.0);
        }
        Ok(())
    }
}

/// Trains on in-memory data; no files are written.
pub fn train_on<T: Scalar>(cfg: &TrainConfig, train: &Dataset<T>, test: &Dataset<T>) -> Result<(TrainReport, Model<T>)> {
    train_on_with(cfg, train, test, &mut |_| {})
}

/// [`train_on`], calling `on_epoch` after each epoch's evaluation.
pub fn train_on_with<T: Scalar>(
    cfg: &TrainConfig,
    train: &Dataset<T>,
    test: &Dataset<T>,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<(TrainReport, Model<T>)> {
    let started = Instant::now();
    for ds in [train, test] {
        if ds.image_shape() != cfg.network.input_shape {
            return Err(Error::Config(format!(
                "{} images are {:?}, network expects {:?}",
                ds.name,
                ds.image_shape(),
                cfg.network.input_shape
            )));
        }
    }
    let mut trainer = Trainer::new(cfg.clone())?;
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (train_loss, steps) = trainer.run_epoch(train, epoch as u64)?;
        trainer.refresh_centroids(train)?;
        let ev = evaluate(trainer.model(), test)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss,
            steps,
            test_accuracy: ev.accuracy,
            intra_class_variance: ev.stats.intra_class_variance,
            inter_class_distance: ev.stats.inter_class_distance,
        };
        on_epoch(&record);
        records.push(record);
    }
    let report = TrainReport { records, wall_clock: started.elapsed(), checkpoint: None };
    Ok((report, trainer.into_model()))
}

pub const CHECKPOINT_FILE: &str = "model.embl";
pub const REPORT_FILE: &str = "report.txt";
pub const CONFIG_FILE: &str = "config.cfg";

/// Loads the configured data, trains, and writes the checkpoint, the report and
/// the resolved config into the output directory.
pub fn train<T: Scalar>(cfg: &TrainConfig) -> Result<(TrainReport, Model<T>)> {
    train_with(cfg, &mut |_| {})
}

/// [`train`] with a per-epoch callback.
pub fn train_with<T: Scalar>(cfg: &TrainConfig, on_epoch: &mut dyn FnMut(&EpochRecord)) -> Result<(TrainReport, Model<T>)> {
    cfg.validate()?;
    let (tr, te) = load_data::<T>(cfg)?;
    let (mut report, model) = train_on_with(cfg, &tr, &te, on_epoch)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ckpt = dir.join(CHECKPOINT_FILE);
    model.save(&ckpt)?;
    let rp = dir.join(REPORT_FILE);
    std::fs::write(&rp, report.to_text()).map_err(|e| Error::io(&rp, e))?;
    let cp = dir.join(CONFIG_FILE);
    std::fs::write(&cp, cfg.to_text()).map_err(|e| Error::io(&cp, e))?;
    report.checkpoint = Some(ckpt);
    Ok((report, model))
}
