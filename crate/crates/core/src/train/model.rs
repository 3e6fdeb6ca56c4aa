//! A trained model: extractor, loss-specific state and the matching inference rule.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::DatasetName;
use crate::kv::KvFile;
use crate::losses::{classify_nearest_batch, make_target_layout, ClassCenters, LossSpec, TargetLayout};
use crate::network::{read_checkpoint, write_checkpoint, ClassifierHead, FeatureExtractor, NetworkConfig};
use crate::tensor::{dot, norm};
use crate::{Error, Result, Rng, Scalar, Tensor};

use super::config::{read_loss, read_network, write_loss, write_network};

/// Samples per forward pass when embedding a whole dataset.
pub const EMBED_CHUNK: usize = 256;

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub dataset: DatasetName,
    pub class_names: Vec<String>,
    pub loss: LossSpec,
    pub extractor: FeatureExtractor<T>,
    /// Softmax-family losses.
    pub head: Option<ClassifierHead<T>>,
    /// Center loss.
    pub centers: Option<ClassCenters<T>>,
    /// Regression loss.
    pub layout: Option<TargetLayout<T>>,
    /// Contrastive and triplet losses: class means of the training embeddings.
    pub centroids: Option<Tensor<T>>,
}

impl<T: Scalar> Model<T> {
    pub fn new(network: &NetworkConfig, loss: LossSpec, dataset: DatasetName, rng: &mut Rng) -> Result<Self> {
        loss.validate()?;
        let class_names = dataset.class_names();
        let m = class_names.len();
        let d = network.embed_dim;
        let extractor = FeatureExtractor::new(network.clone(), rng)?;
        let head = match loss.head() {
            Some(normalized) => Some(ClassifierHead::new(d, m, normalized, rng)?),
            None => None,
        };
        let centers = match loss {
            LossSpec::Center { alpha, .. } => Some(ClassCenters::new(m, d, alpha)?),
            _ => None,
        };
        let layout = match loss {
            LossSpec::Regression { layout, scale } => Some(make_target_layout(layout, m, d, scale)?),
            _ => None,
        };
        Ok(Model { dataset, class_names, loss, extractor, head, centers, layout, centroids: None })
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.extractor.config().embed_dim
    }

    /// Embeddings of all images, computed in chunks of [`EMBED_CHUNK`].
    pub fn embed(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        let n = images.shape()[0];
        let d = self.embed_dim();
        let mut out = Vec::with_capacity(n * d);
        let mut start = 0;
        while start < n {
            let end = (start + EMBED_CHUNK).min(n);
            let z = self.extractor.embed(&images.slice_outer(start, end)?)?;
            out.extend_from_slice(z.data());
            start = end;
        }
        Tensor::from_vec(&[n, d], out)
    }

    /// Class predictions for embeddings: head argmax (cosine argmax for cosface),
    /// nearest target for regression, nearest training centroid for contrastive
    /// and triplet. Ties go to the lower class index.
    pub fn predict(&self, z: &Tensor<T>) -> Result<Vec<usize>> {
        let (n, _) = z.dims2()?;
        match &self.loss {
            LossSpec::Regression { .. } => {
                let layout = self.layout.as_ref().ok_or_else(|| Error::State("regression model has no layout".into()))?;
                classify_nearest_batch(z, &layout.targets)
            }
            LossSpec::Contrastive { .. } | LossSpec::Triplet { .. } => {
                let c = self
                    .centroids
                    .as_ref()
                    .ok_or_else(|| Error::State("class centroids have not been computed".into()))?;
                classify_nearest_batch(z, c)
            }
            LossSpec::Cosface { .. } => {
                let head = self.head()?;
                let w = head.class_vectors();
                Ok((0..n)
                    .map(|i| {
                        let zi = z.row(i);
                        let zn = norm(zi);
                        let score = |j: usize| {
                            let wj = w.row(j);
                            let den = zn * norm(wj);
                            if den > T::zero() {
                                dot(zi, wj) / den
                            } else {
                                T::zero()
                            }
                        };
                        argmax((0..w.shape()[0]).map(score))
                    })
                    .collect())
            }
            _ => {
                let logits = self.head()?.forward_logits(z)?;
                Ok((0..n).map(|i| argmax(logits.row(i).iter().copied())).collect())
            }
        }
    }

    fn head(&self) -> Result<&ClassifierHead<T>> {
        self.head.as_ref().ok_or_else(|| Error::State(format!("{} model has no classifier head", self.loss.kind())))
    }

    /// Names and tensors in checkpoint order.
    fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> =
            self.extractor.params().iter().map(|p| (p.name.clone(), &p.value)).collect();
        if let Some(h) = &self.head {
            out.push((h.weight.name.clone(), &h.weight.value));
            out.push((h.bias.name.clone(), &h.bias.value));
        }
        if let Some(c) = &self.centers {
            out.push(("centers".into(), &c.centers));
        }
        if let Some(c) = &self.centroids {
            out.push(("centroids".into(), c));
        }
        out
    }

    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model.dataset = {}", self.dataset);
        write_network(self.extractor.config(), &mut s);
        write_loss(&self.loss, &mut s);
        let names: Vec<String> = self.tensors().into_iter().map(|(n, _)| n).collect();
        let _ = writeln!(s, "model.tensors = {}", names.join(","));
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tensors: Vec<&Tensor<T>> = self.tensors().into_iter().map(|(_, t)| t).collect();
        write_checkpoint(path, &self.describe(), &tensors)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let contents = read_checkpoint(path)?;
        let kv = KvFile::parse(&contents.text, path)?;
        let dataset: DatasetName = kv.require("model.dataset")?;
        let network = read_network(&kv, dataset.image_shape())?;
        let loss = read_loss(&kv, 1)?;
        let names: Vec<String> = kv.list_opt("model.tensors")?.unwrap_or_default();
        kv.finish()?;

        let mut model = Model::new(&network, loss, dataset, &mut Rng::new(0))?;
        let has_centroids = names.last().is_some_and(|n| n == "centroids");
        if has_centroids {
            model.centroids = Some(Tensor::zeros(&[model.classes(), model.embed_dim()])?);
        }
        let expected: Vec<String> = model.tensors().into_iter().map(|(n, _)| n).collect();
        if names != expected {
            return Err(Error::format(path, format!("tensor list {names:?} does not match model {expected:?}")));
        }
        if contents.tensors.len() != expected.len() {
            return Err(Error::format(
                path,
                format!("{} tensors stored, {} listed", contents.tensors.len(), expected.len()),
            ));
        }
        let mut stored = contents.tensors.into_iter().map(|t| t.cast::<T>());
        let n_fe = model.extractor.params().len();
        let fe_tensors: Vec<Tensor<T>> = stored.by_ref().take(n_fe).collect();
        model.extractor = FeatureExtractor::from_tensors(network, fe_tensors)
            .map_err(|e| Error::format(path, e.to_string()))?;
        let mut next = |what: &str, shape: &[usize]| -> Result<Tensor<T>> {
            let t = stored.next().ok_or_else(|| Error::format(path, format!("missing {what}")))?;
            if t.shape() != shape {
                return Err(Error::format(path, format!("{what} has shape {:?}, expected {shape:?}", t.shape())));
            }
            Ok(t)
        };
        let (m, d) = (model.classes(), model.embed_dim());
        if let Some(h) = &mut model.head {
            h.weight.value = next("head.weight", &[d, m])?;
            h.bias.value = next("head.bias", &[m])?;
        }
        if let Some(c) = &mut model.centers {
            c.centers = next("centers", &[m, d])?;
        }
        if has_centroids {
            model.centroids = Some(next("centroids", &[m, d])?);
        }
        Ok(model)
    }
}

fn argmax<T: Scalar>(xs: impl Iterator<Item = T>) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (i, x) in xs.enumerate() {
        if best.is_none_or(|(_, b)| x > b) {
            best = Some((i, x));
        }
    }
    best.map_or(0, |(i, _)| i)
}
