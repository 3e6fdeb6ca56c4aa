//! Embedded-space export (CSV) and scatter-plot rendering (SVG).

mod csv_io;
mod project;
mod svg;

pub use csv_io::{export_csv, read_csv};
pub use project::{project_3d, project_3d_with_depth, View, DEFAULT_VIEWS};
pub use svg::{render_svg, render_unit_circle_projection, write_svg, SvgOptions, UnitCircleRender, PALETTE};

use crate::data::Dataset;
use crate::losses::LossSpec;
use crate::tensor::normalize_in_place;
use crate::train::Model;
use crate::{Error, Result, Scalar, Tensor};

/// Optional per-class overlay points, each `classes × d`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Overlays<T> {
    /// Classifier weight directions `W_j`, drawn as rays from the origin.
    pub weights: Option<Tensor<T>>,
    /// Class centers, drawn as filled squares.
    pub centers: Option<Tensor<T>>,
    /// Regression targets, drawn as black crosses.
    pub targets: Option<Tensor<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet<T> {
    /// `N × d`, `d ∈ {2, 3}`.
    pub points: Tensor<T>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub overlays: Overlays<T>,
}

impl<T: Scalar> EmbeddingSet<T> {
    pub fn new(points: Tensor<T>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        let (n, d) = points.dims2()?;
        if !(2..=3).contains(&d) {
            return Err(Error::Dimension(format!("embedding sets are 2-D or 3-D, got d = {d}")));
        }
        if labels.len() != n {
            return Err(Error::Dimension(format!("{n} points but {} labels", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_names.len()) {
            return Err(Error::Input(format!("label {bad} has no class name ({} names)", class_names.len())));
        }
        Ok(EmbeddingSet { points, labels, class_names, overlays: Overlays::default() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.shape()[1]
    }

    pub fn with_overlays(mut self, overlays: Overlays<T>) -> Result<Self> {
        for t in [&overlays.weights, &overlays.centers, &overlays.targets].into_iter().flatten() {
            if t.shape() != [self.class_names.len(), self.dim()] {
                return Err(Error::Dimension(format!(
                    "overlay {:?} does not match {} classes in {} dimensions",
                    t.shape(),
                    self.class_names.len(),
                    self.dim()
                )));
            }
        }
        self.overlays = overlays;
        Ok(self)
    }
}

/// Embeds every sample. Overlays follow the loss: weight directions for
/// classifier heads, centers for center loss, targets for regression. With
/// cosface `project_features`, points are scaled onto the unit sphere
/// (zero-norm points stay at the origin).
pub fn embed_dataset<T: Scalar>(model: &Model<T>, ds: &Dataset<T>) -> Result<EmbeddingSet<T>> {
    let mut points = model.embed(&ds.images)?;
    if let LossSpec::Cosface { project_features: true, .. } = model.loss {
        for i in 0..points.shape()[0] {
            let _ = normalize_in_place(points.row_mut(i));
        }
    }
    let overlays = Overlays {
        weights: model.head.as_ref().map(|h| h.class_vectors()),
        centers: model.centers.as_ref().map(|c| c.centers.clone()),
        targets: model.layout.as_ref().map(|l| l.targets.clone()),
    };
    EmbeddingSet::new(points, ds.labels.clone(), model.class_names.clone())?.with_overlays(overlays)
}
