//! Dataset ingestion, synthetic generation, soft labels, and train-time
//! augmentation.

mod augment;
mod cifar10;
mod synthetic;

pub use augment::{augment_batch, AugmentPlan};
pub use cifar10::{load_cifar10, read_cifar10_file, write_cifar10_file, CIFAR_CLASSES};
pub use synthetic::{Blob, SyntheticSpec};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A batch of images with integer labels and, once attached, soft targets.
///
/// Invariants enforced at construction: `images` is [B, ...] with every
/// pixel in [0, 1], `labels.len() == B`, and soft targets (when present)
/// are [B, N] rows.
#[derive(Debug, Clone)]
pub struct LabeledBatch {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub soft_targets: Option<Tensor>,
}

impl LabeledBatch {
    pub fn new(images: Tensor, labels: Vec<usize>) -> Result<Self> {
        if images.batch() != labels.len() {
            return Err(Error::shape(format!(
                "{} images vs {} labels",
                images.batch(),
                labels.len()
            )));
        }
        if images.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::shape("pixel outside [0, 1]"));
        }
        Ok(Self {
            images,
            labels,
            soft_targets: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Attaches soft targets built from the integer labels.
    pub fn with_soft_targets(mut self, n_classes: usize, alpha_sl: f64) -> Result<Self> {
        self.soft_targets = Some(soft_labels(&self.labels, n_classes, alpha_sl)?);
        Ok(self)
    }

    /// Gathers the given rows into a new batch (duplicates allowed).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            labels.push(
                *self
                    .labels
                    .get(i)
                    .ok_or_else(|| Error::shape(format!("row {i} out of range")))?,
            );
        }
        let images = self.images.gather_rows(indices);
        let soft_targets = self.soft_targets.as_ref().map(|t| t.gather_rows(indices));
        Ok(Self {
            images,
            labels,
            soft_targets,
        })
    }

    /// Row-wise concatenation; soft targets must be all-present or all-absent.
    pub fn concat(batches: &[&LabeledBatch]) -> Result<Self> {
        if batches.is_empty() {
            return Err(Error::shape("concat of zero batches"));
        }
        let images: Vec<&Tensor> = batches.iter().map(|b| &b.images).collect();
        let images = Tensor::concat_rows(&images)?;
        let labels: Vec<usize> = batches.iter().flat_map(|b| b.labels.clone()).collect();
        let with_targets = batches.iter().filter(|b| b.soft_targets.is_some()).count();
        let soft_targets = if with_targets == 0 {
            None
        } else if with_targets == batches.len() {
            let t: Vec<&Tensor> = batches
                .iter()
                .map(|b| b.soft_targets.as_ref().unwrap())
                .collect();
            Some(Tensor::concat_rows(&t)?)
        } else {
            return Err(Error::shape("mixed soft-target presence in concat"));
        };
        Ok(Self {
            images,
            labels,
            soft_targets,
        })
    }

    /// Per-class example counts, length `n_classes`.
    pub fn class_histogram(&self, n_classes: usize) -> Vec<usize> {
        let mut h = vec![0usize; n_classes];
        for &y in &self.labels {
            if y < n_classes {
                h[y] += 1;
            }
        }
        h
    }
}

/// Label-smoothing targets: the true class gets 1 - ((N-1)/N) * alpha and
/// every other class alpha / N, so each row sums to 1 exactly.
pub fn soft_labels(labels: &[usize], n_classes: usize, alpha_sl: f64) -> Result<Tensor> {
    if n_classes == 0 {
        return Err(Error::config("n_classes", "must be positive"));
    }
    if !(0.0..=1.0).contains(&alpha_sl) {
        return Err(Error::config(
            "alpha_sl",
            format!("must be in [0, 1], got {alpha_sl}"),
        ));
    }
    let off = alpha_sl / n_classes as f64;
    let on = 1.0 - (n_classes as f64 - 1.0) / n_classes as f64 * alpha_sl;
    let mut t = Tensor::zeros(&[labels.len(), n_classes]);
    for (b, &y) in labels.iter().enumerate() {
        if y >= n_classes {
            return Err(Error::config(
                "labels",
                format!("class id {y} out of range for {n_classes} classes"),
            ));
        }
        let row = t.row_mut(b);
        row.fill(off);
        row[y] = on;
    }
    Ok(t)
}
