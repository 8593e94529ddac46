//! Datasets: IDX and CIFAR-10 readers, a synthetic blob generator, class
//! partitions and seeded batch orders.
//!
//! Pixels are scaled by 1/255 and nothing else; there is no augmentation, so a
//! sample's `index` (its position in file order) identifies it across epochs.

mod batch;
pub mod cifar;
pub mod idx;
mod partition;
mod synthetic;

pub use batch::BatchPlan;
pub use partition::{class_partition, ClassPartition};
pub use synthetic::{synthetic_blobs, BlobSpec};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Tensor;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated payload, expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("label {label} at index {index} is not below class count {classes}")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("invalid dataset parameter: {0}")]
    InvalidParameter(String),
}

/// One labelled sample, borrowed from a [`Dataset`].
#[derive(Debug, Clone, Copy)]
pub struct SampleRecord<'a> {
    pub index: usize,
    pub image: &'a [f64],
    pub label: usize,
}

/// Immutable labelled dataset stored as one contiguous image tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    name: String,
    classes: usize,
    images: Tensor,
    labels: Vec<usize>,
}

impl Dataset {
    /// `images` has shape `[t, ...]`; sample `i` is row `i`.
    pub fn new(
        name: impl Into<String>,
        classes: usize,
        images: Tensor,
        labels: Vec<usize>,
    ) -> Result<Self, DataError> {
        if images.rows() != labels.len() {
            return Err(DataError::CountMismatch {
                images: images.rows(),
                labels: labels.len(),
            });
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(DataError::LabelOutOfRange {
                index,
                label,
                classes,
            });
        }
        Ok(Self {
            name: name.into(),
            classes,
            images,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample shape, e.g. `[1, 28, 28]`.
    pub fn image_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn record(&self, index: usize) -> SampleRecord<'_> {
        SampleRecord {
            index,
            image: self.images.row(index),
            label: self.labels[index],
        }
    }

    pub fn records(&self) -> impl Iterator<Item = SampleRecord<'_>> {
        (0..self.len()).map(|i| self.record(i))
    }

    /// Stacks the given samples into a `[indices.len(), ...]` batch.
    pub fn batch(&self, indices: &[usize]) -> Tensor {
        self.images
            .select_rows(indices)
            .expect("dataset rows share one shape")
    }
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}
