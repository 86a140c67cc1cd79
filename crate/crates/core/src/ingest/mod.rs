//! Datasets: LIBSVM and IDX parsers, MNIST preparation and synthetic
//! generators.

mod idx;
mod libsvm;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_input, ensure_shape, Result};

pub use idx::{mnist_dataset, parse_idx, read_idx_file, resize_area, write_idx, IdxTensor};
pub use libsvm::{parse_libsvm, parse_libsvm_str, write_libsvm};
pub use synth::{synth_linreg, synth_logreg, LinregData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    /// Labels are ±1.
    Binary,
    /// Labels are class indices `0..classes` stored as reals.
    Multiclass { classes: usize },
}

/// Dense features stored row-major, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Vec<f64>,
    pub feature_dim: usize,
    pub labels: Vec<f64>,
    pub task: Task,
}

impl LabeledDataset {
    pub fn new(features: Vec<f64>, feature_dim: usize, labels: Vec<f64>, task: Task) -> Result<Self> {
        ensure_shape!(
            features.len() == feature_dim * labels.len(),
            "{} feature values for {} samples of dimension {feature_dim}",
            features.len(),
            labels.len()
        );
        match task {
            Task::Binary => ensure_input!(
                labels.iter().all(|&y| y == 1.0 || y == -1.0),
                "binary labels must be ±1"
            ),
            Task::Multiclass { classes } => ensure_input!(
                labels.iter().all(|&y| y >= 0.0 && y.fract() == 0.0 && (y as usize) < classes),
                "class labels must be integers in [0, {classes})"
            ),
            Task::Regression => ensure_input!(labels.iter().all(|y| y.is_finite()), "labels must be finite"),
        }
        Ok(Self {
            features,
            feature_dim,
            labels,
            task,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.feature_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self {
            features,
            feature_dim: self.feature_dim,
            labels,
            task: self.task,
        }
    }

    /// Class index of every sample; ±1 labels map to 0 / 1.
    pub fn class_ids(&self) -> Option<Vec<usize>> {
        match self.task {
            Task::Regression => None,
            Task::Binary => Some(self.labels.iter().map(|&y| usize::from(y > 0.0)).collect()),
            Task::Multiclass { .. } => Some(self.labels.iter().map(|&y| y as usize).collect()),
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self.task {
            Task::Regression => None,
            Task::Binary => Some(2),
            Task::Multiclass { classes } => Some(classes),
        }
    }
}
