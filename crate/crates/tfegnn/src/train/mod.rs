//! Training and evaluation: warmup/decay learning-rate schedule, Adam,
//! stratified splitting, the epoch loop, and macro metrics.

mod adam;
mod data;
mod metrics;
mod schedule;
mod split;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use data::{graphed_from_dataset, read_graph_cache, write_graph_cache, GraphSegment, GraphedDataset};
pub use metrics::{compute_metrics, metrics_from_pairs, ClassMetrics, ConfusionMatrix, Metrics};
pub use schedule::lr_schedule;
pub use split::stratified_split;
pub use trainer::{evaluate, predict_probs, train, EpochStats, TrainResult};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::GraphError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("class {0} has no training samples after the split")]
    EmptyClass(String),
    #[error("dataset needs at least 2 classes, found {0}")]
    TooFewClasses(usize),
    #[error("cannot evaluate an empty split")]
    EmptySplit,
    #[error("model expects {model} classes but the dataset has {dataset}")]
    ClassMismatch { model: usize, dataset: usize },
    #[error("segment {index} has no label")]
    UnlabeledSegment { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_lr_start")]
    pub lr_start: f64,
    #[serde(default = "default_lr_end")]
    pub lr_end: f64,
    #[serde(default = "default_warmup_ratio")]
    pub warmup_ratio: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Train:test proportions of the stratified split.
    #[serde(default = "default_split")]
    pub split: (u32, u32),
}

fn default_epochs() -> usize {
    120
}
fn default_lr_start() -> f64 {
    1e-2
}
fn default_lr_end() -> f64 {
    1e-4
}
fn default_warmup_ratio() -> f64 {
    0.1
}
fn default_batch_size() -> usize {
    512
}
fn default_seed() -> u64 {
    42
}
fn default_split() -> (u32, u32) {
    (9, 1)
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: default_epochs(),
            lr_start: default_lr_start(),
            lr_end: default_lr_end(),
            warmup_ratio: default_warmup_ratio(),
            batch_size: default_batch_size(),
            seed: default_seed(),
            split: default_split(),
        }
    }
}
