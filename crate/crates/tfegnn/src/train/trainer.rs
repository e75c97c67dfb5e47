//! The epoch loop and evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::model::{softmax, Binder, Model, ModelConfig, Phase};
use crate::tensor::{ParamStore, Tape};

use super::adam::{adam_step, AdamState};
use super::data::GraphedDataset;
use super::metrics::{compute_metrics, ConfusionMatrix, Metrics};
use super::schedule::lr_schedule;
use super::split::stratified_split;
use super::{TrainConfig, TrainError};

// Decorrelate the streams drawn from one user seed.
const SALT_INIT: u64 = 0x5eed_0001;
const SALT_SPLIT: u64 = 0x5eed_0002;
const SALT_TRAIN: u64 = 0x5eed_0003;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug)]
pub struct TrainResult {
    pub model: Model,
    pub store: ParamStore,
    pub history: Vec<EpochStats>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Train a fresh model on the stratified train split of `data`.
///
/// Mini-batches accumulate per-segment gradients of the mean batch loss;
/// each optimizer step uses the warmup/decay schedule over
/// `max_epochs * batches_per_epoch` total steps. Fully deterministic under
/// `cfg.seed`.
pub fn train(
    data: &GraphedDataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainResult, TrainError> {
    if data.classes.len() < 2 {
        return Err(TrainError::TooFewClasses(data.classes.len()));
    }
    if model_cfg.num_classes != data.classes.len() {
        return Err(TrainError::ClassMismatch {
            model: model_cfg.num_classes,
            dataset: data.classes.len(),
        });
    }
    let mut init_rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ SALT_INIT);
    let (model, mut store) = Model::init(model_cfg.clone(), &mut init_rng)?;

    let labels = data.labels();
    let (train_indices, test_indices) =
        stratified_split(&labels, cfg.split.0, cfg.split.1, cfg.seed ^ SALT_SPLIT);
    for (c, name) in data.classes.iter().enumerate() {
        if !train_indices.iter().any(|&i| labels[i] == c as u32) {
            return Err(TrainError::EmptyClass(name.clone()));
        }
    }

    let batch_size = cfg.batch_size.min(train_indices.len()).max(1);
    let batches_per_epoch = train_indices.len().div_ceil(batch_size);
    let total_steps = (cfg.max_epochs * batches_per_epoch) as u64;

    let mut train_rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ SALT_TRAIN);
    let mut adam = AdamState::new(&store);
    let mut history = Vec::with_capacity(cfg.max_epochs);
    let mut shuffled = train_indices.clone();
    let mut step = 0u64;

    for epoch in 0..cfg.max_epochs {
        shuffled.shuffle(&mut train_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut last_lr = 0.0;
        for chunk in shuffled.chunks(batch_size) {
            store.zero_grads();
            let inv = 1.0 / chunk.len() as f64;
            for &si in chunk {
                let segment = &data.segments[si];
                let mut tape = Tape::new();
                let mut bind = Binder::new(&store);
                let logits = model.forward_segment(
                    &mut tape,
                    &mut bind,
                    &store,
                    &segment.graphs,
                    &mut Phase::Train {
                        rng: &mut train_rng,
                    },
                )?;
                let loss = model.loss(&mut tape, logits, segment.label as usize)?;
                let scaled = tape.scale(loss, inv);
                tape.backward(scaled, &mut store)
                    .map_err(crate::model::ModelError::from)?;
                loss_sum += tape.value(loss)[0];
                if argmax(tape.value(logits)) == segment.label as usize {
                    correct += 1;
                }
                for (id, value) in tape.take_bn_updates() {
                    store.set_value(id, value);
                }
            }
            step += 1;
            last_lr = lr_schedule(step, total_steps, cfg);
            adam_step(&mut store, &mut adam, last_lr);
        }
        history.push(EpochStats {
            epoch,
            lr: last_lr,
            loss: loss_sum / train_indices.len() as f64,
            train_accuracy: correct as f64 / train_indices.len() as f64,
        });
    }

    Ok(TrainResult {
        model,
        store,
        history,
        train_indices,
        test_indices,
    })
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Eval-mode metrics over the given segment indices.
pub fn evaluate(
    model: &Model,
    store: &ParamStore,
    data: &GraphedDataset,
    indices: &[usize],
) -> Result<Metrics, TrainError> {
    if indices.is_empty() {
        return Err(TrainError::EmptySplit);
    }
    if model.config().num_classes != data.classes.len() {
        return Err(TrainError::ClassMismatch {
            model: model.config().num_classes,
            dataset: data.classes.len(),
        });
    }
    let mut confusion = ConfusionMatrix::new(data.classes.len());
    for &i in indices {
        let segment = &data.segments[i];
        let mut tape = Tape::new();
        let mut bind = Binder::new(store);
        let logits = model.forward_segment(
            &mut tape,
            &mut bind,
            store,
            &segment.graphs,
            &mut Phase::Eval,
        )?;
        confusion.record(segment.label as usize, argmax(tape.value(logits)));
    }
    Ok(compute_metrics(confusion))
}

/// Eval-mode class probabilities for one segment's graphs.
pub fn predict_probs(
    model: &Model,
    store: &ParamStore,
    graphs: &[(crate::graph::ByteGraph, crate::graph::ByteGraph)],
) -> Result<Vec<f64>, TrainError> {
    let mut tape = Tape::new();
    let mut bind = Binder::new(store);
    let logits = model.forward_segment(&mut tape, &mut bind, store, graphs, &mut Phase::Eval)?;
    Ok(softmax(tape.value(logits)))
}
