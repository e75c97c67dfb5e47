//! `evaluate`: metrics report (with confusion matrix) for a checkpoint on a
//! labeled dataset.

use std::path::Path;

use serde::Serialize;
use tfegnn::dataset::read_dataset;
use tfegnn::model::{Model, ModelConfig};
use tfegnn::tensor::{load_checkpoint, ParamStore};
use tfegnn::train::{evaluate, graphed_from_dataset, Metrics};

use crate::config::RunConfig;
use crate::error::CliError;

use super::emit;

#[derive(Serialize)]
struct Report {
    classes: Vec<String>,
    metrics: Metrics,
}

/// Load a checkpoint and its config sidecar, validating shape agreement.
pub fn load_model(checkpoint: &Path) -> Result<(Model, ParamStore), CliError> {
    let sidecar_path = checkpoint.with_extension("tfec.json");
    let sidecar = std::fs::read_to_string(&sidecar_path).map_err(|e| {
        CliError::input(format!(
            "cannot read config sidecar {}: {e}",
            sidecar_path.display()
        ))
    })?;
    let model_cfg: ModelConfig = serde_json::from_str(&sidecar)
        .map_err(|e| CliError::input(format!("bad sidecar {}: {e}", sidecar_path.display())))?;
    let store = load_checkpoint(checkpoint)?;
    let model = Model::from_store(model_cfg, &store)?;
    Ok((model, store))
}

pub fn run(
    cfg: &RunConfig,
    dataset_path: &Path,
    checkpoint: &Path,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let dataset = read_dataset(dataset_path)?;
    let (model, store) = load_model(checkpoint)?;
    if model.config().num_classes != dataset.num_classes() {
        return Err(CliError::input(format!(
            "checkpoint expects {} classes but the dataset has {}",
            model.config().num_classes,
            dataset.num_classes()
        )));
    }
    let data = graphed_from_dataset(&dataset, cfg.graph.window)?;
    let all: Vec<usize> = (0..data.segments.len()).collect();
    let metrics = evaluate(&model, &store, &data, &all)?;
    let report = Report {
        classes: dataset.meta.classes.clone(),
        metrics,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    emit(out, &text)
}
