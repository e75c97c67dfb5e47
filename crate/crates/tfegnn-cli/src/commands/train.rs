//! `train`: fit the model and write checkpoint, config sidecar, history and
//! test metrics into the output directory.

use std::path::Path;

use serde::Serialize;
use tfegnn::dataset::read_dataset;
use tfegnn::model::ModelConfig;
use tfegnn::tensor::save_checkpoint;
use tfegnn::train::{
    evaluate, graphed_from_dataset, read_graph_cache, train, write_graph_cache, GraphedDataset,
    Metrics, TrainConfig,
};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Serialize)]
struct RunReport {
    seed: u64,
    final_train_accuracy: f64,
    final_loss: f64,
    test_metrics: Metrics,
}

#[derive(Serialize)]
struct RepeatSummary {
    runs: Vec<RunReport>,
    mean_macro_f1: f64,
    min_macro_f1: f64,
    max_macro_f1: f64,
}

pub fn prepare(
    cfg: &RunConfig,
    dataset_path: &Path,
    graph_cache: Option<&Path>,
) -> Result<(GraphedDataset, ModelConfig), CliError> {
    let dataset = read_dataset(dataset_path)?;
    let data = match graph_cache {
        Some(cache) if cache.exists() => {
            read_graph_cache(cache, &dataset).map_err(CliError::input)?
        }
        other => {
            let data = graphed_from_dataset(&dataset, cfg.graph.window)?;
            if let Some(cache) = other {
                write_graph_cache(cache, &data)
                    .map_err(|e| CliError::input(format!("cannot write {}: {e}", cache.display())))?;
            }
            data
        }
    };
    let mut model_cfg = cfg.model.clone();
    if model_cfg.num_classes == 0 {
        model_cfg.num_classes = data.classes.len();
    } else if model_cfg.num_classes != data.classes.len() {
        return Err(CliError::input(format!(
            "config says {} classes but the dataset has {}",
            model_cfg.num_classes,
            data.classes.len()
        )));
    }
    Ok((data, model_cfg))
}

pub fn run(
    cfg: &RunConfig,
    dataset_path: &Path,
    out_dir: &Path,
    graph_cache: Option<&Path>,
    repeat: usize,
) -> Result<(), CliError> {
    if repeat == 0 {
        return Err(CliError::input("--repeat must be positive"));
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", out_dir.display())))?;
    let (data, model_cfg) = prepare(cfg, dataset_path, graph_cache)?;

    let mut resolved = cfg.clone();
    resolved.model = model_cfg.clone();
    resolved.write(&out_dir.join("config.json"))?;

    let mut runs = Vec::with_capacity(repeat);
    for i in 0..repeat {
        let train_cfg = TrainConfig {
            seed: cfg.train.seed + i as u64,
            ..cfg.train.clone()
        };
        let result = train(&data, &model_cfg, &train_cfg)?;
        let metrics = if result.test_indices.is_empty() {
            None
        } else {
            Some(evaluate(&result.model, &result.store, &data, &result.test_indices)?)
        };
        if i == 0 {
            let ckpt = out_dir.join("checkpoint.tfec");
            save_checkpoint(&result.store, &ckpt)
                .map_err(|e| CliError::input(format!("cannot write checkpoint: {e}")))?;
            let sidecar = serde_json::to_string_pretty(&model_cfg).expect("config serializes");
            std::fs::write(out_dir.join("checkpoint.tfec.json"), sidecar + "\n")
                .map_err(|e| CliError::input(format!("cannot write sidecar: {e}")))?;
            let history =
                serde_json::to_string_pretty(&result.history).expect("history serializes");
            std::fs::write(out_dir.join("history.json"), history + "\n")
                .map_err(|e| CliError::input(format!("cannot write history: {e}")))?;
        }
        let last = result.history.last();
        eprintln!(
            "run {} (seed {}): train accuracy {:.4}, test macro F1 {}",
            i,
            train_cfg.seed,
            last.map(|e| e.train_accuracy).unwrap_or(0.0),
            metrics
                .as_ref()
                .map(|m| format!("{:.4}", m.macro_f1))
                .unwrap_or_else(|| "n/a".into()),
        );
        if let Some(test_metrics) = metrics {
            runs.push(RunReport {
                seed: train_cfg.seed,
                final_train_accuracy: last.map(|e| e.train_accuracy).unwrap_or(0.0),
                final_loss: last.map(|e| e.loss).unwrap_or(f64::NAN),
                test_metrics,
            });
        }
    }

    if !runs.is_empty() {
        let f1s: Vec<f64> = runs.iter().map(|r| r.test_metrics.macro_f1).collect();
        let summary = RepeatSummary {
            mean_macro_f1: f1s.iter().sum::<f64>() / f1s.len() as f64,
            min_macro_f1: f1s.iter().cloned().fold(f64::INFINITY, f64::min),
            max_macro_f1: f1s.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            runs,
        };
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        std::fs::write(out_dir.join("metrics.json"), text + "\n")
            .map_err(|e| CliError::input(format!("cannot write metrics: {e}")))?;
    }
    Ok(())
}
