//! `predict`: per-segment class probabilities for a capture or dataset.

use std::io::Read;
use std::path::Path;

use serde::Serialize;
use tfegnn::dataset::read_dataset;
use tfegnn::graph::build_packet_graphs;
use tfegnn::ingest::{ingest_file, Origin, TrafficSegment};
use tfegnn::train::predict_probs;

use crate::config::RunConfig;
use crate::error::CliError;

use super::emit;
use super::evaluate::load_model;

#[derive(Serialize)]
struct Prediction<'a> {
    origin: &'a Origin,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<u32>,
    predicted: usize,
    probs: Vec<f64>,
}

fn looks_like_pcap(path: &Path) -> Result<bool, CliError> {
    let mut file = std::fs::File::open(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let mut magic = [0u8; 4];
    if file.read_exact(&mut magic).is_err() {
        return Ok(false);
    }
    let le = u32::from_le_bytes(magic);
    Ok(matches!(
        le,
        0xA1B2_C3D4 | 0xD4C3_B2A1 | 0xA1B2_3C4D | 0x4D3C_B2A1
    ))
}

pub fn run(
    cfg: &RunConfig,
    input: &Path,
    checkpoint: &Path,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (model, store) = load_model(checkpoint)?;
    let segments: Vec<TrafficSegment> = if looks_like_pcap(input)? {
        let result = ingest_file(input, cfg.ingest.mode, &cfg.ingest.truncation())?;
        if result.segments.is_empty() {
            return Err(CliError::input(format!(
                "{}: no usable segments in capture",
                input.display()
            )));
        }
        result.segments
    } else {
        read_dataset(input)?.segments
    };

    let mut lines = String::new();
    for seg in &segments {
        let graphs = seg
            .packets
            .iter()
            .map(|p| build_packet_graphs(&p.header_bytes, &p.payload_bytes, cfg.graph.window))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::internal(e.to_string()))?;
        let probs = predict_probs(&model, &store, &graphs)?;
        let predicted = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probabilities"))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let record = Prediction {
            origin: &seg.origin,
            label: seg.label,
            predicted,
            probs,
        };
        lines.push_str(&serde_json::to_string(&record).expect("prediction serializes"));
        lines.push('\n');
    }
    emit(out, &lines)
}
