//! `stats`: flow-length distribution of captures or a dataset, with
//! histogram buckets and tail quantiles for external plotting.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tfegnn::dataset::read_dataset;
use tfegnn::ingest::{assemble_segments, parse_capture, SegmentMode, LINKTYPE_ETHERNET};

use crate::config::RunConfig;
use crate::error::CliError;

use super::emit;

#[derive(Serialize)]
struct Bucket {
    lo: u64,
    hi: u64,
    count: u64,
}

#[derive(Serialize)]
struct Quantiles {
    p50: u64,
    p90: u64,
    p99: u64,
}

#[derive(Serialize)]
struct Report {
    source: String,
    flows: usize,
    length_counts: BTreeMap<u64, u64>,
    lengths_sorted: Vec<u64>,
    histogram: Vec<Bucket>,
    quantiles: Quantiles,
}

fn capture_files(input: &Path) -> Result<Vec<PathBuf>, CliError> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut stack = vec![input.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = std::fs::read_dir(&dir)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", dir.display())))?;
        for entry in entries.filter_map(|e| e.ok()) {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Nearest-rank quantile over an ascending list.
fn quantile(sorted: &[u64], q: f64) -> u64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).max(1);
    sorted[rank - 1]
}

pub fn run(cfg: &RunConfig, input: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let mut lengths: Vec<u64> = Vec::new();
    let is_dataset = input.is_file()
        && input
            .extension()
            .map(|e| e == "jsonl" || e == "json")
            .unwrap_or(false);
    if is_dataset {
        let dataset = read_dataset(input)?;
        lengths.extend(dataset.segments.iter().map(|s| s.packets.len() as u64));
    } else {
        for file in capture_files(input)? {
            let capture = match parse_capture(&file) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("warning: skipping {}: {e}", file.display());
                    continue;
                }
            };
            if capture.link_type != LINKTYPE_ETHERNET {
                eprintln!(
                    "warning: {}: link type {} is not Ethernet",
                    file.display(),
                    capture.link_type
                );
                continue;
            }
            let (segments, _) = assemble_segments(
                &capture.packets,
                SegmentMode::Flow,
                &cfg.ingest.truncation(),
                &file.display().to_string(),
            );
            lengths.extend(segments.iter().map(|s| s.raw_packet_count as u64));
        }
    }
    if lengths.is_empty() {
        return Err(CliError::input(format!(
            "{}: no flows found",
            input.display()
        )));
    }
    lengths.sort_unstable();
    let mut length_counts: BTreeMap<u64, u64> = BTreeMap::new();
    for &l in &lengths {
        *length_counts.entry(l).or_insert(0) += 1;
    }
    // Power-of-two buckets suit the long-tailed shape of flow lengths.
    let mut histogram = Vec::new();
    let max = *lengths.last().expect("nonempty");
    let mut lo = 1u64;
    while lo <= max {
        let hi = lo * 2;
        let count = lengths.iter().filter(|&&l| l >= lo && l < hi).count() as u64;
        if count > 0 {
            histogram.push(Bucket { lo, hi, count });
        }
        lo = hi;
    }
    let report = Report {
        source: input.display().to_string(),
        flows: lengths.len(),
        quantiles: Quantiles {
            p50: quantile(&lengths, 0.50),
            p90: quantile(&lengths, 0.90),
            p99: quantile(&lengths, 0.99),
        },
        length_counts,
        lengths_sorted: lengths,
        histogram,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    emit(out, &text)
}
