//! `preprocess`: captures in, labeled dataset out. Class labels come from
//! the directory layout: one subdirectory per class.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tfegnn::dataset::{write_dataset, Dataset, DatasetMeta, TruncationMeta, FORMAT_VERSION};
use tfegnn::ingest::{ingest_file, SkipCounters};

use crate::config::RunConfig;
use crate::error::CliError;

use super::emit;

#[derive(Serialize)]
struct ClassSummary {
    segments: usize,
    packets: usize,
    files: usize,
}

#[derive(Serialize)]
struct Summary {
    dataset: String,
    classes: BTreeMap<String, ClassSummary>,
    dropped: SkipCounters,
    warnings: Vec<String>,
}

pub fn run(
    cfg: &RunConfig,
    input: &Path,
    out: &Path,
    summary_out: Option<&Path>,
) -> Result<(), CliError> {
    let mut class_dirs: Vec<(String, PathBuf)> = std::fs::read_dir(input)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", input.display())))?
        .filter_map(|entry| entry.ok())
        .filter(|entry| entry.path().is_dir())
        .map(|entry| (entry.file_name().to_string_lossy().into_owned(), entry.path()))
        .collect();
    class_dirs.sort();
    if class_dirs.len() < 2 {
        return Err(CliError::input(format!(
            "{}: need at least 2 class subdirectories, found {}",
            input.display(),
            class_dirs.len()
        )));
    }

    let limits = cfg.ingest.truncation();
    let mut segments = Vec::new();
    let mut dropped = SkipCounters::default();
    let mut classes = BTreeMap::new();
    let mut warnings = Vec::new();
    for (label, (class_name, dir)) in class_dirs.iter().enumerate() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", dir.display())))?
            .filter_map(|entry| entry.ok())
            .map(|entry| entry.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let mut class_segments = 0;
        let mut class_packets = 0;
        for file in &files {
            match ingest_file(file, cfg.ingest.mode, &limits) {
                Ok(result) => {
                    if result.truncated_capture {
                        warnings.push(format!("{}: capture ends mid-record", file.display()));
                    }
                    if result.counters.unsupported_linktype > 0 {
                        warnings.push(format!(
                            "{}: link type {} is not Ethernet; {} packets skipped",
                            file.display(),
                            result.link_type,
                            result.counters.unsupported_linktype
                        ));
                    }
                    dropped.merge(&result.counters);
                    for mut seg in result.segments {
                        seg.label = Some(label as u32);
                        class_segments += 1;
                        class_packets += seg.packets.len();
                        segments.push(seg);
                    }
                }
                Err(e) => warnings.push(format!("skipping {}: {e}", file.display())),
            }
        }
        if class_segments == 0 {
            return Err(CliError::input(format!(
                "class {class_name:?} produced no usable segments"
            )));
        }
        classes.insert(
            class_name.clone(),
            ClassSummary {
                segments: class_segments,
                packets: class_packets,
                files: files.len(),
            },
        );
    }

    let dataset = Dataset {
        meta: DatasetMeta {
            format_version: FORMAT_VERSION,
            truncation: TruncationMeta {
                packets: limits.max_packets,
                header: limits.max_header,
                payload: limits.max_payload,
            },
            classes: class_dirs.iter().map(|(name, _)| name.clone()).collect(),
        },
        segments,
    };
    write_dataset(out, &dataset)?;

    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let summary = Summary {
        dataset: out.display().to_string(),
        classes,
        dropped,
        warnings,
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    emit(summary_out, &text)
}
