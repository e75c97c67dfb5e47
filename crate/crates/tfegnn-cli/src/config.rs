//! Run configuration: defaults, overlaid by a config file, overlaid by
//! command-line flags. The resolved value is echoed by every command and can
//! be fed back via `--config` to reproduce a run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tfegnn::ingest::{SegmentMode, Truncation};
use tfegnn::model::ModelConfig;
use tfegnn::train::TrainConfig;

use crate::error::CliError;
use crate::GlobalOpts;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSection {
    #[serde(default)]
    pub mode: SegmentMode,
    #[serde(default = "default_max_packets")]
    pub max_packets: usize,
    #[serde(default = "default_max_header")]
    pub max_header: usize,
    #[serde(default = "default_max_payload")]
    pub max_payload: usize,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection {
            mode: SegmentMode::Flow,
            max_packets: default_max_packets(),
            max_header: default_max_header(),
            max_payload: default_max_payload(),
        }
    }
}

fn default_max_packets() -> usize {
    50
}
fn default_max_header() -> usize {
    40
}
fn default_max_payload() -> usize {
    150
}

impl IngestSection {
    pub fn truncation(&self) -> Truncation {
        Truncation {
            max_packets: self.max_packets,
            max_header: self.max_header,
            max_payload: self.max_payload,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSection {
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_window() -> usize {
    5
}

impl Default for GraphSection {
    fn default() -> Self {
        GraphSection {
            window: default_window(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunConfig {
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default)]
    pub graph: GraphSection,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

impl RunConfig {
    /// Defaults, then the config file (if given), then flag overrides.
    pub fn resolve(opts: &GlobalOpts) -> Result<RunConfig, CliError> {
        let mut cfg = match &opts.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::input(format!("cannot read config {}: {e}", path.display()))
                })?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::input(format!("bad config {}: {e}", path.display()))
                })?
            }
            None => RunConfig::default(),
        };
        if let Some(mode) = opts.mode {
            cfg.ingest.mode = mode;
        }
        if let Some(window) = opts.window {
            cfg.graph.window = window;
        }
        if let Some(v) = opts.max_packets {
            cfg.ingest.max_packets = v;
        }
        if let Some(v) = opts.max_header {
            cfg.ingest.max_header = v;
        }
        if let Some(v) = opts.max_payload {
            cfg.ingest.max_payload = v;
        }
        if let Some(p) = opts.pooling {
            cfg.model.pooling = p;
        }
        if let Some(s) = opts.seed {
            cfg.train.seed = s;
        }
        if let Some(e) = opts.epochs {
            cfg.train.max_epochs = e;
        }
        if let Some(b) = opts.batch_size {
            cfg.train.batch_size = b;
        }
        if cfg.graph.window < 2 {
            return Err(CliError::input(format!(
                "window must be at least 2, got {}",
                cfg.graph.window
            )));
        }
        Ok(cfg)
    }

    /// Print the resolved configuration to stderr; replaying a run with this
    /// JSON as `--config` reproduces it.
    pub fn echo(&self) {
        eprintln!(
            "resolved config: {}",
            serde_json::to_string(self).expect("config serializes")
        );
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text + "\n")
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
    }
}
