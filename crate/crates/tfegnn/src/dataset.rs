//! The on-disk dataset: JSON lines, one metadata line followed by one
//! segment per line with hex-encoded byte sequences.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CleanPacket, Origin, Timestamp, TrafficSegment, Truncation};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Invalid {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: dataset is empty (missing metadata line)")]
    Empty { path: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationMeta {
    pub packets: usize,
    pub header: usize,
    pub payload: usize,
}

impl From<&Truncation> for TruncationMeta {
    fn from(t: &Truncation) -> Self {
        TruncationMeta {
            packets: t.max_packets,
            header: t.max_header,
            payload: t.max_payload,
        }
    }
}

/// First line of a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub truncation: TruncationMeta,
    /// Class names by label index.
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub segments: Vec<TrafficSegment>,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.meta.classes.len()
    }
}

#[derive(Serialize, Deserialize)]
struct TsRecord {
    s: u64,
    ns: u32,
}

#[derive(Serialize, Deserialize)]
struct PacketRecord {
    ts: TsRecord,
    header: String,
    payload: String,
}

#[derive(Serialize, Deserialize)]
struct SegmentRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<u32>,
    origin: Origin,
    packets: Vec<PacketRecord>,
}

pub fn to_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub fn from_hex(s: &str) -> Result<Vec<u8>, String> {
    if !s.len().is_multiple_of(2) {
        return Err("odd-length hex string".into());
    }
    (0..s.len() / 2)
        .map(|i| {
            u8::from_str_radix(&s[2 * i..2 * i + 2], 16)
                .map_err(|e| format!("bad hex at {}: {e}", 2 * i))
        })
        .collect()
}

fn to_record(seg: &TrafficSegment) -> SegmentRecord {
    SegmentRecord {
        label: seg.label,
        origin: seg.origin.clone(),
        packets: seg
            .packets
            .iter()
            .map(|p| PacketRecord {
                ts: TsRecord {
                    s: p.timestamp.secs,
                    ns: p.timestamp.nanos,
                },
                header: to_hex(&p.header_bytes),
                payload: to_hex(&p.payload_bytes),
            })
            .collect(),
    }
}

fn from_record(rec: SegmentRecord) -> Result<TrafficSegment, String> {
    let packets = rec
        .packets
        .into_iter()
        .map(|p| {
            Ok(CleanPacket {
                timestamp: Timestamp::new(p.ts.s, p.ts.ns),
                header_bytes: from_hex(&p.header)?,
                payload_bytes: from_hex(&p.payload)?,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(TrafficSegment {
        raw_packet_count: packets.len(),
        packets,
        label: rec.label,
        origin: rec.origin,
    })
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<(), DatasetError> {
    let display = path.display().to_string();
    let io_err = |source| DatasetError::Io {
        path: display.clone(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    let emit = |w: &mut BufWriter<File>, json: String| -> Result<(), DatasetError> {
        writeln!(w, "{json}").map_err(|source| DatasetError::Io {
            path: display.clone(),
            source,
        })
    };
    emit(&mut w, serde_json::to_string(&dataset.meta).expect("meta serializes"))?;
    for seg in &dataset.segments {
        emit(&mut w, serde_json::to_string(&to_record(seg)).expect("segment serializes"))?;
    }
    w.flush().map_err(|source| DatasetError::Io {
        path: display.clone(),
        source,
    })
}

pub fn read_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: display.clone(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();
    let meta: DatasetMeta = match lines.next() {
        None => return Err(DatasetError::Empty { path: display }),
        Some((i, line)) => {
            let line = line.map_err(|source| DatasetError::Io {
                path: display.clone(),
                source,
            })?;
            serde_json::from_str(&line).map_err(|source| DatasetError::Json {
                path: display.clone(),
                line: i + 1,
                source,
            })?
        }
    };
    let mut segments = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|source| DatasetError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SegmentRecord =
            serde_json::from_str(&line).map_err(|source| DatasetError::Json {
                path: display.clone(),
                line: i + 1,
                source,
            })?;
        let seg = from_record(rec).map_err(|reason| DatasetError::Invalid {
            path: display.clone(),
            line: i + 1,
            reason: reason.clone(),
        })?;
        if let Some(label) = seg.label {
            if label as usize >= meta.classes.len() {
                return Err(DatasetError::Invalid {
                    path: display.clone(),
                    line: i + 1,
                    reason: format!(
                        "label {label} out of range for {} classes",
                        meta.classes.len()
                    ),
                });
            }
        }
        if seg.packets.is_empty() {
            return Err(DatasetError::Invalid {
                path: display.clone(),
                line: i + 1,
                reason: "segment has no packets".into(),
            });
        }
        segments.push(seg);
    }
    Ok(Dataset { meta, segments })
}
