//! Grouping packets into bidirectional flows, splitting flows into
//! 60-second blocks, and filtering anomalous segments.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use super::frame::{clean_from_frame, parse_frame, SkipCounters, Truncation};
use super::pcap::{parse_capture, LINKTYPE_ETHERNET};
use super::{CleanPacket, Endpoint, FlowKey, IngestError, Origin, RawPacket, TrafficSegment};

pub const TIME_BLOCK_SECS: u64 = 60;
const OVERLONG_RAW_PACKETS: usize = 10_000;

/// How packets become segments: one segment per bidirectional flow, or one
/// per non-overlapping 60-second window anchored at the flow's first packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SegmentMode {
    #[default]
    Flow,
    TimeBlock,
}

impl std::str::FromStr for SegmentMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flow" => Ok(SegmentMode::Flow),
            "timeblock" => Ok(SegmentMode::TimeBlock),
            other => Err(format!("unknown mode {other:?} (flow|timeblock)")),
        }
    }
}

struct Classified {
    order: usize,
    timestamp: super::Timestamp,
    source: Endpoint,
    tcp_seq: Option<u32>,
    clean: Option<CleanPacket>,
}

/// Group raw packets into unlabeled segments.
///
/// Packets are keyed by canonical bidirectional flow; within a flow they are
/// sorted by timestamp (stable on ties), TCP retransmissions — duplicate
/// (direction, sequence number, payload length) — are dropped, and in
/// timeblock mode the flow is cut into 60-second windows anchored at its
/// first packet. Each segment keeps at most `limits.max_packets` clean
/// packets but remembers how many raw packets fell into its window.
pub fn assemble_segments(
    packets: &[RawPacket],
    mode: SegmentMode,
    limits: &Truncation,
    source_name: &str,
) -> (Vec<TrafficSegment>, SkipCounters) {
    let mut counters = SkipCounters::default();
    let mut flows: BTreeMap<FlowKey, Vec<Classified>> = BTreeMap::new();
    for (order, p) in packets.iter().enumerate() {
        match parse_frame(p) {
            Ok(frame) => {
                let clean = match clean_from_frame(p.timestamp, &frame, limits) {
                    Ok(c) => Some(c),
                    Err(skip) => {
                        counters.count(skip);
                        None
                    }
                };
                flows.entry(frame.key).or_default().push(Classified {
                    order,
                    timestamp: p.timestamp,
                    source: frame.source,
                    tcp_seq: frame.tcp_seq,
                    clean,
                });
            }
            Err(skip) => counters.count(skip),
        }
    }

    let mut segments = Vec::new();
    for (key, mut flow) in flows {
        flow.sort_by_key(|c| (c.timestamp, c.order));
        // Retransmission screen across the whole flow, per direction.
        let mut seen: HashSet<(Endpoint, u32, usize)> = HashSet::new();
        for c in &mut flow {
            if let (Some(seq), Some(clean)) = (c.tcp_seq, c.clean.as_ref()) {
                if !seen.insert((c.source, seq, clean.payload_bytes.len())) {
                    counters.duplicate_tcp += 1;
                    c.clean = None;
                }
            }
        }
        let anchor = flow[0].timestamp.total_nanos();
        let block_of = |c: &Classified| -> Option<u64> {
            match mode {
                SegmentMode::Flow => None,
                SegmentMode::TimeBlock => Some(
                    ((c.timestamp.total_nanos() - anchor)
                        / (TIME_BLOCK_SECS as u128 * 1_000_000_000)) as u64,
                ),
            }
        };
        let mut windows: BTreeMap<Option<u64>, (usize, Vec<CleanPacket>)> = BTreeMap::new();
        for c in flow {
            let block = block_of(&c);
            let entry = windows.entry(block).or_insert_with(|| (0, Vec::new()));
            entry.0 += 1;
            if let Some(clean) = c.clean {
                if entry.1.len() < limits.max_packets {
                    entry.1.push(clean);
                }
            }
        }
        for (block, (raw_packet_count, clean)) in windows {
            segments.push(TrafficSegment {
                packets: clean,
                label: None,
                origin: Origin {
                    file: source_name.to_string(),
                    flow: key.to_string(),
                    block,
                },
                raw_packet_count,
            });
        }
    }
    (segments, counters)
}

/// Drop anomalous segments: empty ones (no packet kept a payload) and
/// overlong ones (more than 10000 raw packets before truncation).
pub fn filter_anomalous(
    segments: Vec<TrafficSegment>,
    counters: &mut SkipCounters,
) -> Vec<TrafficSegment> {
    segments
        .into_iter()
        .filter(|s| {
            if s.packets.is_empty() {
                counters.empty_segment += 1;
                false
            } else if s.raw_packet_count > OVERLONG_RAW_PACKETS {
                counters.overlong_segment += 1;
                false
            } else {
                true
            }
        })
        .collect()
}

/// Result of ingesting one capture file end to end.
#[derive(Debug)]
pub struct FileIngest {
    pub segments: Vec<TrafficSegment>,
    pub counters: SkipCounters,
    pub link_type: u32,
    pub truncated_capture: bool,
}

/// Parse, assemble and filter one capture file. Captures with a non-Ethernet
/// link type yield no segments; their packets are counted as skipped.
pub fn ingest_file(
    path: &Path,
    mode: SegmentMode,
    limits: &Truncation,
) -> Result<FileIngest, IngestError> {
    let capture = parse_capture(path)?;
    let mut counters = SkipCounters::default();
    if capture.link_type != LINKTYPE_ETHERNET {
        counters.unsupported_linktype += capture.packets.len() as u64;
        return Ok(FileIngest {
            segments: Vec::new(),
            counters,
            link_type: capture.link_type,
            truncated_capture: capture.truncated,
        });
    }
    let source_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let (segments, mut asm_counters) = assemble_segments(&capture.packets, mode, limits, &source_name);
    let segments = filter_anomalous(segments, &mut asm_counters);
    counters.merge(&asm_counters);
    Ok(FileIngest {
        segments,
        counters,
        link_type: capture.link_type,
        truncated_capture: capture.truncated,
    })
}
