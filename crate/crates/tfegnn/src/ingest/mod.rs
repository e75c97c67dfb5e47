//! Capture ingestion: pcap parsing, bidirectional flow and segment
//! assembly, anomaly filtering, and per-packet anonymization into header
//! and payload byte sequences.
//!
//! Supported stack is Ethernet II + IPv4 + TCP/UDP; anything else is
//! counted and skipped rather than silently dropped.

mod assemble;
mod frame;
mod pcap;

pub(crate) mod checksum {
    pub(crate) use super::frame::{ip_checksum, transport_checksum};
}

pub use assemble::{assemble_segments, filter_anomalous, ingest_file, FileIngest, SegmentMode};
pub use frame::{anonymize_and_split, Skip, SkipCounters, Truncation};
pub use pcap::{parse_capture, parse_capture_bytes, CaptureFile, LINKTYPE_ETHERNET};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: not a pcap file (magic 0x{magic:08X})")]
    BadMagic { path: String, magic: u32 },
    #[error("{path}: file too short for a pcap global header")]
    ShortHeader { path: String },
}

/// Capture timestamp with exact nanosecond precision.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct Timestamp {
    pub secs: u64,
    pub nanos: u32,
}

impl Timestamp {
    pub fn new(secs: u64, nanos: u32) -> Self {
        Timestamp {
            secs: secs + (nanos / 1_000_000_000) as u64,
            nanos: nanos % 1_000_000_000,
        }
    }

    pub fn from_micros(secs: u64, micros: u32) -> Self {
        Self::new(secs, micros.saturating_mul(1000))
    }

    pub fn total_nanos(&self) -> u128 {
        self.secs as u128 * 1_000_000_000 + self.nanos as u128
    }

    pub fn as_f64(&self) -> f64 {
        self.secs as f64 + self.nanos as f64 * 1e-9
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:09}", self.secs, self.nanos)
    }
}

/// One captured packet: the link-layer bytes exactly as stored in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPacket {
    pub timestamp: Timestamp,
    pub link_bytes: Vec<u8>,
    pub caplen: usize,
}

impl RawPacket {
    pub fn new(timestamp: Timestamp, link_bytes: Vec<u8>) -> Self {
        let caplen = link_bytes.len();
        RawPacket {
            timestamp,
            link_bytes,
            caplen,
        }
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Tcp,
    Udp,
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transport::Tcp => write!(f, "tcp"),
            Transport::Udp => write!(f, "udp"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub addr: [u8; 4],
    pub port: u16,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{}.{}.{}:{}",
            self.addr[0], self.addr[1], self.addr[2], self.addr[3], self.port
        )
    }
}

/// Canonical bidirectional flow identity: the two endpoints are stored in
/// sorted order, so both directions of a conversation map to the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub endpoint_a: Endpoint,
    pub endpoint_b: Endpoint,
    pub transport: Transport,
}

impl FlowKey {
    pub fn new(src: Endpoint, dst: Endpoint, transport: Transport) -> Self {
        let (endpoint_a, endpoint_b) = if src <= dst { (src, dst) } else { (dst, src) };
        FlowKey {
            endpoint_a,
            endpoint_b,
            transport,
        }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}<->{}/{}",
            self.endpoint_a, self.endpoint_b, self.transport
        )
    }
}

/// A packet after anonymization: the Ethernet header is gone, IP addresses
/// and ports are excised, and the remaining protocol header octets and the
/// transport payload are truncated to their byte budgets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanPacket {
    pub timestamp: Timestamp,
    pub header_bytes: Vec<u8>,
    pub payload_bytes: Vec<u8>,
}

/// Where a segment came from, for traceability.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub file: String,
    pub flow: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<u64>,
}

/// A time-ordered packet sequence: the classification unit. A whole flow in
/// flow mode, or one 60-second window of a flow in timeblock mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficSegment {
    pub packets: Vec<CleanPacket>,
    pub label: Option<u32>,
    pub origin: Origin,
    /// Packets grouped into this segment before cleaning and truncation;
    /// the overlong-segment filter applies to this count.
    pub raw_packet_count: usize,
}
