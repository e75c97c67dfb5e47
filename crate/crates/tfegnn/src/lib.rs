//! Byte-level traffic graphs and a temporal fusion GNN for fine-grained
//! encrypted traffic classification.
//!
//! The pipeline turns raw packet captures into per-packet byte graphs and
//! classifies traffic segments end to end:
//!
//! 1. [`ingest`] parses classic pcap files, assembles bidirectional flows or
//!    60-second segments, and anonymizes each packet into header/payload
//!    byte sequences.
//! 2. [`graph`] converts a byte sequence into an undirected graph whose nodes
//!    are distinct byte values and whose edges connect byte pairs with
//!    positive point-wise mutual information.
//! 3. [`model`] encodes each packet's header and payload graphs with stacked
//!    GraphSAGE layers, fuses the two branch vectors with cross gating, and
//!    classifies the packet sequence with a two-layer bidirectional LSTM.
//! 4. [`tensor`] is the dense f64 reverse-mode autodiff engine underneath.
//! 5. [`train`] provides the Adam/warmup training loop and macro metrics.
//!
//! [`dataset`], [`synth`] and [`fixture`] cover the on-disk dataset format,
//! synthetic corpus generation and pcap fixture crafting.

pub mod dataset;
pub mod fixture;
pub mod graph;
pub mod ingest;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod train;

pub use graph::{build_graph, build_packet_graphs, ByteGraph, CooccurrenceStats, GraphKind};
pub use ingest::{CleanPacket, FlowKey, RawPacket, Timestamp, TrafficSegment};
pub use model::{Model, ModelConfig, Pooling};
pub use tensor::{ParamStore, Tape, TensorId};
pub use train::{Metrics, TrainConfig};
