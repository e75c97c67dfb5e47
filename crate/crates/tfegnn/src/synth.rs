//! Synthetic labeled datasets in the dataset file format: each class draws
//! header and payload bytes from its own alphabets, so classes are
//! separable by byte-graph structure. Deterministic under a seed.

use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::dataset::{Dataset, DatasetMeta, TruncationMeta, FORMAT_VERSION};
use crate::ingest::{CleanPacket, Origin, Timestamp, TrafficSegment, Truncation};

#[derive(Debug, Clone)]
pub struct ClassSpec {
    pub name: String,
    pub header_alphabet: Vec<u8>,
    pub payload_alphabet: Vec<u8>,
    pub packets: (usize, usize),
    pub header_len: (usize, usize),
    pub payload_len: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub classes: Vec<ClassSpec>,
    pub segments_per_class: usize,
    pub seed: u64,
}

/// Classes over pairwise disjoint byte ranges: class `c` owns the span
/// `[c*span, (c+1)*span)`, headers take the low third and payloads the rest.
pub fn disjoint_spec(num_classes: usize, segments_per_class: usize, seed: u64) -> SynthSpec {
    assert!(num_classes >= 2, "need at least 2 classes");
    assert!(num_classes <= 16, "byte space supports at most 16 classes");
    let span = 256 / num_classes;
    let classes = (0..num_classes)
        .map(|c| {
            let base = c * span;
            let header_len = (span / 3).max(2);
            ClassSpec {
                name: format!("class_{c}"),
                header_alphabet: (base..base + header_len).map(|v| v as u8).collect(),
                payload_alphabet: (base + header_len..base + span).map(|v| v as u8).collect(),
                packets: (3, 6),
                header_len: (10, 20),
                payload_len: (24, 56),
            }
        })
        .collect();
    SynthSpec {
        classes,
        segments_per_class,
        seed,
    }
}

/// Two classes whose header and payload alphabets are swapped: the same
/// byte values signal class 0 when seen in headers and class 1 when seen in
/// payloads. Sharing one embedding table across the two parts obfuscates
/// that signal.
pub fn conflicting_spec(segments_per_class: usize, seed: u64) -> SynthSpec {
    let low: Vec<u8> = (40..56).collect();
    let high: Vec<u8> = (200..216).collect();
    let class = |name: &str, header: &[u8], payload: &[u8]| ClassSpec {
        name: name.to_string(),
        header_alphabet: header.to_vec(),
        payload_alphabet: payload.to_vec(),
        packets: (3, 5),
        header_len: (10, 18),
        payload_len: (20, 40),
    };
    SynthSpec {
        classes: vec![
            class("low_header", &low, &high),
            class("high_header", &high, &low),
        ],
        segments_per_class,
        seed,
    }
}

fn draw(rng: &mut ChaCha12Rng, alphabet: &[u8], len: usize) -> Vec<u8> {
    (0..len)
        .map(|_| alphabet[rng.random_range(0..alphabet.len())])
        .collect()
}

/// Generate the dataset described by `spec`, class-major, segments in order.
pub fn generate(spec: &SynthSpec) -> Dataset {
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut segments = Vec::with_capacity(spec.classes.len() * spec.segments_per_class);
    for (label, class) in spec.classes.iter().enumerate() {
        for i in 0..spec.segments_per_class {
            let n = rng.random_range(class.packets.0..=class.packets.1);
            let base_secs = 1_600_000_000 + (label * spec.segments_per_class + i) as u64 * 100;
            let packets = (0..n)
                .map(|k| {
                    let hl = rng.random_range(class.header_len.0..=class.header_len.1);
                    let pl = rng.random_range(class.payload_len.0..=class.payload_len.1);
                    CleanPacket {
                        timestamp: Timestamp::new(base_secs + k as u64, 0),
                        header_bytes: draw(&mut rng, &class.header_alphabet, hl),
                        payload_bytes: draw(&mut rng, &class.payload_alphabet, pl),
                    }
                })
                .collect::<Vec<_>>();
            segments.push(TrafficSegment {
                raw_packet_count: packets.len(),
                packets,
                label: Some(label as u32),
                origin: Origin {
                    file: format!("synth://seed={}", spec.seed),
                    flow: format!("{}/segment_{i}", class.name),
                    block: None,
                },
            });
        }
    }
    Dataset {
        meta: DatasetMeta {
            format_version: FORMAT_VERSION,
            truncation: TruncationMeta::from(&Truncation::default()),
            classes: spec.classes.iter().map(|c| c.name.clone()).collect(),
        },
        segments,
    }
}
