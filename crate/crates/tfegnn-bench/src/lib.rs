//! Input generators shared by the benchmarks.

use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use tfegnn::fixture::{pcap_bytes, FrameSpec, PcapVariant};
use tfegnn::graph::{build_packet_graphs, ByteGraph};
use tfegnn::ingest::Timestamp;

/// A packet-sized random byte pair: 40-byte header, 150-byte payload.
pub fn random_packet_bytes(seed: u64) -> (Vec<u8>, Vec<u8>) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let header = (0..40).map(|_| rng.random::<u8>()).collect();
    let payload = (0..150).map(|_| rng.random::<u8>()).collect();
    (header, payload)
}

/// Graph pairs for a synthetic segment of `n` full-size packets.
pub fn segment_graphs(n: usize, seed: u64) -> Vec<(ByteGraph, ByteGraph)> {
    (0..n)
        .map(|i| {
            let (h, p) = random_packet_bytes(seed + i as u64);
            build_packet_graphs(&h, &p, 5).unwrap()
        })
        .collect()
}

/// An in-memory capture of `packets` TCP packets spread over 8 flows.
pub fn capture_bytes(packets: usize) -> Vec<u8> {
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let records: Vec<(Timestamp, Vec<u8>)> = (0..packets)
        .map(|i| {
            let payload: Vec<u8> = (0..120).map(|_| rng.random::<u8>()).collect();
            (
                Timestamp::new(i as u64 / 10, (i as u32 % 10) * 100_000_000),
                FrameSpec::tcp([10, 0, 0, 1], 10_000 + (i % 8) as u16, [10, 0, 0, 2], 443)
                    .with_seq(i as u32 * 1000)
                    .with_payload(payload)
                    .build(),
            )
        })
        .collect();
    pcap_bytes(&records, PcapVariant::MicrosLittleEndian)
}
