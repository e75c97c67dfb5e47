//! Capture-to-segment pipeline tests over crafted pcap fixtures.

use tfegnn::fixture::{pcap_bytes, ts, FrameSpec, PcapVariant};
use tfegnn::ingest::{
    anonymize_and_split, assemble_segments, filter_anomalous, ingest_file, parse_capture,
    FlowKey, RawPacket, SegmentMode, Skip, SkipCounters, Timestamp, Truncation,
};

use std::io::Write;
use std::path::PathBuf;

fn write_temp(name: &str, bytes: &[u8]) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(name);
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(bytes).unwrap();
    (dir, path)
}

fn payload(n: usize, start: u8) -> Vec<u8> {
    (0..n).map(|i| start.wrapping_add((i % 32) as u8)).collect()
}

#[test]
fn empty_capture_yields_no_packets() {
    let bytes = pcap_bytes(&[], PcapVariant::MicrosLittleEndian);
    assert_eq!(bytes.len(), 24);
    let (_dir, path) = write_temp("empty.pcap", &bytes);
    let cap = parse_capture(&path).unwrap();
    assert_eq!(cap.link_type, 1);
    assert!(cap.packets.is_empty());
    assert!(!cap.truncated);
}

#[test]
fn three_records_parse_in_order_with_timestamps() {
    let frames: Vec<(Timestamp, Vec<u8>)> = (0..3)
        .map(|i| {
            (
                Timestamp::from_micros(100 + i, 42 * i as u32),
                FrameSpec::tcp([10, 0, 0, 1], 1000, [10, 0, 0, 2], 80)
                    .with_seq(i as u32)
                    .with_payload(payload(10 + i as usize, 7))
                    .build(),
            )
        })
        .collect();
    let (_dir, path) = write_temp("three.pcap", &pcap_bytes(&frames, PcapVariant::MicrosLittleEndian));
    let cap = parse_capture(&path).unwrap();
    assert_eq!(cap.packets.len(), 3);
    for (i, p) in cap.packets.iter().enumerate() {
        assert_eq!(p.timestamp, frames[i].0);
        assert_eq!(p.link_bytes, frames[i].1);
        assert_eq!(p.caplen, frames[i].1.len());
    }
}

#[test]
fn byte_swapped_capture_parses_identically() {
    let frames: Vec<(Timestamp, Vec<u8>)> = (0..3)
        .map(|i| {
            (
                Timestamp::from_micros(500 + i, 999),
                FrameSpec::udp([1, 2, 3, 4], 5353, [5, 6, 7, 8], 53)
                    .with_payload(payload(20, i as u8))
                    .build(),
            )
        })
        .collect();
    let (_d1, le) = write_temp("le.pcap", &pcap_bytes(&frames, PcapVariant::MicrosLittleEndian));
    let (_d2, be) = write_temp("be.pcap", &pcap_bytes(&frames, PcapVariant::MicrosBigEndian));
    let cap_le = parse_capture(&le).unwrap();
    let cap_be = parse_capture(&be).unwrap();
    assert_eq!(cap_le.packets, cap_be.packets);
    assert_eq!(cap_le.link_type, cap_be.link_type);
}

#[test]
fn nanosecond_magic_keeps_full_precision() {
    let frames = vec![(
        Timestamp::new(7, 123_456_789),
        FrameSpec::default().with_payload(payload(5, 1)).build(),
    )];
    let (_dir, path) = write_temp("nanos.pcap", &pcap_bytes(&frames, PcapVariant::NanosLittleEndian));
    let cap = parse_capture(&path).unwrap();
    assert_eq!(cap.packets[0].timestamp, Timestamp::new(7, 123_456_789));
}

#[test]
fn bad_magic_is_a_fatal_parse_error() {
    let (_dir, path) = write_temp("junk.pcap", &[0xDEu8, 0xAD, 0xBE, 0xEF, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
    let err = parse_capture(&path).unwrap_err();
    assert!(err.to_string().contains("not a pcap file"));
}

#[test]
fn truncated_record_stops_with_packets_so_far() {
    let frames: Vec<(Timestamp, Vec<u8>)> = (0..2)
        .map(|i| {
            (
                ts(i),
                FrameSpec::default().with_seq(i as u32).with_payload(payload(30, 3)).build(),
            )
        })
        .collect();
    let mut bytes = pcap_bytes(&frames, PcapVariant::MicrosLittleEndian);
    bytes.truncate(bytes.len() - 10);
    let (_dir, path) = write_temp("cut.pcap", &bytes);
    let cap = parse_capture(&path).unwrap();
    assert_eq!(cap.packets.len(), 1);
    assert!(cap.truncated);
}

#[test]
fn tcp_packet_without_payload_is_skipped() {
    let frame = FrameSpec::default().build(); // empty payload
    let raw = RawPacket::new(ts(0), frame);
    assert_eq!(
        anonymize_and_split(&raw, &Truncation::default()).unwrap_err(),
        Skip::EmptyPayload
    );
}

#[test]
fn header_and_payload_budgets_apply_after_excision() {
    // 20-byte IP + 20-byte TCP + 200-byte payload:
    // header keeps (20-8) + (20-4) = 28 octets, payload truncates to 150.
    let frame = FrameSpec::default().with_payload(payload(200, 9)).build();
    let raw = RawPacket::new(ts(1), frame);
    let clean = anonymize_and_split(&raw, &Truncation::default()).unwrap();
    assert_eq!(clean.header_bytes.len(), 28);
    assert_eq!(clean.payload_bytes.len(), 150);
    assert_eq!(clean.payload_bytes, payload(200, 9)[..150]);
}

#[test]
fn header_bytes_match_manual_excision() {
    let spec = FrameSpec::tcp([192, 168, 1, 50], 55555, [8, 8, 8, 8], 443);
    let frame = spec.with_payload(payload(40, 20)).build();
    let raw = RawPacket::new(ts(2), frame.clone());
    let clean = anonymize_and_split(&raw, &Truncation::default()).unwrap();
    // Manual slice: IP header minus addresses, TCP header minus ports.
    let ip = &frame[14..34];
    let tcp = &frame[34..54];
    let mut expected = Vec::new();
    expected.extend_from_slice(&ip[..12]);
    expected[10] = 0; // IP checksum zeroed: it derives from the addresses
    expected[11] = 0;
    expected.extend_from_slice(&tcp[4..]);
    expected[24] = 0; // TCP checksum zeroed likewise
    expected[25] = 0;
    assert_eq!(clean.header_bytes, expected);
    // None of the excised fields survive anywhere in the header bytes.
    assert_eq!(clean.header_bytes.len(), 28);
}

#[test]
fn packets_differing_only_in_addresses_clean_identically() {
    let a = FrameSpec::tcp([10, 0, 0, 1], 1111, [10, 0, 0, 2], 2222)
        .with_payload(payload(33, 5))
        .build();
    let b = FrameSpec::tcp([172, 16, 5, 9], 3333, [192, 168, 0, 77], 4444)
        .with_payload(payload(33, 5))
        .build();
    let ca = anonymize_and_split(&RawPacket::new(ts(3), a), &Truncation::default()).unwrap();
    let cb = anonymize_and_split(&RawPacket::new(ts(3), b), &Truncation::default()).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn udp_header_keeps_length_and_checksum_octets() {
    let frame = FrameSpec::udp([10, 0, 0, 1], 5000, [10, 0, 0, 2], 53)
        .with_payload(payload(25, 40))
        .build();
    let clean = anonymize_and_split(&RawPacket::new(ts(4), frame), &Truncation::default()).unwrap();
    // (20-8) IP octets + (8-4) UDP octets.
    assert_eq!(clean.header_bytes.len(), 16);
}

#[test]
fn bad_ip_checksum_is_dropped() {
    let mut spec = FrameSpec::default().with_payload(payload(10, 0));
    spec.corrupt_ip_checksum = true;
    let raw = RawPacket::new(ts(5), spec.build());
    assert_eq!(
        anonymize_and_split(&raw, &Truncation::default()).unwrap_err(),
        Skip::BadIpChecksum
    );
}

#[test]
fn zero_checksums_pass_the_screen() {
    let mut spec = FrameSpec::default().with_payload(payload(10, 0));
    spec.checksums = false;
    let raw = RawPacket::new(ts(5), spec.build());
    assert!(anonymize_and_split(&raw, &Truncation::default()).is_ok());
}

#[test]
fn non_ipv4_frames_are_skipped_with_reason() {
    let mut frame = FrameSpec::default().with_payload(payload(10, 0)).build();
    frame[12] = 0x86; // ethertype IPv6
    frame[13] = 0xDD;
    let raw = RawPacket::new(ts(6), frame);
    assert_eq!(
        anonymize_and_split(&raw, &Truncation::default()).unwrap_err(),
        Skip::NotIpv4
    );
}

fn flow_packets(seconds: &[u64], src_port: u16) -> Vec<RawPacket> {
    seconds
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            RawPacket::new(
                ts(s),
                FrameSpec::tcp([10, 0, 0, 1], src_port, [10, 0, 0, 2], 443)
                    .with_seq(i as u32 * 1000)
                    .with_payload(payload(20, i as u8))
                    .build(),
            )
        })
        .collect()
}

#[test]
fn single_window_flow_makes_one_timeblock_segment() {
    let packets = flow_packets(&[0, 10, 30, 59], 1000);
    let (segments, _) =
        assemble_segments(&packets, SegmentMode::TimeBlock, &Truncation::default(), "t");
    assert_eq!(segments.len(), 1);
    assert_eq!(segments[0].packets.len(), 4);
    assert_eq!(segments[0].origin.block, Some(0));
}

#[test]
fn flow_spanning_130s_splits_into_three_blocks() {
    let packets = flow_packets(&[0, 30, 61, 90, 121, 130], 1001);
    let (segments, _) =
        assemble_segments(&packets, SegmentMode::TimeBlock, &Truncation::default(), "t");
    assert_eq!(segments.len(), 3);
    let blocks: Vec<Option<u64>> = segments.iter().map(|s| s.origin.block).collect();
    assert_eq!(blocks, vec![Some(0), Some(1), Some(2)]);
    let counts: Vec<usize> = segments.iter().map(|s| s.packets.len()).collect();
    assert_eq!(counts, vec![2, 2, 2]);
}

#[test]
fn timeblock_anchor_is_the_flows_first_timestamp() {
    // First packet at t=100: window boundaries at 160 and 220.
    let packets = flow_packets(&[100, 159, 160, 219, 220], 1002);
    let (segments, _) =
        assemble_segments(&packets, SegmentMode::TimeBlock, &Truncation::default(), "t");
    let counts: Vec<usize> = segments.iter().map(|s| s.packets.len()).collect();
    assert_eq!(counts, vec![2, 2, 1]);
}

#[test]
fn interleaved_five_tuples_split_into_two_flow_segments() {
    let mut packets = Vec::new();
    for i in 0..3u64 {
        for port in [2000u16, 3000] {
            packets.push(RawPacket::new(
                ts(i * 2 + (port == 3000) as u64),
                FrameSpec::tcp([10, 0, 0, 1], port, [10, 0, 0, 2], 443)
                    .with_seq(i as u32 * 100 + port as u32)
                    .with_payload(payload(20, i as u8))
                    .build(),
            ));
        }
    }
    let (segments, _) = assemble_segments(&packets, SegmentMode::Flow, &Truncation::default(), "t");
    assert_eq!(segments.len(), 2);
    for s in &segments {
        assert_eq!(s.packets.len(), 3);
        assert_eq!(s.origin.block, None);
    }
}

#[test]
fn flow_grouping_is_direction_blind() {
    // The same conversation seen from both sides lands in one segment.
    let fwd = FrameSpec::tcp([10, 0, 0, 1], 1234, [10, 0, 0, 2], 443)
        .with_seq(1)
        .with_payload(payload(12, 1))
        .build();
    let rev = FrameSpec::tcp([10, 0, 0, 2], 443, [10, 0, 0, 1], 1234)
        .with_seq(2)
        .with_payload(payload(12, 2))
        .build();
    let packets = vec![RawPacket::new(ts(0), fwd), RawPacket::new(ts(1), rev)];
    let (segments, _) = assemble_segments(&packets, SegmentMode::Flow, &Truncation::default(), "t");
    assert_eq!(segments.len(), 1);
    assert_eq!(segments[0].packets.len(), 2);
}

#[test]
fn flow_key_canonicalization_is_order_independent() {
    use tfegnn::ingest::{Endpoint, Transport};
    let a = Endpoint {
        addr: [10, 0, 0, 1],
        port: 1234,
    };
    let b = Endpoint {
        addr: [10, 0, 0, 2],
        port: 443,
    };
    assert_eq!(
        FlowKey::new(a, b, Transport::Tcp),
        FlowKey::new(b, a, Transport::Tcp)
    );
}

#[test]
fn tcp_retransmissions_are_deduplicated() {
    let make = |seq: u32, t: u64| {
        RawPacket::new(
            ts(t),
            FrameSpec::tcp([10, 0, 0, 1], 4000, [10, 0, 0, 2], 443)
                .with_seq(seq)
                .with_payload(payload(16, seq as u8))
                .build(),
        )
    };
    let packets = vec![make(100, 0), make(200, 1), make(100, 2)];
    let (segments, counters) =
        assemble_segments(&packets, SegmentMode::Flow, &Truncation::default(), "t");
    assert_eq!(counters.duplicate_tcp, 1);
    assert_eq!(segments[0].packets.len(), 2);
    assert_eq!(segments[0].raw_packet_count, 3);
}

#[test]
fn segments_truncate_to_fifty_packets_and_stay_sorted() {
    let seconds: Vec<u64> = (0..60).collect();
    let packets: Vec<RawPacket> = seconds
        .iter()
        .map(|&s| {
            RawPacket::new(
                ts(s),
                FrameSpec::tcp([10, 0, 0, 1], 5000, [10, 0, 0, 2], 443)
                    .with_seq(s as u32)
                    .with_payload(payload(8, s as u8))
                    .build(),
            )
        })
        .collect();
    let (segments, _) = assemble_segments(&packets, SegmentMode::Flow, &Truncation::default(), "t");
    assert_eq!(segments.len(), 1);
    assert_eq!(segments[0].packets.len(), 50);
    assert_eq!(segments[0].raw_packet_count, 60);
    for pair in segments[0].packets.windows(2) {
        assert!(pair[0].timestamp <= pair[1].timestamp);
    }
}

#[test]
fn empty_segments_are_filtered() {
    // All packets payload-free: segment assembled but dropped by the filter.
    let packets: Vec<RawPacket> = (0..3)
        .map(|i| {
            RawPacket::new(
                ts(i),
                FrameSpec::tcp([10, 0, 0, 1], 6000, [10, 0, 0, 2], 443)
                    .with_seq(i as u32)
                    .build(),
            )
        })
        .collect();
    let (segments, mut counters) =
        assemble_segments(&packets, SegmentMode::Flow, &Truncation::default(), "t");
    assert_eq!(segments.len(), 1);
    let kept = filter_anomalous(segments, &mut counters);
    assert!(kept.is_empty());
    assert_eq!(counters.empty_segment, 1);
    assert_eq!(counters.empty_payload, 3);
}

#[test]
fn overlong_segment_is_filtered_by_raw_count() {
    let mut counters = SkipCounters::default();
    let seg = |raw: usize| tfegnn::ingest::TrafficSegment {
        packets: vec![tfegnn::ingest::CleanPacket {
            timestamp: ts(0),
            header_bytes: vec![1, 2],
            payload_bytes: vec![3, 4],
        }],
        label: None,
        origin: tfegnn::ingest::Origin {
            file: "t".into(),
            flow: "f".into(),
            block: None,
        },
        raw_packet_count: raw,
    };
    let kept = filter_anomalous(vec![seg(10_000), seg(10_001), seg(3)], &mut counters);
    assert_eq!(kept.len(), 2);
    assert_eq!(counters.overlong_segment, 1);
    assert_eq!(kept[0].raw_packet_count, 10_000);
}

#[test]
fn retained_segments_are_unchanged() {
    let packets = flow_packets(&[0, 1, 2], 7000);
    let (segments, mut counters) =
        assemble_segments(&packets, SegmentMode::Flow, &Truncation::default(), "t");
    let before = segments.clone();
    let kept = filter_anomalous(segments, &mut counters);
    assert_eq!(kept, before);
}

#[test]
fn clean_packet_bounds_hold_for_arbitrary_frames() {
    // Oversized payloads and headers always respect the byte budgets.
    let limits = Truncation::default();
    for n in [1usize, 10, 149, 150, 151, 600, 1400] {
        let frame = FrameSpec::default().with_payload(payload(n, 3)).build();
        let clean = anonymize_and_split(&RawPacket::new(ts(0), frame), &limits).unwrap();
        assert!(!clean.payload_bytes.is_empty());
        assert!(clean.payload_bytes.len() <= limits.max_payload);
        assert!(clean.header_bytes.len() <= limits.max_header);
    }
}

#[test]
fn ingest_file_end_to_end_is_deterministic() {
    let mut records = Vec::new();
    for i in 0..10u64 {
        records.push((
            ts(i),
            FrameSpec::tcp([10, 0, 0, 1], 8000 + (i % 2) as u16, [10, 0, 0, 2], 443)
                .with_seq(i as u32)
                .with_payload(payload(25, i as u8))
                .build(),
        ));
    }
    let bytes = pcap_bytes(&records, PcapVariant::MicrosLittleEndian);
    let (_dir, path) = write_temp("det.pcap", &bytes);
    let a = ingest_file(&path, SegmentMode::Flow, &Truncation::default()).unwrap();
    let b = ingest_file(&path, SegmentMode::Flow, &Truncation::default()).unwrap();
    assert_eq!(a.segments, b.segments);
    assert_eq!(a.counters, b.counters);
    assert_eq!(a.segments.len(), 2);
}
