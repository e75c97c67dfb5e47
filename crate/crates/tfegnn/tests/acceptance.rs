//! Acceptance suite: one test per criterion, each printing a PASS line
//! after its assertions hold. Run with `--nocapture` to see the lines:
//!
//! ```text
//! cargo test -p tfegnn --test acceptance -- --nocapture
//! ```

mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use tfegnn::graph::{build_graph, build_packet_graphs, count_cooccurrence, ByteGraph, GraphKind};
use tfegnn::model::{Binder, Model, ModelConfig, Phase, Pooling};
use tfegnn::synth::{conflicting_spec, disjoint_spec, generate};
use tfegnn::tensor::{gradient_check, Tape};
use tfegnn::train::{evaluate, graphed_from_dataset, train, TrainConfig};

use common::{for_each_canonical_sequence, oracle_edges, relabel};

fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Criterion 1: built edge sets equal a brute-force window-enumeration
/// oracle for all sequences of length <= 12 over the alphabet {0..4} and
/// windows {2, 3, 5}.
///
/// Coverage argument: both the implementation and the oracle commute with
/// byte relabelings, so it suffices to check every canonical sequence
/// (first occurrences in increasing order) — every other sequence is a
/// relabeling of exactly one of them. The relabeling property itself is
/// asserted here on 20000 random (sequence, bijection) pairs and is also a
/// standing property test.
#[test]
fn criterion_1_pmi_graph_oracle_equivalence() {
    let start = Instant::now();

    // Hand-checked case first.
    let g = build_graph(&[1, 2, 3, 4], 2, GraphKind::Payload).unwrap();
    let expected: BTreeSet<(u8, u8)> = [(1, 2), (3, 4)].into_iter().collect();
    assert_eq!(g.edge_values(), expected);

    let mut checked: u64 = 0;
    for len in 1..=12 {
        for_each_canonical_sequence(len, 5, |seq| {
            for window in [2usize, 3, 5] {
                let got = build_graph(seq, window, GraphKind::Payload)
                    .unwrap()
                    .edge_values();
                let want = oracle_edges(seq, window);
                assert_eq!(got, want, "seq {seq:?} window {window}");
                checked += 1;
            }
        });
    }

    // Relabeling closure over the full byte range.
    let mut r = rng(101);
    for _ in 0..20_000 {
        let len = r.random_range(1..=12);
        let seq: Vec<u8> = (0..len).map(|_| r.random_range(0..5u8)).collect();
        let mut map: Vec<u8> = (0..=255).collect();
        map.shuffle(&mut r);
        let map: [u8; 256] = map.try_into().unwrap();
        let relabeled = relabel(&seq, &map);
        for window in [2usize, 3, 5] {
            let base = build_graph(&seq, window, GraphKind::Payload).unwrap();
            let remapped: BTreeSet<(u8, u8)> = base
                .edge_values()
                .into_iter()
                .map(|(a, b)| {
                    let (x, y) = (map[a as usize], map[b as usize]);
                    if x <= y {
                        (x, y)
                    } else {
                        (y, x)
                    }
                })
                .collect();
            let direct = build_graph(&relabeled, window, GraphKind::Payload)
                .unwrap()
                .edge_values();
            assert_eq!(direct, remapped);
            assert_eq!(direct, oracle_edges(&relabeled, window));
        }
    }

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs() < 60,
        "exhaustive run took {elapsed:?}, budget is 60 s"
    );
    println!(
        "[acceptance] criterion 1 (pmi graph oracle equivalence): PASS \
         ({checked} canonical sequence/window cases in {elapsed:.2?})"
    );
}

/// Criterion 2: on 1000 random packets every graph has at most 256 nodes, a
/// symmetric zero-diagonal adjacency, and symmetric PMI values.
#[test]
fn criterion_2_graph_invariants_on_random_packets() {
    let mut r = rng(202);
    for _ in 0..1000 {
        let header_len = r.random_range(0..=40usize);
        let payload_len = r.random_range(1..=150usize);
        let header: Vec<u8> = (0..header_len).map(|_| r.random::<u8>()).collect();
        let payload: Vec<u8> = (0..payload_len).map(|_| r.random::<u8>()).collect();
        let (hg, pg) = build_packet_graphs(&header, &payload, 5).unwrap();
        for g in [&hg, &pg] {
            let n = g.num_nodes();
            assert!(n >= 1 && n <= 256);
            for i in 0..n {
                assert!(!g.has_edge(i, i), "self-loop at {i}");
                for j in 0..n {
                    assert_eq!(g.has_edge(i, j), g.has_edge(j, i));
                }
            }
        }
        let stats = count_cooccurrence(&payload, 5).unwrap();
        let observed: Vec<u8> = stats.observed().collect();
        for (ai, &a) in observed.iter().enumerate() {
            for &b in observed.iter().skip(ai + 1) {
                assert_eq!(stats.pmi(a, b).unwrap(), stats.pmi(b, a).unwrap());
            }
        }
    }
    println!("[acceptance] criterion 2 (graph invariants on 1000 random packets): PASS");
}

fn tiny_graphs(n_packets: usize, seed: u64) -> Vec<(ByteGraph, ByteGraph)> {
    let mut r = rng(seed);
    (0..n_packets)
        .map(|_| {
            let hlen = r.random_range(2..=10usize);
            let plen = r.random_range(4..=20usize);
            let header: Vec<u8> = (0..hlen).map(|_| r.random_range(0..40u8)).collect();
            let payload: Vec<u8> = (0..plen).map(|_| r.random_range(0..40u8)).collect();
            build_packet_graphs(&header, &payload, 3).unwrap()
        })
        .collect()
}

/// Criterion 3: the full per-segment forward (embed -> 4x SAGE -> JKN ->
/// pooling -> fusion -> LSTM -> classifier -> CE loss) matches central
/// finite differences with max relative error < 1e-4 on >= 200 sampled
/// coordinates, tiny config (embed 4, dims [4,4,4,4], 3 packets).
#[test]
fn criterion_3_full_forward_gradient_correctness() {
    let start = Instant::now();
    let config = ModelConfig {
        embed_dim: 4,
        sage_dims: [4, 4, 4, 4],
        pooling: Pooling::Mean,
        lstm_hidden: 5,
        classifier_hidden: 6,
        num_classes: 3,
        dropout: 0.0,
        dual_embedding: true,
    };
    let (model, mut store) = Model::init(config, &mut rng(33)).unwrap();
    // Check at a warmed-up parameter point: running statistics off their
    // init values and weights scaled so signals are O(1). At the cold-start
    // point the deepest gradients sit near 1e-9, below central-difference
    // cancellation noise.
    for id in store.ids().collect::<Vec<_>>() {
        let name = store.name(id).to_string();
        if name.ends_with("running_mean") {
            let n = store.value(id).len();
            store.set_value(id, (0..n).map(|i| 0.05 * (i as f64 + 1.0)).collect());
        } else if name.ends_with("running_var") {
            let n = store.value(id).len();
            store.set_value(id, (0..n).map(|i| 0.8 + 0.1 * i as f64).collect());
        } else if store.is_trainable(id) && !name.contains("prelu") && !name.contains("bn") {
            let vals: Vec<f64> = store.value(id).iter().map(|v| v * 3.0).collect();
            store.set_value(id, vals);
        }
    }
    let graphs = tiny_graphs(3, 34);
    let build = |tape: &mut Tape, store: &tfegnn::tensor::ParamStore| {
        let mut bind = Binder::new(store);
        let logits = model
            .forward_segment(tape, &mut bind, store, &graphs, &mut Phase::Eval)
            .expect("forward");
        tape.softmax_cross_entropy(logits, 1)
    };
    let samples = 300;
    let err = gradient_check(&mut store, build, samples, 1e-5, &mut rng(35)).unwrap();
    let elapsed = start.elapsed();
    assert!(err < 1e-4, "max relative error {err}");
    assert!(
        elapsed.as_secs() < 120,
        "gradient check took {elapsed:?}, budget is 2 min"
    );
    println!(
        "[acceptance] criterion 3 (gradient correctness, {samples} coordinates): PASS \
         (max rel err {err:.2e} in {elapsed:.2?})"
    );
}

/// Criterion 4: encode_graph is invariant to node relabelings within 1e-9,
/// 100 trials, all three pooling modes.
#[test]
fn criterion_4_permutation_invariance() {
    let base_config = ModelConfig {
        embed_dim: 6,
        sage_dims: [8, 8, 8, 8],
        pooling: Pooling::Mean,
        lstm_hidden: 4,
        classifier_hidden: 4,
        num_classes: 2,
        dropout: 0.0,
        dual_embedding: true,
    };
    let (_, store) = Model::init(base_config.clone(), &mut rng(44)).unwrap();
    let mut r = rng(45);
    for trial in 0..100 {
        // Random graph: distinct byte values, random edge set.
        let n = r.random_range(1..=20usize);
        let mut values: Vec<u8> = (0..=255).collect();
        values.shuffle(&mut r);
        let nodes: Vec<u8> = values[..n].to_vec();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if r.random_bool(0.3) {
                    edges.push((i, j));
                }
            }
        }
        let g = ByteGraph::from_parts(GraphKind::Payload, nodes.clone(), &edges).unwrap();

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let permuted_nodes: Vec<u8> = perm.iter().map(|&i| nodes[i]).collect();
        let position = |i: usize| perm.iter().position(|&p| p == i).unwrap();
        let permuted_edges: Vec<(usize, usize)> =
            edges.iter().map(|&(a, b)| (position(a), position(b))).collect();
        let gp = ByteGraph::from_parts(GraphKind::Payload, permuted_nodes, &permuted_edges).unwrap();

        for pooling in [Pooling::Mean, Pooling::Sum, Pooling::Max] {
            let mut config = base_config.clone();
            config.pooling = pooling;
            let model = Model::from_store(config, &store).unwrap();
            let encode = |graph: &ByteGraph| {
                let mut tape = Tape::new();
                let mut bind = Binder::new(&store);
                let e = model
                    .encode_graph(
                        &mut tape,
                        &mut bind,
                        &store,
                        graph,
                        tfegnn::model::Branch::Payload,
                        false,
                    )
                    .unwrap();
                tape.value(e).to_vec()
            };
            let a = encode(&g);
            let b = encode(&gp);
            for (x, y) in a.iter().zip(&b) {
                assert!(
                    (x - y).abs() < 1e-9,
                    "trial {trial} pooling {pooling:?}: {x} vs {y}"
                );
            }
        }
    }
    println!("[acceptance] criterion 4 (permutation invariance, 100 trials x 3 poolings): PASS");
}

/// Criterion 5: eval-mode logits of a segment are identical (within 1e-12)
/// whether the segment is evaluated alone or together with others on one
/// tape.
#[test]
fn criterion_5_eval_batch_independence() {
    let config = ModelConfig {
        embed_dim: 8,
        sage_dims: [8, 8, 8, 8],
        pooling: Pooling::Mean,
        lstm_hidden: 8,
        classifier_hidden: 8,
        num_classes: 4,
        dropout: 0.2,
        dual_embedding: true,
    };
    let (model, store) = Model::init(config, &mut rng(55)).unwrap();
    let segments: Vec<Vec<(ByteGraph, ByteGraph)>> =
        (0..8).map(|i| tiny_graphs(2 + (i % 3), 60 + i as u64)).collect();

    // Alone: fresh tape per segment.
    let mut solo = Vec::new();
    for graphs in &segments {
        let mut tape = Tape::new();
        let mut bind = Binder::new(&store);
        let logits = model
            .forward_segment(&mut tape, &mut bind, &store, graphs, &mut Phase::Eval)
            .unwrap();
        solo.push(tape.value(logits).to_vec());
    }
    // Batched: all segments share one tape and one parameter binding, in
    // several different orders.
    for order_seed in 0..3u64 {
        let mut order: Vec<usize> = (0..segments.len()).collect();
        order.shuffle(&mut rng(70 + order_seed));
        let mut tape = Tape::new();
        let mut bind = Binder::new(&store);
        for &si in &order {
            let logits = model
                .forward_segment(&mut tape, &mut bind, &store, &segments[si], &mut Phase::Eval)
                .unwrap();
            for (a, b) in tape.value(logits).iter().zip(&solo[si]) {
                assert!((a - b).abs() <= 1e-12, "segment {si}: {a} vs {b}");
            }
        }
    }
    println!("[acceptance] criterion 5 (eval-mode batch independence): PASS");
}

/// Criterion 6: 4 disjoint-alphabet classes x 32 segments, trained with the
/// published hyperparameters (lr 1e-2 -> 1e-4, warmup 0.1, dropout 0.2,
/// stratified 9:1): train accuracy >= 0.99 within 200 epochs and test macro
/// F1 >= 0.99, within a 15-minute CPU budget.
#[test]
fn criterion_6_synthetic_overfit() {
    let start = Instant::now();
    let dataset = generate(&disjoint_spec(4, 32, 606));
    let data = graphed_from_dataset(&dataset, 5).unwrap();
    let model_cfg = ModelConfig {
        embed_dim: 16,
        sage_dims: [32, 32, 32, 32],
        pooling: Pooling::Mean,
        lstm_hidden: 32,
        classifier_hidden: 64,
        num_classes: 4,
        dropout: 0.2,
        dual_embedding: true,
    };
    let train_cfg = TrainConfig {
        max_epochs: 200,
        lr_start: 1e-2,
        lr_end: 1e-4,
        warmup_ratio: 0.1,
        batch_size: 512,
        seed: 606,
        split: (9, 1),
    };
    let result = train(&data, &model_cfg, &train_cfg).unwrap();
    let (best_epoch, best_acc) = result
        .history
        .iter()
        .map(|e| (e.epoch, e.train_accuracy))
        .fold((0, 0.0f64), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    assert!(
        best_acc >= 0.99,
        "train accuracy peaked at {best_acc} (epoch {best_epoch})"
    );
    let metrics = evaluate(&result.model, &result.store, &data, &result.test_indices).unwrap();
    assert!(metrics.macro_f1 >= 0.99, "test macro F1 {}", metrics.macro_f1);
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs() < 900,
        "training took {elapsed:?}, budget is 15 min"
    );
    println!(
        "[acceptance] criterion 6 (synthetic overfit): PASS \
         (train acc {best_acc:.3} by epoch {best_epoch}, test macro F1 {:.3}, {elapsed:.1?})",
        metrics.macro_f1
    );
}

/// Criterion 7: on a corpus whose header and payload alphabets overlap with
/// conflicting class signals, dual embedding scores at least as well as a
/// shared embedding table, by median macro F1 over 5 seeds.
#[test]
fn criterion_7_dual_embedding_ablation_direction() {
    let median = |mut xs: Vec<f64>| -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs[xs.len() / 2]
    };
    let run = |dual: bool, seed: u64| -> f64 {
        let dataset = generate(&conflicting_spec(24, 700 + seed));
        let data = graphed_from_dataset(&dataset, 5).unwrap();
        let model_cfg = ModelConfig {
            embed_dim: 8,
            sage_dims: [12, 12, 12, 12],
            pooling: Pooling::Mean,
            lstm_hidden: 12,
            classifier_hidden: 16,
            num_classes: 2,
            dropout: 0.2,
            dual_embedding: dual,
        };
        let train_cfg = TrainConfig {
            max_epochs: 25,
            batch_size: 512,
            seed: 700 + seed,
            ..Default::default()
        };
        let result = train(&data, &model_cfg, &train_cfg).unwrap();
        evaluate(&result.model, &result.store, &data, &result.test_indices)
            .unwrap()
            .macro_f1
    };
    let dual_scores: Vec<f64> = (0..5).map(|s| run(true, s)).collect();
    let shared_scores: Vec<f64> = (0..5).map(|s| run(false, s)).collect();
    let dual_median = median(dual_scores.clone());
    let shared_median = median(shared_scores.clone());
    assert!(
        dual_median >= shared_median,
        "dual {dual_scores:?} (median {dual_median}) vs shared {shared_scores:?} (median {shared_median})"
    );
    println!(
        "[acceptance] criterion 7 (dual vs shared embedding direction): PASS \
         (dual median {dual_median:.3} >= shared median {shared_median:.3})"
    );
}

/// Criterion 8: the preprocessing filters behave exactly as specified on
/// fixture captures.
#[test]
fn criterion_8_preprocessing_rules() {
    use tfegnn::fixture::{write_pcap, FrameSpec, PcapVariant};
    use tfegnn::ingest::{ingest_file, SegmentMode, Timestamp, Truncation};

    let dir = tempfile::tempdir().unwrap();
    let limits = Truncation::default();

    // (a) Empty flow: every packet payload-free -> segment removed.
    let empty_flow: Vec<_> = (0..4u32)
        .map(|i| {
            (
                Timestamp::new(i as u64, 0),
                FrameSpec::tcp([10, 1, 1, 1], 1111, [10, 1, 1, 2], 80)
                    .with_seq(i * 10)
                    .build(),
            )
        })
        .collect();
    let path = dir.path().join("empty_flow.pcap");
    write_pcap(&path, &empty_flow, PcapVariant::MicrosLittleEndian).unwrap();
    let result = ingest_file(&path, SegmentMode::Flow, &limits).unwrap();
    assert!(result.segments.is_empty());
    assert_eq!(result.counters.empty_segment, 1);
    assert_eq!(result.counters.empty_payload, 4);

    // (b) Overlong flow: 10001 raw packets -> removed; 10000 still kept.
    for (count, kept) in [(10_001usize, 0usize), (10_000, 1)] {
        let records: Vec<_> = (0..count)
            .map(|i| {
                (
                    Timestamp::new(i as u64 / 100, (i as u32 % 100) * 1_000_000),
                    FrameSpec::tcp([10, 2, 2, 2], 2222, [10, 2, 2, 3], 80)
                        .with_seq(i as u32)
                        .with_payload(vec![7, 8, 9, 10])
                        .build(),
                )
            })
            .collect();
        let path = dir.path().join(format!("long_{count}.pcap"));
        write_pcap(&path, &records, PcapVariant::MicrosLittleEndian).unwrap();
        let result = ingest_file(&path, SegmentMode::Flow, &limits).unwrap();
        assert_eq!(result.segments.len(), kept, "{count} raw packets");
        if kept == 0 {
            assert_eq!(result.counters.overlong_segment, 1);
        } else {
            assert_eq!(result.segments[0].raw_packet_count, count);
            assert_eq!(result.segments[0].packets.len(), limits.max_packets);
        }
    }

    // (c) Payload-free packets dropped from a mixed flow.
    let mixed: Vec<_> = (0..6u32)
        .map(|i| {
            let spec = FrameSpec::tcp([10, 3, 3, 3], 3333, [10, 3, 3, 4], 80).with_seq(i * 10);
            let spec = if i % 2 == 0 {
                spec.with_payload(vec![1, 2, 3, 4, 5])
            } else {
                spec
            };
            (Timestamp::new(i as u64, 0), spec.build())
        })
        .collect();
    let path = dir.path().join("mixed.pcap");
    write_pcap(&path, &mixed, PcapVariant::MicrosLittleEndian).unwrap();
    let result = ingest_file(&path, SegmentMode::Flow, &limits).unwrap();
    assert_eq!(result.segments.len(), 1);
    assert_eq!(result.segments[0].packets.len(), 3);
    assert_eq!(result.counters.empty_payload, 3);

    // (d) Ethernet, IP address and port octets absent from header_bytes.
    // Marker values appear only in the fields that must be excised.
    let spec = FrameSpec {
        src_ip: [201, 202, 203, 204],
        dst_ip: [205, 206, 207, 208],
        src_port: u16::from_be_bytes([177, 178]),
        dst_port: u16::from_be_bytes([179, 180]),
        tcp: true,
        seq: 0x0101_0101,
        payload: (1..=30u8).collect(),
        ttl: 64,
        checksums: true,
        corrupt_ip_checksum: false,
    };
    let frame = spec.build();
    let raw = tfegnn::ingest::RawPacket::new(Timestamp::new(0, 0), frame.clone());
    let clean = tfegnn::ingest::anonymize_and_split(&raw, &limits).unwrap();
    // Manual oracle over the crafted frame: IP header minus addresses plus
    // TCP header minus ports, checksum fields zeroed.
    let mut expected = frame[14..26].to_vec(); // IP header bytes 0..12
    expected[10] = 0;
    expected[11] = 0;
    expected.extend_from_slice(&frame[38..54]); // TCP header bytes 4..20
    expected[24] = 0;
    expected[25] = 0;
    assert_eq!(clean.header_bytes, expected);
    for marker in [0xAAu8, 177, 178, 179, 180, 201, 202, 203, 204, 205, 206, 207, 208] {
        assert!(
            !clean.header_bytes.contains(&marker),
            "marker {marker} leaked into header bytes"
        );
    }
    assert!(clean.header_bytes.len() <= limits.max_header);

    println!("[acceptance] criterion 8 (preprocessing rules on fixture captures): PASS");
}

/// Criterion 9 (optional, large): when ISCX-VPN captures are supplied via
/// TFEGNN_ISCX_VPN_DIR (one subdirectory per class), the full pipeline runs
/// and reports metrics in the standard format. No numeric threshold.
#[test]
fn criterion_9_optional_iscx_vpn_pipeline() {
    let dir = match std::env::var_os("TFEGNN_ISCX_VPN_DIR") {
        Some(d) => std::path::PathBuf::from(d),
        None => {
            println!(
                "[acceptance] criterion 9 (optional ISCX-VPN pipeline): SKIP \
                 (set TFEGNN_ISCX_VPN_DIR to a directory with one class subdirectory of pcaps each)"
            );
            return;
        }
    };
    use tfegnn::dataset::{Dataset, DatasetMeta, TruncationMeta, FORMAT_VERSION};
    use tfegnn::ingest::{ingest_file, SegmentMode, Truncation};

    let limits = Truncation::default();
    let mut class_dirs: Vec<_> = std::fs::read_dir(&dir)
        .expect("readable ISCX dir")
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.path())
        .collect();
    class_dirs.sort();
    assert!(class_dirs.len() >= 2, "need at least two class directories");
    let mut segments = Vec::new();
    let mut classes = Vec::new();
    for (label, class_dir) in class_dirs.iter().enumerate() {
        classes.push(class_dir.file_name().unwrap().to_string_lossy().into_owned());
        let mut files: Vec<_> = std::fs::read_dir(class_dir)
            .unwrap()
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for file in files {
            if let Ok(result) = ingest_file(&file, SegmentMode::Flow, &limits) {
                for mut seg in result.segments {
                    seg.label = Some(label as u32);
                    segments.push(seg);
                }
            }
        }
    }
    let dataset = Dataset {
        meta: DatasetMeta {
            format_version: FORMAT_VERSION,
            truncation: TruncationMeta {
                packets: limits.max_packets,
                header: limits.max_header,
                payload: limits.max_payload,
            },
            classes,
        },
        segments,
    };
    let data = graphed_from_dataset(&dataset, 5).unwrap();
    let model_cfg = ModelConfig {
        num_classes: dataset.meta.classes.len(),
        ..ModelConfig::default()
    };
    let train_cfg = TrainConfig {
        max_epochs: 2,
        ..Default::default()
    };
    let result = train(&data, &model_cfg, &train_cfg).unwrap();
    let metrics = evaluate(&result.model, &result.store, &data, &result.test_indices).unwrap();
    println!(
        "[acceptance] criterion 9 (optional ISCX-VPN pipeline): PASS (metrics report: {})",
        serde_json::to_string(&metrics).unwrap()
    );
}
