//! Shared test helpers: a brute-force PMI graph oracle independent of the
//! library's implementation, and an enumerator for canonical sequences.

use std::collections::{BTreeSet, HashMap};

/// Recompute the edge set from scratch: enumerate every sliding window,
/// count occurrences in hash maps, and take ln of the exactly-computed
/// probability ratio. Products of window counts stay far below 2^53, so
/// the single division is the only rounding and a ratio of exactly 1 maps
/// to ln(1) = 0 (no edge).
pub fn oracle_edges(seq: &[u8], window: usize) -> BTreeSet<(u8, u8)> {
    assert!(!seq.is_empty() && window >= 2);
    let windows: Vec<&[u8]> = if seq.len() <= window {
        vec![seq]
    } else {
        (0..seq.len() - window + 1).map(|i| &seq[i..i + window]).collect()
    };
    let num_windows = windows.len() as f64;
    let mut singles: HashMap<u8, u64> = HashMap::new();
    let mut pairs: HashMap<(u8, u8), u64> = HashMap::new();
    for w in &windows {
        let mut distinct: Vec<u8> = w.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        for &v in &distinct {
            *singles.entry(v).or_insert(0) += 1;
        }
        for i in 0..distinct.len() {
            for j in i + 1..distinct.len() {
                *pairs.entry((distinct[i], distinct[j])).or_insert(0) += 1;
            }
        }
    }
    let mut edges = BTreeSet::new();
    for (&(a, b), &cab) in &pairs {
        let ca = singles[&a] as f64;
        let cb = singles[&b] as f64;
        let pmi = ((cab as f64 * num_windows) / (ca * cb)).ln();
        if pmi > 0.0 {
            edges.insert((a, b));
        }
    }
    edges
}

/// Visit every restricted-growth string of the given length over at most
/// `max_symbols` distinct values: sequences whose symbols first appear in
/// increasing order 0, 1, 2, ... Every sequence over a bounded alphabet is
/// a value-relabeling of exactly one such string.
pub fn for_each_canonical_sequence(len: usize, max_symbols: u8, mut f: impl FnMut(&[u8])) {
    let mut seq = vec![0u8; len];
    fn recurse(seq: &mut Vec<u8>, pos: usize, used: u8, max: u8, f: &mut impl FnMut(&[u8])) {
        if pos == seq.len() {
            f(seq);
            return;
        }
        let top = if used < max { used + 1 } else { used };
        for v in 0..top {
            seq[pos] = v;
            recurse(seq, pos + 1, used.max(v + 1), max, f);
        }
    }
    recurse(&mut seq, 0, 0, max_symbols, &mut f);
}

/// Apply a byte bijection to a sequence.
pub fn relabel(seq: &[u8], map: &[u8; 256]) -> Vec<u8> {
    seq.iter().map(|&b| map[b as usize]).collect()
}
