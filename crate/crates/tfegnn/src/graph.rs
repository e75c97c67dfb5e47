//! Byte-level traffic graph construction.
//!
//! A byte sequence (one packet's header or payload) is turned into an
//! undirected graph: every distinct byte value becomes one node, and two
//! nodes are connected when the point-wise mutual information of the pair
//! over a sliding window is strictly positive. Bytes with the same value
//! share a node, so a graph never has more than 256 nodes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("cannot build a graph from an empty byte sequence")]
    EmptySequence,
    #[error("window size must be at least 2, got {0}")]
    WindowTooSmall(usize),
    #[error("PMI is undefined for a byte paired with itself (byte {0})")]
    SelfPair(u8),
    #[error("byte {0} does not occur in the co-occurrence statistics")]
    UnobservedByte(u8),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
}

/// Sliding-window co-occurrence counts over one byte sequence.
///
/// `#W` is the total number of windows, `#W(i)` the number of windows in
/// which value `i` occurs at least once, and `#W(i,j)` the number of windows
/// containing both `i` and `j`. Pair keys are unordered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceStats {
    window_size: usize,
    num_windows: u64,
    single: BTreeMap<u8, u64>,
    pairs: BTreeMap<(u8, u8), u64>,
}

fn pair_key(i: u8, j: u8) -> (u8, u8) {
    if i <= j {
        (i, j)
    } else {
        (j, i)
    }
}

impl CooccurrenceStats {
    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn num_windows(&self) -> u64 {
        self.num_windows
    }

    /// Number of windows containing byte `i` at least once.
    pub fn single_count(&self, i: u8) -> u64 {
        self.single.get(&i).copied().unwrap_or(0)
    }

    /// Number of windows containing both `i` and `j` (unordered).
    pub fn pair_count(&self, i: u8, j: u8) -> u64 {
        self.pairs.get(&pair_key(i, j)).copied().unwrap_or(0)
    }

    /// Distinct byte values observed in the sequence, ascending.
    pub fn observed(&self) -> impl Iterator<Item = u8> + '_ {
        self.single.keys().copied()
    }

    /// Point-wise mutual information of bytes `i` and `j`:
    /// `ln(p(i,j) / (p(i) p(j)))` with probabilities estimated over windows.
    /// Returns negative infinity when the pair never co-occurs.
    pub fn pmi(&self, i: u8, j: u8) -> Result<f64, GraphError> {
        if i == j {
            return Err(GraphError::SelfPair(i));
        }
        let ci = self.single_count(i);
        let cj = self.single_count(j);
        if ci == 0 {
            return Err(GraphError::UnobservedByte(i));
        }
        if cj == 0 {
            return Err(GraphError::UnobservedByte(j));
        }
        let cij = self.pair_count(i, j);
        if cij == 0 {
            return Ok(f64::NEG_INFINITY);
        }
        // p(i,j)/(p(i)p(j)) = (#W(i,j) * #W) / (#W(i) * #W(j))
        Ok(((cij as f64 * self.num_windows as f64) / (ci as f64 * cj as f64)).ln())
    }

    /// Exact positivity test for `pmi(i, j) > 0`, via integer cross
    /// multiplication so edge creation never depends on float rounding.
    pub fn pmi_positive(&self, i: u8, j: u8) -> Result<bool, GraphError> {
        if i == j {
            return Err(GraphError::SelfPair(i));
        }
        let ci = self.single_count(i) as u128;
        let cj = self.single_count(j) as u128;
        if ci == 0 {
            return Err(GraphError::UnobservedByte(i));
        }
        if cj == 0 {
            return Err(GraphError::UnobservedByte(j));
        }
        let cij = self.pair_count(i, j) as u128;
        Ok(cij * self.num_windows as u128 > ci * cj)
    }
}

/// Count window co-occurrences with a window of `window` positions sliding
/// one step at a time. A sequence no longer than the window yields exactly
/// one window covering the whole sequence.
pub fn count_cooccurrence(seq: &[u8], window: usize) -> Result<CooccurrenceStats, GraphError> {
    if seq.is_empty() {
        return Err(GraphError::EmptySequence);
    }
    if window < 2 {
        return Err(GraphError::WindowTooSmall(window));
    }
    let mut single: BTreeMap<u8, u64> = BTreeMap::new();
    let mut pairs: BTreeMap<(u8, u8), u64> = BTreeMap::new();
    let mut num_windows = 0u64;
    let mut distinct: BTreeSet<u8> = BTreeSet::new();
    let windows: Box<dyn Iterator<Item = &[u8]>> = if seq.len() <= window {
        Box::new(std::iter::once(seq))
    } else {
        Box::new(seq.windows(window))
    };
    for w in windows {
        num_windows += 1;
        distinct.clear();
        distinct.extend(w.iter().copied());
        for &i in &distinct {
            *single.entry(i).or_insert(0) += 1;
        }
        let vals: Vec<u8> = distinct.iter().copied().collect();
        for (a, &i) in vals.iter().enumerate() {
            for &j in &vals[a + 1..] {
                *pairs.entry((i, j)).or_insert(0) += 1;
            }
        }
    }
    Ok(CooccurrenceStats {
        window_size: window,
        num_windows,
        single,
        pairs,
    })
}

/// Whether a graph was built from a packet's header or payload bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Header,
    Payload,
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphKind::Header => write!(f, "header"),
            GraphKind::Payload => write!(f, "payload"),
        }
    }
}

/// Undirected byte-level graph over the distinct byte values of a sequence.
///
/// The adjacency matrix is symmetric with a zero diagonal; the initial
/// feature of each node is its byte value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ByteGraph {
    kind: GraphKind,
    nodes: Vec<u8>,
    adj: Vec<bool>,
}

impl ByteGraph {
    /// Build a graph from an explicit node list and edge list (indices into
    /// the node list). Node values must be distinct; self-loops rejected.
    pub fn from_parts(
        kind: GraphKind,
        nodes: Vec<u8>,
        edges: &[(usize, usize)],
    ) -> Result<Self, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::InvalidGraph("graph has no nodes".into()));
        }
        let distinct: BTreeSet<u8> = nodes.iter().copied().collect();
        if distinct.len() != nodes.len() {
            return Err(GraphError::InvalidGraph(
                "node values must be distinct".into(),
            ));
        }
        let n = nodes.len();
        let mut adj = vec![false; n * n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(GraphError::InvalidGraph(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(GraphError::InvalidGraph(format!("self-loop at node {i}")));
            }
            adj[i * n + j] = true;
            adj[j * n + i] = true;
        }
        Ok(ByteGraph { kind, nodes, adj })
    }

    /// Single designated node with feature value 0; used for packets whose
    /// header is empty after anonymization.
    pub fn null_node(kind: GraphKind) -> Self {
        ByteGraph {
            kind,
            nodes: vec![0],
            adj: vec![false],
        }
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Node byte values in graph order.
    pub fn nodes(&self) -> &[u8] {
        &self.nodes
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.nodes.len() + j]
    }

    pub fn degree(&self, i: usize) -> usize {
        let n = self.nodes.len();
        self.adj[i * n..(i + 1) * n].iter().filter(|&&b| b).count()
    }

    /// Edges as index pairs with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.nodes.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.adj[i * n + j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Edges as unordered byte-value pairs, each with the smaller value first.
    pub fn edge_values(&self) -> BTreeSet<(u8, u8)> {
        self.edges()
            .into_iter()
            .map(|(i, j)| pair_key(self.nodes[i], self.nodes[j]))
            .collect()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().filter(|&&b| b).count() / 2
    }
}

/// Build the byte-level graph of a sequence: one node per distinct byte
/// value, an edge wherever the pair's PMI is strictly positive.
pub fn build_graph(seq: &[u8], window: usize, kind: GraphKind) -> Result<ByteGraph, GraphError> {
    let stats = count_cooccurrence(seq, window)?;
    let nodes: Vec<u8> = stats.observed().collect();
    let n = nodes.len();
    let mut adj = vec![false; n * n];
    for i in 0..n {
        for j in i + 1..n {
            if stats.pmi_positive(nodes[i], nodes[j])? {
                adj[i * n + j] = true;
                adj[j * n + i] = true;
            }
        }
    }
    Ok(ByteGraph { kind, nodes, adj })
}

/// Build the header and payload graphs of one packet. An empty header maps
/// to the designated null-node graph; the payload must be non-empty.
pub fn build_packet_graphs(
    header: &[u8],
    payload: &[u8],
    window: usize,
) -> Result<(ByteGraph, ByteGraph), GraphError> {
    let header_graph = if header.is_empty() {
        ByteGraph::null_node(GraphKind::Header)
    } else {
        build_graph(header, window, GraphKind::Header)?
    };
    let payload_graph = build_graph(payload, window, GraphKind::Payload)?;
    Ok((header_graph, payload_graph))
}

/// One graph as stored in the optional JSON-lines graph cache.
#[derive(Debug, Serialize, Deserialize)]
pub struct CacheRecord {
    pub kind: GraphKind,
    pub nodes: Vec<u8>,
    pub edges: Vec<(usize, usize)>,
}

impl From<&ByteGraph> for CacheRecord {
    fn from(g: &ByteGraph) -> Self {
        CacheRecord {
            kind: g.kind(),
            nodes: g.nodes().to_vec(),
            edges: g.edges(),
        }
    }
}

impl CacheRecord {
    pub fn into_graph(self) -> Result<ByteGraph, GraphError> {
        ByteGraph::from_parts(self.kind, self.nodes, &self.edges)
    }
}
