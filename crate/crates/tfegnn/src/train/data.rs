//! Dataset segments with their per-packet graphs built, ready for the
//! model.

use crate::dataset::Dataset;
use crate::graph::{build_packet_graphs, ByteGraph};

use super::TrainError;

#[derive(Debug, Clone)]
pub struct GraphSegment {
    pub label: u32,
    pub graphs: Vec<(ByteGraph, ByteGraph)>,
}

#[derive(Debug, Clone)]
pub struct GraphedDataset {
    pub classes: Vec<String>,
    pub segments: Vec<GraphSegment>,
}

impl GraphedDataset {
    pub fn labels(&self) -> Vec<u32> {
        self.segments.iter().map(|s| s.label).collect()
    }
}

/// Build header/payload graphs for every packet of every segment.
pub fn graphed_from_dataset(dataset: &Dataset, window: usize) -> Result<GraphedDataset, TrainError> {
    let mut segments = Vec::with_capacity(dataset.segments.len());
    for (index, seg) in dataset.segments.iter().enumerate() {
        let label = seg
            .label
            .ok_or(TrainError::UnlabeledSegment { index })?;
        let graphs = seg
            .packets
            .iter()
            .map(|p| build_packet_graphs(&p.header_bytes, &p.payload_bytes, window))
            .collect::<Result<Vec<_>, _>>()?;
        segments.push(GraphSegment { label, graphs });
    }
    Ok(GraphedDataset {
        classes: dataset.meta.classes.clone(),
        segments,
    })
}

/// Write a graphed dataset to the JSON-lines cache: two lines per packet,
/// the header graph then the payload graph, in dataset order.
pub fn write_graph_cache(path: &std::path::Path, data: &GraphedDataset) -> std::io::Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for seg in &data.segments {
        for (h, p) in &seg.graphs {
            for g in [h, p] {
                let rec = crate::graph::CacheRecord::from(g);
                writeln!(w, "{}", serde_json::to_string(&rec).expect("record serializes"))?;
            }
        }
    }
    w.flush()
}

/// Rebuild a graphed dataset from the cache, using the dataset only for
/// labels and segment boundaries. Fails if the cache does not line up.
pub fn read_graph_cache(
    path: &std::path::Path,
    dataset: &Dataset,
) -> Result<GraphedDataset, String> {
    use std::io::BufRead;
    let file = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = std::io::BufReader::new(file).lines();
    let mut next_graph = |what: &str| -> Result<crate::graph::ByteGraph, String> {
        let line = lines
            .next()
            .ok_or_else(|| format!("cache ended early at {what}"))?
            .map_err(|e| e.to_string())?;
        let rec: crate::graph::CacheRecord =
            serde_json::from_str(&line).map_err(|e| format!("{what}: {e}"))?;
        rec.into_graph().map_err(|e| format!("{what}: {e}"))
    };
    let mut segments = Vec::with_capacity(dataset.segments.len());
    for (si, seg) in dataset.segments.iter().enumerate() {
        let label = seg
            .label
            .ok_or_else(|| format!("segment {si} has no label"))?;
        let mut graphs = Vec::with_capacity(seg.packets.len());
        for pi in 0..seg.packets.len() {
            let h = next_graph(&format!("segment {si} packet {pi} header"))?;
            let p = next_graph(&format!("segment {si} packet {pi} payload"))?;
            if h.kind() != crate::graph::GraphKind::Header
                || p.kind() != crate::graph::GraphKind::Payload
            {
                return Err(format!("segment {si} packet {pi}: kinds out of order"));
            }
            graphs.push((h, p));
        }
        segments.push(GraphSegment { label, graphs });
    }
    if lines.next().is_some() {
        return Err("cache has trailing lines".into());
    }
    Ok(GraphedDataset {
        classes: dataset.meta.classes.clone(),
        segments,
    })
}
