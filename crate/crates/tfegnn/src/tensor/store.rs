//! Named parameter storage and the binary checkpoint format.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{numel, Shape};

/// Index of a parameter (or non-trainable buffer) inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub(crate) fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    shape: Shape,
    value: Vec<f64>,
    grad: Vec<f64>,
    trainable: bool,
}

/// All model state: trainable parameters plus non-trainable buffers
/// (batch-norm running statistics). Names are unique.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, shape: Shape, value: Vec<f64>) -> ParamId {
        self.insert(name, shape, value, true)
    }

    /// A buffer participates in checkpoints but not in gradient updates.
    pub fn add_buffer(&mut self, name: &str, shape: Shape, value: Vec<f64>) -> ParamId {
        self.insert(name, shape, value, false)
    }

    fn insert(&mut self, name: &str, shape: Shape, value: Vec<f64>, trainable: bool) -> ParamId {
        assert_eq!(numel(&shape), value.len(), "shape/value mismatch for {name}");
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.entries.len());
        let grad = vec![0.0; value.len()];
        self.entries.push(Entry {
            name: name.to_string(),
            shape,
            value,
            grad,
            trainable,
        });
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.entries[id.0].shape
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.entries[id.0].value
    }

    pub fn set_value(&mut self, id: ParamId, value: Vec<f64>) {
        assert_eq!(value.len(), self.entries[id.0].value.len());
        self.entries[id.0].value = value;
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.entries[id.0].grad
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.ids().filter(|&id| self.is_trainable(id)).collect()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Total number of scalar values across trainable parameters.
    pub fn num_trainable_values(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.value.len())
            .sum()
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("malformed manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("manifest entry {name}: {reason}")]
    BadEntry { name: String, reason: String },
}

const MAGIC: &[u8; 8] = b"TFECKPT1";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    entries: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Shape,
    trainable: bool,
    offset: u64,
    len: u64,
}

/// Write every entry (parameters and buffers) to a single file: an 8-byte
/// magic, a length-prefixed JSON manifest, then raw little-endian f64
/// payloads. Round-trips are bit-exact.
pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<(), CheckpointError> {
    let mut manifest = Manifest {
        format_version: 1,
        entries: Vec::with_capacity(store.len()),
    };
    let mut offset = 0u64;
    for e in &store.entries {
        manifest.entries.push(ManifestEntry {
            name: e.name.clone(),
            shape: e.shape.clone(),
            trainable: e.trainable,
            offset,
            len: e.value.len() as u64,
        });
        offset += e.value.len() as u64;
    }
    let manifest_bytes = serde_json::to_vec(&manifest)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&manifest_bytes)?;
    for e in &store.entries {
        for v in &e.value {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)?;
    let manifest_len = u64::from_le_bytes(len_bytes) as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    r.read_exact(&mut manifest_bytes)?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let total: u64 = manifest.entries.iter().map(|e| e.len).sum();
    if payload.len() != total as usize * 8 {
        return Err(CheckpointError::BadEntry {
            name: "<payload>".into(),
            reason: format!(
                "payload holds {} bytes, manifest expects {}",
                payload.len(),
                total * 8
            ),
        });
    }
    let mut store = ParamStore::new();
    for e in &manifest.entries {
        if numel(&e.shape) as u64 != e.len {
            return Err(CheckpointError::BadEntry {
                name: e.name.clone(),
                reason: format!("shape {:?} does not cover {} values", e.shape, e.len),
            });
        }
        let start = e.offset as usize * 8;
        let end = start + e.len as usize * 8;
        if end > payload.len() {
            return Err(CheckpointError::BadEntry {
                name: e.name.clone(),
                reason: "payload range out of bounds".into(),
            });
        }
        let values: Vec<f64> = payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if e.trainable {
            store.add(&e.name, e.shape.clone(), values);
        } else {
            store.add_buffer(&e.name, e.shape.clone(), values);
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut store = ParamStore::new();
        store.add("a.weight", vec![2, 3], vec![1.5, -0.25, 3e-300, 0.0, -0.0, f64::MIN_POSITIVE]);
        store.add_buffer("a.running_mean", vec![3], vec![0.1 + 0.2, -7.0, 42.0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.tfec");
        save_checkpoint(&store, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        for id in store.ids() {
            let other = loaded.lookup(store.name(id)).unwrap();
            assert_eq!(loaded.shape(other), store.shape(id));
            assert_eq!(loaded.is_trainable(other), store.is_trainable(id));
            let a: Vec<u64> = store.value(id).iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = loaded.value(other).iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn load_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.tfec");
        std::fs::write(&path, b"NOTACKPT0000").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::BadMagic)
        ));
    }

    #[test]
    fn zero_grads_resets_accumulation() {
        let mut store = ParamStore::new();
        let id = store.add("w", vec![2], vec![1.0, 2.0]);
        store.grad_mut(id)[0] = 5.0;
        store.zero_grads();
        assert_eq!(store.grad(id), &[0.0, 0.0]);
    }
}
