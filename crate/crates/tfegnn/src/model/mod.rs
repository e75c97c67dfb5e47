//! The temporal fusion GNN: dual byte embeddings, a stacked GraphSAGE
//! encoder with jumping-knowledge concatenation and pooling, cross-gated
//! fusion of the header and payload graph vectors, and a two-layer
//! bidirectional LSTM over the per-packet vectors feeding a linear
//! classifier.
//!
//! The header and payload branches share no parameters; with
//! `dual_embedding` disabled (an ablation) a single byte-embedding table is
//! used for both branches while the branch encoders stay separate.

use rand::RngExt;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::ByteGraph;
use crate::tensor::{ParamId, ParamStore, Tape, TensorError, TensorId};


pub const SAGE_LAYERS: usize = 4;
pub const LSTM_LAYERS: usize = 2;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("a segment must contain at least one packet")]
    EmptySegment,
    #[error("checkpoint does not contain parameter {0}")]
    MissingParam(String),
    #[error("parameter {name}: expected shape {expected:?}, found {found:?}")]
    ShapeConflict {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("invalid model config: {0}")]
    BadConfig(String),
}

/// Node-vector pooling used to reduce per-node features to one graph vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
    Sum,
    Max,
}

impl std::str::FromStr for Pooling {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "sum" => Ok(Pooling::Sum),
            "max" => Ok(Pooling::Max),
            other => Err(format!("unknown pooling {other:?} (mean|sum|max)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_sage_dims")]
    pub sage_dims: [usize; SAGE_LAYERS],
    #[serde(default)]
    pub pooling: Pooling,
    #[serde(default = "default_lstm_hidden")]
    pub lstm_hidden: usize,
    #[serde(default = "default_classifier_hidden")]
    pub classifier_hidden: usize,
    #[serde(default)]
    pub num_classes: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_true")]
    pub dual_embedding: bool,
}

fn default_embed_dim() -> usize {
    50
}
fn default_sage_dims() -> [usize; SAGE_LAYERS] {
    [128; SAGE_LAYERS]
}
fn default_lstm_hidden() -> usize {
    256
}
fn default_classifier_hidden() -> usize {
    256
}
fn default_dropout() -> f64 {
    0.2
}
fn default_true() -> bool {
    true
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: default_embed_dim(),
            sage_dims: default_sage_dims(),
            pooling: Pooling::Mean,
            lstm_hidden: default_lstm_hidden(),
            classifier_hidden: default_classifier_hidden(),
            num_classes: 0,
            dropout: default_dropout(),
            dual_embedding: true,
        }
    }
}

impl ModelConfig {
    pub fn for_classes(num_classes: usize) -> Self {
        ModelConfig {
            num_classes,
            ..Default::default()
        }
    }

    /// Dimension of one branch's graph vector: the jumping-knowledge
    /// concatenation of all four layer outputs.
    pub fn graph_dim(&self) -> usize {
        self.sage_dims.iter().sum()
    }

    /// Dimension of the fused per-packet vector.
    pub fn fused_dim(&self) -> usize {
        2 * self.graph_dim()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.num_classes < 2 {
            return Err(ModelError::BadConfig(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.embed_dim == 0
            || self.lstm_hidden == 0
            || self.classifier_hidden == 0
            || self.sage_dims.contains(&0)
        {
            return Err(ModelError::BadConfig("all layer widths must be nonzero".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::BadConfig(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Header,
    Payload,
}

/// Forward-pass mode: training enables dropout and batch statistics and
/// needs a seeded dropout source; eval is a pure function of the inputs.
pub enum Phase<'a> {
    Train { rng: &'a mut ChaCha12Rng },
    Eval,
}

impl Phase<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Phase::Train { .. })
    }
}

/// Per-tape cache mapping parameters to their leaf tensors, so each
/// parameter is registered once per forward pass.
pub struct Binder {
    slots: Vec<Option<TensorId>>,
}

impl Binder {
    pub fn new(store: &ParamStore) -> Self {
        Binder {
            slots: vec![None; store.len()],
        }
    }

    pub fn get(&mut self, tape: &mut Tape, store: &ParamStore, id: ParamId) -> TensorId {
        let slot = &mut self.slots[id.index()];
        match slot {
            Some(t) => *t,
            None => {
                let t = tape.param(store, id);
                *slot = Some(t);
                t
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct SageLayerIds {
    weight: ParamId,
    prelu: ParamId,
    gamma: ParamId,
    beta: ParamId,
    run_mean: ParamId,
    run_var: ParamId,
}

#[derive(Debug, Clone)]
struct BranchIds {
    embed: ParamId,
    sage: Vec<SageLayerIds>,
}

#[derive(Debug, Clone, Copy)]
struct FilterIds {
    w1: ParamId,
    b1: ParamId,
    prelu: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct LstmDirIds {
    w_ih: ParamId,
    w_hh: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct LstmLayerIds {
    fwd: LstmDirIds,
    bwd: LstmDirIds,
}

#[derive(Debug, Clone, Copy)]
struct ClassifierIds {
    w1: ParamId,
    b1: ParamId,
    prelu: ParamId,
    w2: ParamId,
    b2: ParamId,
}

/// Resolved parameter handles for one model, bound to a [`ParamStore`]
/// whose entries were created by [`Model::init`] or validated by
/// [`Model::from_store`].
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    header: BranchIds,
    payload: BranchIds,
    fusion_header: FilterIds,
    fusion_payload: FilterIds,
    lstm: Vec<LstmLayerIds>,
    classifier: ClassifierIds,
}

enum Init {
    UniformFanIn(usize),
    Const(f64),
}

struct EntrySpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
    trainable: bool,
}

fn spec_entries(config: &ModelConfig) -> Vec<EntrySpec> {
    let d0 = config.embed_dim;
    let dg = config.graph_dim();
    let h = config.lstm_hidden;
    let ch = config.classifier_hidden;
    let mut out = Vec::new();
    let weight = |name: String, shape: Vec<usize>, fan_in: usize| EntrySpec {
        name,
        shape,
        init: Init::UniformFanIn(fan_in),
        trainable: true,
    };
    let cons = |name: String, shape: Vec<usize>, v: f64, trainable: bool| EntrySpec {
        name,
        shape,
        init: Init::Const(v),
        trainable,
    };

    if config.dual_embedding {
        out.push(weight("embed.header".into(), vec![256, d0], d0));
        out.push(weight("embed.payload".into(), vec![256, d0], d0));
    } else {
        out.push(weight("embed.shared".into(), vec![256, d0], d0));
    }
    for branch in ["header", "payload"] {
        let mut prev = d0;
        for (l, &d) in config.sage_dims.iter().enumerate() {
            let l = l + 1;
            out.push(weight(
                format!("sage.{branch}.{l}.weight"),
                vec![2 * prev, d],
                2 * prev,
            ));
            out.push(cons(format!("sage.{branch}.{l}.prelu"), vec![d], 0.25, true));
            out.push(cons(format!("sage.{branch}.{l}.bn.gamma"), vec![d], 1.0, true));
            out.push(cons(format!("sage.{branch}.{l}.bn.beta"), vec![d], 0.0, true));
            out.push(cons(
                format!("sage.{branch}.{l}.bn.running_mean"),
                vec![d],
                0.0,
                false,
            ));
            out.push(cons(
                format!("sage.{branch}.{l}.bn.running_var"),
                vec![d],
                1.0,
                false,
            ));
            prev = d;
        }
    }
    for branch in ["header", "payload"] {
        out.push(weight(format!("fusion.{branch}.w1"), vec![dg, dg], dg));
        out.push(cons(format!("fusion.{branch}.b1"), vec![dg], 0.0, true));
        out.push(cons(format!("fusion.{branch}.prelu"), vec![dg], 0.25, true));
        out.push(weight(format!("fusion.{branch}.w2"), vec![dg, dg], dg));
        out.push(cons(format!("fusion.{branch}.b2"), vec![dg], 0.0, true));
    }
    for layer in 1..=LSTM_LAYERS {
        let in_dim = if layer == 1 { 2 * dg } else { 2 * h };
        for dir in ["fwd", "bwd"] {
            out.push(weight(
                format!("lstm.{layer}.{dir}.w_ih"),
                vec![in_dim, 4 * h],
                in_dim,
            ));
            out.push(weight(format!("lstm.{layer}.{dir}.w_hh"), vec![h, 4 * h], h));
            out.push(cons(format!("lstm.{layer}.{dir}.bias"), vec![4 * h], 0.0, true));
        }
    }
    out.push(weight("classifier.w1".into(), vec![2 * h, ch], 2 * h));
    out.push(cons("classifier.b1".into(), vec![ch], 0.0, true));
    out.push(cons("classifier.prelu".into(), vec![ch], 0.25, true));
    out.push(weight(
        "classifier.w2".into(),
        vec![ch, config.num_classes],
        ch,
    ));
    out.push(cons("classifier.b2".into(), vec![config.num_classes], 0.0, true));
    out
}

impl Model {
    /// Create the parameter store for a fresh model. Weights draw from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, PReLU slopes start at 0.25,
    /// batch-norm gamma/beta at 1/0 with running stats 0/1.
    pub fn init(
        config: ModelConfig,
        rng: &mut ChaCha12Rng,
    ) -> Result<(Model, ParamStore), ModelError> {
        config.validate()?;
        let mut store = ParamStore::new();
        for spec in spec_entries(&config) {
            let n = spec.shape.iter().product();
            let value = match spec.init {
                Init::UniformFanIn(fan_in) => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
                }
                Init::Const(v) => vec![v; n],
            };
            if spec.trainable {
                store.add(&spec.name, spec.shape, value);
            } else {
                store.add_buffer(&spec.name, spec.shape, value);
            }
        }
        let model = Self::resolve(config, &store)?;
        Ok((model, store))
    }

    /// Bind to an existing store (a loaded checkpoint), validating that
    /// every expected parameter is present with the right shape.
    pub fn from_store(config: ModelConfig, store: &ParamStore) -> Result<Model, ModelError> {
        config.validate()?;
        for spec in spec_entries(&config) {
            let id = store
                .lookup(&spec.name)
                .ok_or_else(|| ModelError::MissingParam(spec.name.clone()))?;
            if store.shape(id) != spec.shape.as_slice() {
                return Err(ModelError::ShapeConflict {
                    name: spec.name,
                    expected: spec.shape,
                    found: store.shape(id).to_vec(),
                });
            }
        }
        Self::resolve(config, store)
    }

    fn resolve(config: ModelConfig, store: &ParamStore) -> Result<Model, ModelError> {
        let get = |name: String| {
            store
                .lookup(&name)
                .ok_or(ModelError::MissingParam(name))
        };
        let branch_ids = |branch: &str, embed: ParamId| -> Result<BranchIds, ModelError> {
            let mut sage = Vec::with_capacity(SAGE_LAYERS);
            for l in 1..=SAGE_LAYERS {
                sage.push(SageLayerIds {
                    weight: get(format!("sage.{branch}.{l}.weight"))?,
                    prelu: get(format!("sage.{branch}.{l}.prelu"))?,
                    gamma: get(format!("sage.{branch}.{l}.bn.gamma"))?,
                    beta: get(format!("sage.{branch}.{l}.bn.beta"))?,
                    run_mean: get(format!("sage.{branch}.{l}.bn.running_mean"))?,
                    run_var: get(format!("sage.{branch}.{l}.bn.running_var"))?,
                });
            }
            Ok(BranchIds { embed, sage })
        };
        let (embed_h, embed_p) = if config.dual_embedding {
            (get("embed.header".into())?, get("embed.payload".into())?)
        } else {
            let shared = get("embed.shared".into())?;
            (shared, shared)
        };
        let filter_ids = |branch: &str| -> Result<FilterIds, ModelError> {
            Ok(FilterIds {
                w1: get(format!("fusion.{branch}.w1"))?,
                b1: get(format!("fusion.{branch}.b1"))?,
                prelu: get(format!("fusion.{branch}.prelu"))?,
                w2: get(format!("fusion.{branch}.w2"))?,
                b2: get(format!("fusion.{branch}.b2"))?,
            })
        };
        let dir_ids = |layer: usize, dir: &str| -> Result<LstmDirIds, ModelError> {
            Ok(LstmDirIds {
                w_ih: get(format!("lstm.{layer}.{dir}.w_ih"))?,
                w_hh: get(format!("lstm.{layer}.{dir}.w_hh"))?,
                bias: get(format!("lstm.{layer}.{dir}.bias"))?,
            })
        };
        let mut lstm = Vec::with_capacity(LSTM_LAYERS);
        for layer in 1..=LSTM_LAYERS {
            lstm.push(LstmLayerIds {
                fwd: dir_ids(layer, "fwd")?,
                bwd: dir_ids(layer, "bwd")?,
            });
        }
        Ok(Model {
            header: branch_ids("header", embed_h)?,
            payload: branch_ids("payload", embed_p)?,
            fusion_header: filter_ids("header")?,
            fusion_payload: filter_ids("payload")?,
            lstm,
            classifier: ClassifierIds {
                w1: get("classifier.w1".into())?,
                b1: get("classifier.b1".into())?,
                prelu: get("classifier.prelu".into())?,
                w2: get("classifier.w2".into())?,
                b2: get("classifier.b2".into())?,
            },
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn branch(&self, branch: Branch) -> &BranchIds {
        match branch {
            Branch::Header => &self.header,
            Branch::Payload => &self.payload,
        }
    }

    /// Look up the embedding row of every node's byte value: a
    /// `|V| x embed_dim` matrix in graph node order.
    pub fn embed(
        &self,
        tape: &mut Tape,
        bind: &mut Binder,
        store: &ParamStore,
        graph: &ByteGraph,
        branch: Branch,
    ) -> Result<TensorId, ModelError> {
        let table = bind.get(tape, store, self.branch(branch).embed);
        let indices: Vec<usize> = graph.nodes().iter().map(|&b| b as usize).collect();
        Ok(tape.gather_rows(table, &indices)?)
    }

    /// Degree-normalized adjacency as a constant: row `v` holds `1/|N(v)|`
    /// at each neighbor, so `matmul` with it computes the neighborhood mean
    /// (a zero row when the node is isolated).
    fn norm_adjacency(&self, tape: &mut Tape, graph: &ByteGraph) -> TensorId {
        let n = graph.num_nodes();
        let mut mat = vec![0.0; n * n];
        for v in 0..n {
            let deg = graph.degree(v);
            if deg == 0 {
                continue;
            }
            let w = 1.0 / deg as f64;
            for u in 0..n {
                if graph.has_edge(v, u) {
                    mat[v * n + u] = w;
                }
            }
        }
        tape.constant(mat, vec![n, n])
    }

    /// One GraphSAGE layer: mean-aggregate each neighborhood, concatenate
    /// with the node's own vector, then linear -> PReLU -> batch norm.
    #[allow(clippy::too_many_arguments)]
    pub fn sage_layer(
        &self,
        tape: &mut Tape,
        bind: &mut Binder,
        store: &ParamStore,
        h: TensorId,
        norm_adj: TensorId,
        branch: Branch,
        layer: usize,
        training: bool,
    ) -> Result<TensorId, ModelError> {
        let ids = self.branch(branch).sage[layer];
        let msg = tape.matmul(norm_adj, h)?;
        let cat = tape.concat(&[h, msg], 1)?;
        let w = bind.get(tape, store, ids.weight);
        let y = tape.matmul(cat, w)?;
        let slope = bind.get(tape, store, ids.prelu);
        let y = tape.prelu(y, slope)?;
        let gamma = bind.get(tape, store, ids.gamma);
        let beta = bind.get(tape, store, ids.beta);
        Ok(tape.batchnorm(y, gamma, beta, ids.run_mean, ids.run_var, training, store)?)
    }

    /// Encode one graph into its branch vector: four SAGE layers, per-node
    /// concatenation of every layer output, then pooling over nodes.
    /// Returns a `1 x graph_dim` row vector.
    pub fn encode_graph(
        &self,
        tape: &mut Tape,
        bind: &mut Binder,
        store: &ParamStore,
        graph: &ByteGraph,
        branch: Branch,
        training: bool,
    ) -> Result<TensorId, ModelError> {
        Ok(self
            .encode_branch_graphs(tape, bind, store, &[graph], branch, training)?
            .pop()
            .expect("one graph in, one vector out"))
    }

    /// Encode every graph of one branch in a single pass. Message passing
    /// stays per graph, but training-mode batch norm pools its statistics
    /// over all nodes of all these graphs: with per-graph statistics the
    /// mean-pooled readout of a normalized layer collapses to the constant
    /// beta and the encoder output carries no signal while training.
    pub fn encode_branch_graphs(
        &self,
        tape: &mut Tape,
        bind: &mut Binder,
        store: &ParamStore,
        graphs: &[&ByteGraph],
        branch: Branch,
        training: bool,
    ) -> Result<Vec<TensorId>, ModelError> {
        if graphs.is_empty() {
            return Ok(Vec::new());
        }
        let ids = &self.branch(branch).sage;
        let mut hs = Vec::with_capacity(graphs.len());
        let mut adjs = Vec::with_capacity(graphs.len());
        for graph in graphs {
            hs.push(self.embed(tape, bind, store, graph, branch)?);
            adjs.push(self.norm_adjacency(tape, graph));
        }
        let mut outs_per_graph: Vec<Vec<TensorId>> = vec![Vec::with_capacity(SAGE_LAYERS); graphs.len()];
        for layer_ids in ids.iter().take(SAGE_LAYERS) {
            let w = bind.get(tape, store, layer_ids.weight);
            let slope = bind.get(tape, store, layer_ids.prelu);
            let mut ys = Vec::with_capacity(graphs.len());
            for (h, adj) in hs.iter().zip(&adjs) {
                let msg = tape.matmul(*adj, *h)?;
                let cat = tape.concat(&[*h, msg], 1)?;
                let y = tape.matmul(cat, w)?;
                ys.push(tape.prelu(y, slope)?);
            }
            let stacked = if ys.len() == 1 {
                ys[0]
            } else {
                tape.concat(&ys, 0)?
            };
            let gamma = bind.get(tape, store, layer_ids.gamma);
            let beta = bind.get(tape, store, layer_ids.beta);
            let normed = tape.batchnorm(
                stacked,
                gamma,
                beta,
                layer_ids.run_mean,
                layer_ids.run_var,
                training,
                store,
            )?;
            let mut offset = 0;
            for (gi, graph) in graphs.iter().enumerate() {
                let v = graph.num_nodes();
                let h_g = if graphs.len() == 1 {
                    normed
                } else {
                    tape.narrow(normed, 0, offset, v)?
                };
                offset += v;
                hs[gi] = h_g;
                outs_per_graph[gi].push(h_g);
            }
        }
        let mut encoded = Vec::with_capacity(graphs.len());
        for outs in outs_per_graph {
            let jkn = tape.concat(&outs, 1)?;
            let pooled = match self.config.pooling {
                Pooling::Mean => tape.reduce_mean(jkn, 0)?,
                Pooling::Sum => tape.reduce_sum(jkn, 0)?,
                Pooling::Max => tape.reduce_max(jkn, 0)?,
            };
            encoded.push(tape.reshape(pooled, vec![1, self.config.graph_dim()])?);
        }
        Ok(encoded)
    }

    fn gate(
        &self,
        tape: &mut Tape,
        bind: &mut Binder,
        store: &ParamStore,
        g: TensorId,
        ids: FilterIds,
    ) -> Result<TensorId, ModelError> {
        let w1 = bind.get(tape, store, ids.w1);
        let b1 = bind.get(tape, store, ids.b1);
        let u = tape.matmul(g, w1)?;
        let u = tape.add(u, b1)?;
        let slope = bind.get(tape, store, ids.prelu);
        let u = tape.prelu(u, slope)?;
        let w2 = bind.get(tape, store, ids.w2);
        let b2 = bind.get(tape, store, ids.b2);
        let u = tape.matmul(u, w2)?;
        let u = tape.add(u, b2)?;
        Ok(tape.sigmoid(u))
    }

    /// Cross-gated fusion: a sigmoid gate computed from each branch filters
    /// the *other* branch's graph vector, and the two filtered vectors are
    /// concatenated into the packet representation.
    pub fn cross_gated_fuse(
        &self,
        tape: &mut Tape,
        bind: &mut Binder,
        store: &ParamStore,
        g_header: TensorId,
        g_payload: TensorId,
    ) -> Result<TensorId, ModelError> {
        let s_h = self.gate(tape, bind, store, g_header, self.fusion_header)?;
        let s_p = self.gate(tape, bind, store, g_payload, self.fusion_payload)?;
        let filtered_payload = tape.mul(s_h, g_payload)?;
        let filtered_header = tape.mul(s_p, g_header)?;
        Ok(tape.concat(&[filtered_payload, filtered_header], 1)?)
    }

    fn lstm_direction(
        &self,
        tape: &mut Tape,
        bind: &mut Binder,
        store: &ParamStore,
        xs: &[TensorId],
        ids: LstmDirIds,
        reverse: bool,
    ) -> Result<Vec<TensorId>, ModelError> {
        let hdim = self.config.lstm_hidden;
        let w_ih = bind.get(tape, store, ids.w_ih);
        let w_hh = bind.get(tape, store, ids.w_hh);
        let bias = bind.get(tape, store, ids.bias);
        let mut h = tape.constant(vec![0.0; hdim], vec![1, hdim]);
        let mut c = tape.constant(vec![0.0; hdim], vec![1, hdim]);
        let n = xs.len();
        let mut out: Vec<Option<TensorId>> = vec![None; n];
        let order: Vec<usize> = if reverse {
            (0..n).rev().collect()
        } else {
            (0..n).collect()
        };
        for t in order {
            let xw = tape.matmul(xs[t], w_ih)?;
            let hw = tape.matmul(h, w_hh)?;
            let pre = tape.add(xw, hw)?;
            let gates = tape.add(pre, bias)?;
            let i_gate = tape.narrow(gates, 1, 0, hdim)?;
            let i_gate = tape.sigmoid(i_gate);
            let f_gate = tape.narrow(gates, 1, hdim, hdim)?;
            let f_gate = tape.sigmoid(f_gate);
            let g_gate = tape.narrow(gates, 1, 2 * hdim, hdim)?;
            let g_gate = tape.tanh(g_gate);
            let o_gate = tape.narrow(gates, 1, 3 * hdim, hdim)?;
            let o_gate = tape.sigmoid(o_gate);
            let fc = tape.mul(f_gate, c)?;
            let ig = tape.mul(i_gate, g_gate)?;
            c = tape.add(fc, ig)?;
            let ct = tape.tanh(c);
            h = tape.mul(o_gate, ct)?;
            out[t] = Some(h);
        }
        Ok(out.into_iter().map(|o| o.expect("state per step")).collect())
    }

    /// Two-layer bidirectional LSTM over the packet vectors; the sequence
    /// summary is the last forward state concatenated with the first
    /// backward state of the top layer.
    fn bilstm(
        &self,
        tape: &mut Tape,
        bind: &mut Binder,
        store: &ParamStore,
        mut xs: Vec<TensorId>,
    ) -> Result<TensorId, ModelError> {
        let n = xs.len();
        let mut summary = None;
        for (l, layer) in self.lstm.iter().enumerate() {
            let fwd = self.lstm_direction(tape, bind, store, &xs, layer.fwd, false)?;
            let bwd = self.lstm_direction(tape, bind, store, &xs, layer.bwd, true)?;
            if l + 1 == self.lstm.len() {
                summary = Some(tape.concat(&[fwd[n - 1], bwd[0]], 1)?);
            } else {
                let mut next = Vec::with_capacity(n);
                for t in 0..n {
                    next.push(tape.concat(&[fwd[t], bwd[t]], 1)?);
                }
                xs = next;
            }
        }
        Ok(summary.expect("at least one LSTM layer"))
    }

    /// Full per-segment forward pass to class logits (shape `[num_classes]`).
    pub fn forward_segment(
        &self,
        tape: &mut Tape,
        bind: &mut Binder,
        store: &ParamStore,
        graphs: &[(ByteGraph, ByteGraph)],
        phase: &mut Phase<'_>,
    ) -> Result<TensorId, ModelError> {
        if graphs.is_empty() {
            return Err(ModelError::EmptySegment);
        }
        let training = phase.is_train();
        let headers: Vec<&ByteGraph> = graphs.iter().map(|(h, _)| h).collect();
        let payloads: Vec<&ByteGraph> = graphs.iter().map(|(_, p)| p).collect();
        let g_hs = self.encode_branch_graphs(tape, bind, store, &headers, Branch::Header, training)?;
        let g_ps = self.encode_branch_graphs(tape, bind, store, &payloads, Branch::Payload, training)?;
        let mut zs = Vec::with_capacity(graphs.len());
        for (g_h, g_p) in g_hs.into_iter().zip(g_ps) {
            let mut z = self.cross_gated_fuse(tape, bind, store, g_h, g_p)?;
            if let Phase::Train { rng } = phase {
                z = tape.dropout(z, self.config.dropout, true, rng)?;
            }
            zs.push(z);
        }
        let mut repr = self.bilstm(tape, bind, store, zs)?;
        if let Phase::Train { rng } = phase {
            repr = tape.dropout(repr, self.config.dropout, true, rng)?;
        }
        let w1 = bind.get(tape, store, self.classifier.w1);
        let b1 = bind.get(tape, store, self.classifier.b1);
        let hidden = tape.matmul(repr, w1)?;
        let hidden = tape.add(hidden, b1)?;
        let slope = bind.get(tape, store, self.classifier.prelu);
        let hidden = tape.prelu(hidden, slope)?;
        let w2 = bind.get(tape, store, self.classifier.w2);
        let b2 = bind.get(tape, store, self.classifier.b2);
        let logits = tape.matmul(hidden, w2)?;
        let logits = tape.add(logits, b2)?;
        Ok(tape.reshape(logits, vec![self.config.num_classes])?)
    }

    /// Softmax cross entropy of segment logits against the true label.
    pub fn loss(
        &self,
        tape: &mut Tape,
        logits: TensorId,
        label: usize,
    ) -> Result<TensorId, ModelError> {
        Ok(tape.softmax_cross_entropy(logits, label)?)
    }
}

/// Softmax of an already-evaluated logit vector; used for prediction output.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
