//! The autodiff tape: forward ops append nodes, backward walks them in
//! reverse. Node ids are created in topological order by construction, so
//! the reverse pass is a single backwards sweep over the node vector.

use rand::RngExt;
use rand_chacha::ChaCha12Rng;

use super::store::{ParamId, ParamStore};
use super::{numel, Shape, TensorError};

/// Handle to one value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug)]
enum Op {
    Leaf {
        param: Option<ParamId>,
    },
    Matmul {
        a: TensorId,
        b: TensorId,
    },
    Add {
        a: TensorId,
        b: TensorId,
    },
    Sub {
        a: TensorId,
        b: TensorId,
    },
    Mul {
        a: TensorId,
        b: TensorId,
    },
    Scale {
        a: TensorId,
        factor: f64,
    },
    Concat {
        inputs: Vec<TensorId>,
        axis: usize,
    },
    Narrow {
        a: TensorId,
        axis: usize,
        start: usize,
    },
    Reshape {
        a: TensorId,
    },
    ReduceMean {
        a: TensorId,
        axis: usize,
    },
    ReduceSum {
        a: TensorId,
        axis: usize,
    },
    ReduceMax {
        a: TensorId,
        axis: usize,
        argmax: Vec<usize>,
    },
    Sigmoid {
        a: TensorId,
    },
    Tanh {
        a: TensorId,
    },
    PRelu {
        x: TensorId,
        slope: TensorId,
    },
    Dropout {
        a: TensorId,
        mask: Vec<f64>,
    },
    BatchNorm {
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    SoftmaxCrossEntropy {
        logits: TensorId,
        label: usize,
        probs: Vec<f64>,
    },
    Gather {
        table: TensorId,
        indices: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node {
    shape: Shape,
    value: Vec<f64>,
    op: Op,
}

/// Pending running-statistics update produced by a training-mode batch norm.
#[derive(Debug, Clone)]
pub(crate) struct BnUpdate {
    pub id: ParamId,
    pub value: Vec<f64>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bn_updates: Vec<BnUpdate>,
}

fn matmul_kern(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            let brow = &b[l * n..(l + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_kern(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// `rhs` broadcasts into `lhs` when its shape is a suffix of `lhs`'s shape.
fn broadcast_ok(lhs: &[usize], rhs: &[usize]) -> bool {
    rhs.len() <= lhs.len() && lhs[lhs.len() - rhs.len()..] == *rhs
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn value(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].value
    }

    fn push(&mut self, shape: Shape, value: Vec<f64>, op: Op) -> TensorId {
        debug_assert_eq!(numel(&shape), value.len());
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node { shape, value, op });
        id
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, value: Vec<f64>, shape: Shape) -> TensorId {
        assert_eq!(numel(&shape), value.len());
        self.push(shape, value, Op::Leaf { param: None })
    }

    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.push(vec![], vec![v], Op::Leaf { param: None })
    }

    /// Register a trainable parameter (or buffer) as a leaf; backward
    /// accumulates into the store's gradient slot for `id`.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> TensorId {
        self.push(
            store.shape(id).to_vec(),
            store.value(id).to_vec(),
            Op::Leaf { param: Some(id) },
        )
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let value = matmul_kern(self.value(a), self.value(b), m, k, n);
        Ok(self.push(vec![m, n], value, Op::Matmul { a, b }))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.zip_op("add", a, b, |x, y| x + y, |a, b| Op::Add { a, b })
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op: "sub",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x - y)
            .collect();
        Ok(self.push(sa.to_vec(), value, Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.zip_op("mul", a, b, |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    fn zip_op(
        &mut self,
        name: &'static str,
        a: TensorId,
        b: TensorId,
        f: impl Fn(f64, f64) -> f64,
        op: impl Fn(TensorId, TensorId) -> Op,
    ) -> Result<TensorId, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if !broadcast_ok(&sa, &sb) {
            return Err(TensorError::ShapeMismatch {
                op: name,
                lhs: sa,
                rhs: sb,
            });
        }
        let bvals = self.value(b);
        let blen = bvals.len().max(1);
        let value: Vec<f64> = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bvals[i % blen]))
            .collect();
        Ok(self.push(sa, value, op(a, b)))
    }

    pub fn scale(&mut self, a: TensorId, factor: f64) -> TensorId {
        let value = self.value(a).iter().map(|x| x * factor).collect();
        self.push(self.shape(a).to_vec(), value, Op::Scale { a, factor })
    }

    pub fn concat(&mut self, inputs: &[TensorId], axis: usize) -> Result<TensorId, TensorError> {
        if inputs.is_empty() {
            return Err(TensorError::EmptyInput { op: "concat" });
        }
        let first = self.shape(inputs[0]).to_vec();
        if axis >= first.len() {
            return Err(TensorError::AxisOutOfRange {
                op: "concat",
                axis,
                shape: first,
            });
        }
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for &t in inputs {
            let s = self.shape(t);
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(d, (x, y))| d != axis && x != y)
            {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: first,
                    rhs: s.to_vec(),
                });
            }
            out_shape[axis] += s[axis];
        }
        // Treat each tensor as (outer, axis_len * inner) blocks.
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut value = vec![0.0; numel(&out_shape)];
        let out_row = out_shape[axis] * inner;
        let mut col = 0;
        for &t in inputs {
            let alen = self.shape(t)[axis];
            let block = alen * inner;
            let vals = self.value(t);
            for o in 0..outer {
                value[o * out_row + col..o * out_row + col + block]
                    .copy_from_slice(&vals[o * block..(o + 1) * block]);
            }
            col += block;
        }
        Ok(self.push(
            out_shape,
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        ))
    }

    pub fn narrow(
        &mut self,
        a: TensorId,
        axis: usize,
        start: usize,
        len: usize,
    ) -> Result<TensorId, TensorError> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() {
            return Err(TensorError::AxisOutOfRange {
                op: "narrow",
                axis,
                shape: s,
            });
        }
        if start + len > s[axis] {
            return Err(TensorError::ShapeMismatch {
                op: "narrow",
                lhs: s,
                rhs: vec![start, len],
            });
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let mut out_shape = s.clone();
        out_shape[axis] = len;
        let vals = self.value(a);
        let mut value = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            let base = o * s[axis] * inner + start * inner;
            value.extend_from_slice(&vals[base..base + len * inner]);
        }
        Ok(self.push(out_shape, value, Op::Narrow { a, axis, start }))
    }

    pub fn reshape(&mut self, a: TensorId, shape: Shape) -> Result<TensorId, TensorError> {
        if numel(&shape) != numel(self.shape(a)) {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(a).to_vec(),
                rhs: shape,
            });
        }
        let value = self.value(a).to_vec();
        Ok(self.push(shape, value, Op::Reshape { a }))
    }

    pub fn reduce_mean(&mut self, a: TensorId, axis: usize) -> Result<TensorId, TensorError> {
        self.reduce(a, axis, Reduction::Mean)
    }

    pub fn reduce_sum(&mut self, a: TensorId, axis: usize) -> Result<TensorId, TensorError> {
        self.reduce(a, axis, Reduction::Sum)
    }

    pub fn reduce_max(&mut self, a: TensorId, axis: usize) -> Result<TensorId, TensorError> {
        self.reduce(a, axis, Reduction::Max)
    }

    fn reduce(
        &mut self,
        a: TensorId,
        axis: usize,
        kind: Reduction,
    ) -> Result<TensorId, TensorError> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() {
            return Err(TensorError::AxisOutOfRange {
                op: kind.name(),
                axis,
                shape: s,
            });
        }
        let outer: usize = s[..axis].iter().product();
        let alen = s[axis];
        let inner: usize = s[axis + 1..].iter().product();
        let mut out_shape = s.clone();
        out_shape.remove(axis);
        let vals = self.value(a);
        let mut value = vec![0.0; outer * inner];
        let mut argmax = vec![0usize; if matches!(kind, Reduction::Max) { outer * inner } else { 0 }];
        for o in 0..outer {
            for i in 0..inner {
                let mut acc = match kind {
                    Reduction::Max => f64::NEG_INFINITY,
                    _ => 0.0,
                };
                let mut arg = 0usize;
                for j in 0..alen {
                    let v = vals[o * alen * inner + j * inner + i];
                    match kind {
                        Reduction::Max => {
                            if v > acc {
                                acc = v;
                                arg = j;
                            }
                        }
                        _ => acc += v,
                    }
                }
                let out = match kind {
                    Reduction::Mean => acc / alen as f64,
                    _ => acc,
                };
                value[o * inner + i] = out;
                if matches!(kind, Reduction::Max) {
                    argmax[o * inner + i] = arg;
                }
            }
        }
        let op = match kind {
            Reduction::Mean => Op::ReduceMean { a, axis },
            Reduction::Sum => Op::ReduceSum { a, axis },
            Reduction::Max => Op::ReduceMax { a, axis, argmax },
        };
        Ok(self.push(out_shape, value, op))
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let value = self
            .value(a)
            .iter()
            .map(|&x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        self.push(self.shape(a).to_vec(), value, Op::Sigmoid { a })
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let value = self.value(a).iter().map(|&x| x.tanh()).collect();
        self.push(self.shape(a).to_vec(), value, Op::Tanh { a })
    }

    /// Parametric ReLU with one learnable slope per channel; the channel is
    /// the last dimension of `x`.
    pub fn prelu(&mut self, x: TensorId, slope: TensorId) -> Result<TensorId, TensorError> {
        let sx = self.shape(x).to_vec();
        let ss = self.shape(slope).to_vec();
        let channels = *sx.last().unwrap_or(&1);
        if ss != vec![channels] {
            return Err(TensorError::ShapeMismatch {
                op: "prelu",
                lhs: sx,
                rhs: ss,
            });
        }
        let slopes = self.value(slope);
        let value: Vec<f64> = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| if v >= 0.0 { v } else { slopes[i % channels] * v })
            .collect();
        Ok(self.push(sx, value, Op::PRelu { x, slope }))
    }

    /// Inverted dropout: in training mode each entry survives with
    /// probability `1 - rate` and is scaled by `1/(1-rate)`; in eval mode
    /// this is the identity.
    pub fn dropout(
        &mut self,
        a: TensorId,
        rate: f64,
        training: bool,
        rng: &mut ChaCha12Rng,
    ) -> Result<TensorId, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::BadDropoutRate(rate));
        }
        if !training || rate == 0.0 {
            let value = self.value(a).to_vec();
            let mask = vec![1.0; value.len()];
            return Ok(self.push(self.shape(a).to_vec(), value, Op::Dropout { a, mask }));
        }
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
            .collect();
        let value = self
            .value(a)
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        Ok(self.push(self.shape(a).to_vec(), value, Op::Dropout { a, mask }))
    }

    /// Batch normalization over axis 0 of a rank-2 input, per channel.
    ///
    /// Normalization always uses the running statistics, so a sample's
    /// output never depends on what it is batched with; training mode
    /// additionally measures the batch statistics (biased variance) and
    /// queues an EMA update of the running stats (momentum 0.1).
    #[allow(clippy::too_many_arguments)]
    pub fn batchnorm(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        running_mean: ParamId,
        running_var: ParamId,
        training: bool,
        store: &ParamStore,
    ) -> Result<TensorId, TensorError> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(TensorError::BadRank {
                op: "batchnorm",
                expected: 2,
                shape: s,
            });
        }
        let (rows, cols) = (s[0], s[1]);
        for &p in &[gamma, beta] {
            if self.shape(p) != [cols] {
                return Err(TensorError::ShapeMismatch {
                    op: "batchnorm",
                    lhs: s,
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let mean = self.pending_or_store(running_mean, store);
        let var = self.pending_or_store(running_var, store);
        if training {
            let vals = self.value(x);
            let mut batch_mean = vec![0.0; cols];
            let mut batch_var = vec![0.0; cols];
            for r in 0..rows {
                for c in 0..cols {
                    batch_mean[c] += vals[r * cols + c];
                }
            }
            batch_mean.iter_mut().for_each(|m| *m /= rows as f64);
            for r in 0..rows {
                for c in 0..cols {
                    let d = vals[r * cols + c] - batch_mean[c];
                    batch_var[c] += d * d;
                }
            }
            batch_var.iter_mut().for_each(|v| *v /= rows as f64);
            let new_mean: Vec<f64> = mean
                .iter()
                .zip(&batch_mean)
                .map(|(r, b)| (1.0 - BN_MOMENTUM) * r + BN_MOMENTUM * b)
                .collect();
            let new_var: Vec<f64> = var
                .iter()
                .zip(&batch_var)
                .map(|(r, b)| (1.0 - BN_MOMENTUM) * r + BN_MOMENTUM * b)
                .collect();
            self.bn_updates.push(BnUpdate {
                id: running_mean,
                value: new_mean,
            });
            self.bn_updates.push(BnUpdate {
                id: running_var,
                value: new_var,
            });
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let vals = self.value(x);
        let mut xhat = vec![0.0; vals.len()];
        for r in 0..rows {
            for c in 0..cols {
                xhat[r * cols + c] = (vals[r * cols + c] - mean[c]) * inv_std[c];
            }
        }
        let g = self.value(gamma);
        let b = self.value(beta);
        let value: Vec<f64> = xhat
            .iter()
            .enumerate()
            .map(|(i, &xh)| g[i % cols] * xh + b[i % cols])
            .collect();
        Ok(self.push(
            s,
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    fn pending_or_store(&self, id: ParamId, store: &ParamStore) -> Vec<f64> {
        self.bn_updates
            .iter()
            .rev()
            .find(|u| u.id == id)
            .map(|u| u.value.clone())
            .unwrap_or_else(|| store.value(id).to_vec())
    }

    /// Drain the running-statistic updates queued by training-mode batch
    /// norms, in execution order.
    pub fn take_bn_updates(&mut self) -> Vec<(ParamId, Vec<f64>)> {
        std::mem::take(&mut self.bn_updates)
            .into_iter()
            .map(|u| (u.id, u.value))
            .collect()
    }

    /// Numerically stable softmax cross entropy against a single label;
    /// returns a scalar.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: TensorId,
        label: usize,
    ) -> Result<TensorId, TensorError> {
        let vals = self.value(logits).to_vec();
        let classes = vals.len();
        if label >= classes {
            return Err(TensorError::LabelOutOfRange { label, classes });
        }
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = vals.iter().map(|v| (v - max).exp()).sum();
        let log_sum_exp = max + sum_exp.ln();
        let loss = log_sum_exp - vals[label];
        let probs: Vec<f64> = vals.iter().map(|v| (v - max).exp() / sum_exp).collect();
        Ok(self.push(
            vec![],
            vec![loss],
            Op::SoftmaxCrossEntropy {
                logits,
                label,
                probs,
            },
        ))
    }

    /// Row lookup into a rank-2 table; backward scatter-adds into the table.
    pub fn gather_rows(
        &mut self,
        table: TensorId,
        indices: &[usize],
    ) -> Result<TensorId, TensorError> {
        let s = self.shape(table).to_vec();
        if s.len() != 2 {
            return Err(TensorError::BadRank {
                op: "gather_rows",
                expected: 2,
                shape: s,
            });
        }
        let (rows, cols) = (s[0], s[1]);
        let vals = self.value(table);
        let mut value = Vec::with_capacity(indices.len() * cols);
        for &ix in indices {
            if ix >= rows {
                return Err(TensorError::GatherOutOfRange { index: ix, rows });
            }
            value.extend_from_slice(&vals[ix * cols..(ix + 1) * cols]);
        }
        Ok(self.push(
            vec![indices.len(), cols],
            value,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Reverse pass from a scalar loss. Gradients of parameter leaves are
    /// accumulated (`+=`) into the store; calling backward twice without
    /// zeroing doubles them.
    pub fn backward(&self, loss: TensorId, store: &mut ParamStore) -> Result<(), TensorError> {
        if numel(self.shape(loss)) != 1 {
            return Err(TensorError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(idx, &g, &mut grads, store);
        }
        Ok(())
    }

    fn accum(grads: &mut [Option<Vec<f64>>], id: TensorId, len: usize, f: impl Fn(&mut [f64])) {
        let slot = grads[id.0].get_or_insert_with(|| vec![0.0; len]);
        f(slot);
    }

    fn propagate(
        &self,
        idx: usize,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        store: &mut ParamStore,
    ) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf { param } => {
                if let Some(pid) = param {
                    if store.is_trainable(*pid) {
                        for (dst, src) in store.grad_mut(*pid).iter_mut().zip(g) {
                            *dst += src;
                        }
                    }
                }
            }
            Op::Matmul { a, b } => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                let bt = transpose_kern(self.value(*b), k, n);
                let da = matmul_kern(g, &bt, m, n, k);
                let at = transpose_kern(self.value(*a), m, k);
                let db = matmul_kern(&at, g, k, m, n);
                Self::accum(grads, *a, m * k, |s| {
                    s.iter_mut().zip(&da).for_each(|(d, v)| *d += v)
                });
                Self::accum(grads, *b, k * n, |s| {
                    s.iter_mut().zip(&db).for_each(|(d, v)| *d += v)
                });
            }
            Op::Add { a, b } => {
                let alen = self.value(*a).len();
                let blen = self.value(*b).len();
                Self::accum(grads, *a, alen, |s| {
                    s.iter_mut().zip(g).for_each(|(d, v)| *d += v)
                });
                Self::accum(grads, *b, blen, |s| {
                    for (i, v) in g.iter().enumerate() {
                        s[i % blen] += v;
                    }
                });
            }
            Op::Sub { a, b } => {
                let len = g.len();
                Self::accum(grads, *a, len, |s| {
                    s.iter_mut().zip(g).for_each(|(d, v)| *d += v)
                });
                Self::accum(grads, *b, len, |s| {
                    s.iter_mut().zip(g).for_each(|(d, v)| *d -= v)
                });
            }
            Op::Mul { a, b } => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let blen = bv.len();
                Self::accum(grads, *a, av.len(), |s| {
                    for (i, v) in g.iter().enumerate() {
                        s[i] += v * bv[i % blen];
                    }
                });
                Self::accum(grads, *b, blen, |s| {
                    for (i, v) in g.iter().enumerate() {
                        s[i % blen] += v * av[i];
                    }
                });
            }
            Op::Scale { a, factor } => {
                let f = *factor;
                Self::accum(grads, *a, g.len(), |s| {
                    s.iter_mut().zip(g).for_each(|(d, v)| *d += v * f)
                });
            }
            Op::Concat { inputs, axis } => {
                let out_shape = &node.shape;
                let outer: usize = out_shape[..*axis].iter().product();
                let inner: usize = out_shape[*axis + 1..].iter().product();
                let out_row = out_shape[*axis] * inner;
                let mut col = 0;
                for &t in inputs {
                    let alen = self.shape(t)[*axis];
                    let block = alen * inner;
                    let tlen = self.value(t).len();
                    Self::accum(grads, t, tlen, |s| {
                        for o in 0..outer {
                            let src = &g[o * out_row + col..o * out_row + col + block];
                            s[o * block..(o + 1) * block]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(d, v)| *d += v);
                        }
                    });
                    col += block;
                }
            }
            Op::Narrow { a, axis, start } => {
                let s = self.shape(*a).to_vec();
                let outer: usize = s[..*axis].iter().product();
                let inner: usize = s[*axis + 1..].iter().product();
                let len = node.shape[*axis];
                let alen = self.value(*a).len();
                Self::accum(grads, *a, alen, |slot| {
                    for o in 0..outer {
                        let dst = o * s[*axis] * inner + start * inner;
                        let src = o * len * inner;
                        slot[dst..dst + len * inner]
                            .iter_mut()
                            .zip(&g[src..src + len * inner])
                            .for_each(|(d, v)| *d += v);
                    }
                });
            }
            Op::Reshape { a } => {
                Self::accum(grads, *a, g.len(), |s| {
                    s.iter_mut().zip(g).for_each(|(d, v)| *d += v)
                });
            }
            Op::ReduceMean { a, axis } | Op::ReduceSum { a, axis } => {
                let s = self.shape(*a).to_vec();
                let outer: usize = s[..*axis].iter().product();
                let alen = s[*axis];
                let inner: usize = s[*axis + 1..].iter().product();
                let factor = if matches!(node.op, Op::ReduceMean { .. }) {
                    1.0 / alen as f64
                } else {
                    1.0
                };
                Self::accum(grads, *a, outer * alen * inner, |slot| {
                    for o in 0..outer {
                        for j in 0..alen {
                            for i in 0..inner {
                                slot[o * alen * inner + j * inner + i] +=
                                    g[o * inner + i] * factor;
                            }
                        }
                    }
                });
            }
            Op::ReduceMax { a, axis, argmax } => {
                let s = self.shape(*a).to_vec();
                let outer: usize = s[..*axis].iter().product();
                let alen = s[*axis];
                let inner: usize = s[*axis + 1..].iter().product();
                Self::accum(grads, *a, outer * alen * inner, |slot| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let j = argmax[o * inner + i];
                            slot[o * alen * inner + j * inner + i] += g[o * inner + i];
                        }
                    }
                });
            }
            Op::Sigmoid { a } => {
                let y = &node.value;
                Self::accum(grads, *a, g.len(), |s| {
                    for (i, v) in g.iter().enumerate() {
                        s[i] += v * y[i] * (1.0 - y[i]);
                    }
                });
            }
            Op::Tanh { a } => {
                let y = &node.value;
                Self::accum(grads, *a, g.len(), |s| {
                    for (i, v) in g.iter().enumerate() {
                        s[i] += v * (1.0 - y[i] * y[i]);
                    }
                });
            }
            Op::PRelu { x, slope } => {
                let xv = self.value(*x);
                let sv = self.value(*slope);
                let channels = sv.len();
                Self::accum(grads, *x, xv.len(), |s| {
                    for (i, v) in g.iter().enumerate() {
                        s[i] += v * if xv[i] >= 0.0 { 1.0 } else { sv[i % channels] };
                    }
                });
                Self::accum(grads, *slope, channels, |s| {
                    for (i, v) in g.iter().enumerate() {
                        if xv[i] < 0.0 {
                            s[i % channels] += v * xv[i];
                        }
                    }
                });
            }
            Op::Dropout { a, mask } => {
                Self::accum(grads, *a, g.len(), |s| {
                    for (i, v) in g.iter().enumerate() {
                        s[i] += v * mask[i];
                    }
                });
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let cols = self.shape(*gamma)[0];
                let gv = self.value(*gamma);
                Self::accum(grads, *gamma, cols, |s| {
                    for (i, v) in g.iter().enumerate() {
                        s[i % cols] += v * xhat[i];
                    }
                });
                Self::accum(grads, *beta, cols, |s| {
                    for (i, v) in g.iter().enumerate() {
                        s[i % cols] += v;
                    }
                });
                // The normalizer is held constant (running stats), so x only
                // enters through the affine map.
                Self::accum(grads, *x, xhat.len(), |s| {
                    for (i, v) in g.iter().enumerate() {
                        let c = i % cols;
                        s[i] += v * gv[c] * inv_std[c];
                    }
                });
            }
            Op::SoftmaxCrossEntropy {
                logits,
                label,
                probs,
            } => {
                let gs = g[0];
                Self::accum(grads, *logits, probs.len(), |s| {
                    for (i, p) in probs.iter().enumerate() {
                        let onehot = if i == *label { 1.0 } else { 0.0 };
                        s[i] += gs * (p - onehot);
                    }
                });
            }
            Op::Gather { table, indices } => {
                let cols = self.shape(*table)[1];
                let tlen = self.value(*table).len();
                Self::accum(grads, *table, tlen, |s| {
                    for (row, &ix) in indices.iter().enumerate() {
                        let src = &g[row * cols..(row + 1) * cols];
                        s[ix * cols..(ix + 1) * cols]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, v)| *d += v);
                    }
                });
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Reduction {
    Mean,
    Sum,
    Max,
}

impl Reduction {
    fn name(self) -> &'static str {
        match self {
            Reduction::Mean => "reduce_mean",
            Reduction::Sum => "reduce_sum",
            Reduction::Max => "reduce_max",
        }
    }
}
