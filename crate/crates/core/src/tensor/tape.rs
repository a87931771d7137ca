use std::collections::BTreeMap;
use std::sync::Arc;

use super::params::{Gradients, ParamStore};
use super::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Assignment of rows to `n` segments (e.g. edges to destination nodes).
#[derive(Debug, Clone, PartialEq)]
pub struct Segments {
    ids: Arc<[usize]>,
    n: usize,
}

impl Segments {
    pub fn new(ids: Arc<[usize]>, n: usize) -> Self {
        assert!(ids.iter().all(|&i| i < n), "segment id out of range");
        Self { ids, n }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn n_segments(&self) -> usize {
        self.n
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n];
        for &i in self.ids.iter() {
            c[i] += 1;
        }
        c
    }
}

const NO_ARGMAX: usize = usize::MAX;

enum Op {
    Leaf,
    Param(String),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    MulScalar(Var, Var),
    MulRow(Var, Var),
    StandardizeCols(Var, Vec<f64>),
    Relu(Var),
    LeakyRelu(Var, f64),
    Gather(Var, Arc<[usize]>),
    SegmentSum(Var, Segments),
    SegmentMean(Var, Segments),
    SegmentMax(Var, Vec<usize>),
    SegmentSoftmax(Var, Segments),
    SoftmaxRows(Var),
    Concat(Vec<Var>),
    L2Normalize(Var, Vec<f64>),
    Cosine(Var, Var),
    HeadDot(Var, Var, usize),
    HeadScale(Var, Var, usize),
    Mse(Var, Arc<[f64]>),
    Sum(Var),
    Mean(Var),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf | Param(_) => vec![],
            MatMul(a, b) | Add(a, b) | AddRow(a, b) | MulScalar(a, b) | MulRow(a, b) | Cosine(a, b) => vec![*a, *b],
            HeadDot(a, b, _) | HeadScale(a, b, _) => vec![*a, *b],
            Scale(a, _) | AddConst(a) | StandardizeCols(a, _) | Relu(a) | LeakyRelu(a, _) | Gather(a, _) => vec![*a],
            SegmentSum(a, _) | SegmentMean(a, _) | SegmentMax(a, _) | SegmentSoftmax(a, _) | SoftmaxRows(a) => vec![*a],
            L2Normalize(a, _) | Mse(a, _) | Sum(a) | Mean(a) => vec![*a],
            Concat(vs) => vs.clone(),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    released: bool,
}

/// Per-node release points for replaying a recorded forward pass without
/// keeping dead intermediates.
#[derive(Debug, Clone)]
pub struct ReleasePlan {
    /// `frees[k]`: nodes whose last consumer is node `k`.
    frees: Vec<Vec<usize>>,
}

/// Records a forward computation for one backward pass.
///
/// Values live on the tape until it is dropped, unless the tape replays a
/// [`ReleasePlan`]; [`Tape::bytes`] reports the footprint of everything
/// still held and [`Tape::peak_live_bytes`] the high-water mark.
pub struct Tape {
    nodes: Vec<Node>,
    empty_max_segments: usize,
    kink_margin: f64,
    min_spread: f64,
    plan: Option<Arc<ReleasePlan>>,
    live_bytes: usize,
    peak_live_bytes: usize,
}

impl Default for Tape {
    fn default() -> Self {
        Self {
            nodes: Vec::new(),
            empty_max_segments: 0,
            kink_margin: f64::INFINITY,
            min_spread: f64::INFINITY,
            plan: None,
            live_bytes: 0,
            peak_live_bytes: 0,
        }
    }
}

fn shape_err(op: &str, detail: String) -> ! {
    panic!("{op}: shape mismatch: {detail}")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.live_bytes += value.bytes();
        self.peak_live_bytes = self.peak_live_bytes.max(self.live_bytes);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            released: false,
        });
        let k = self.nodes.len() - 1;
        if let Some(plan) = self.plan.clone() {
            for &j in plan.frees.get(k).map(Vec::as_slice).unwrap_or(&[]) {
                let node = &mut self.nodes[j];
                self.live_bytes -= node.value.bytes();
                node.value = Tensor::zeros(&[0]);
                node.released = true;
            }
        }
        Var(k)
    }

    /// A tape that frees each value right after its last consumer in the
    /// pass `plan` was derived from. Gradients are unavailable.
    pub fn with_plan(plan: Arc<ReleasePlan>) -> Self {
        Self {
            plan: Some(plan),
            ..Self::default()
        }
    }

    /// Release points of the pass recorded so far; `keep` stays alive.
    pub fn release_plan(&self, keep: &[Var]) -> ReleasePlan {
        let n = self.nodes.len();
        let mut last: Vec<usize> = (0..n).collect();
        for (k, node) in self.nodes.iter().enumerate() {
            for v in node.op.inputs() {
                last[v.0] = last[v.0].max(k);
            }
        }
        for v in keep {
            last[v.0] = usize::MAX;
        }
        let mut frees = vec![Vec::new(); n];
        for (j, &k) in last.iter().enumerate() {
            if k != usize::MAX {
                frees[k].push(j);
            }
        }
        ReleasePlan { frees }
    }

    /// Largest number of bytes held at once.
    pub fn peak_live_bytes(&self) -> usize {
        self.peak_live_bytes
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        assert!(!node.released, "value was released by the replay plan");
        &node.value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Bytes held by recorded values.
    pub fn bytes(&self) -> usize {
        self.nodes.iter().map(|n| n.value.bytes()).sum()
    }

    /// Number of empty segments seen by [`Tape::segment_max`].
    pub fn empty_max_segments(&self) -> usize {
        self.empty_max_segments
    }

    /// Smallest distance of any recorded relu input from zero, or of any
    /// segment max from its runner-up. Finite differences with a step
    /// comparable to this value straddle a kink.
    pub fn kink_margin(&self) -> f64 {
        self.kink_margin
    }

    /// Smallest standard deviation of any non-constant column passed to
    /// `standardize_cols`. Near the epsilon scale the map bends sharply.
    pub fn min_spread(&self) -> f64 {
        self.min_spread
    }

    fn note_kinks(&mut self, a: Var) {
        let m = self.value(a).data().iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
        self.kink_margin = self.kink_margin.min(m);
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf bound to a named parameter; frozen parameters take no gradient.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Var {
        let p = store
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {}.{name}", store.namespace()));
        self.push(p.value.clone(), Op::Param(store.key(name)), p.trainable)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        let (n, k) = (ta.rows(), ta.cols());
        let (k2, m) = (tb.rows(), tb.cols());
        if k != k2 {
            shape_err("matmul", format!("{:?} x {:?}", ta.shape(), tb.shape()));
        }
        let mut out = vec![0.0; n * m];
        let (ad, bd) = (ta.data(), tb.data());
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let av = ad[i * k + p];
                let brow = &bd[p * m..(p + 1) * m];
                for (o, bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor { shape: vec![n, m], data: out }, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            shape_err("add", format!("{:?} + {:?}", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let shape = ta.shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor { shape, data }, Op::Add(a, b), rg)
    }

    /// Adds a length-`m` row vector to every row of an `[n, m]` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(bias));
        let m = ta.cols();
        if tb.len() != m {
            shape_err("add_row", format!("{:?} + row {:?}", ta.shape(), tb.shape()));
        }
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(m.max(1)) {
            for (x, b) in row.iter_mut().zip(tb.data()) {
                *x += b;
            }
        }
        let shape = ta.shape().to_vec();
        let rg = self.rg(a) || self.rg(bias);
        self.push(Tensor { shape, data }, Op::AddRow(a, bias), rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a);
        let value = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|x| x * c).collect(),
        };
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, c), rg)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a);
        let value = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|x| x + c).collect(),
        };
        let rg = self.rg(a);
        self.push(value, Op::AddConst(a), rg)
    }

    /// Multiplies every entry of `a` by the single value held in `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        let (ta, ts) = (self.value(a), self.value(s));
        if ts.len() != 1 {
            shape_err("mul_scalar", format!("scalar operand has shape {:?}", ts.shape()));
        }
        let sv = ts.item();
        let value = Tensor {
            shape: ta.shape().to_vec(),
            data: ta.data().iter().map(|x| x * sv).collect(),
        };
        let rg = self.rg(a) || self.rg(s);
        self.push(value, Op::MulScalar(a, s), rg)
    }

    /// Multiplies column `c` of `[n, m]` by entry `c` of a length-`m` row.
    pub fn mul_row(&mut self, a: Var, scale: Var) -> Var {
        let (ta, ts) = (self.value(a), self.value(scale));
        let m = ta.cols();
        if ts.len() != m {
            shape_err("mul_row", format!("{:?} * row {:?}", ta.shape(), ts.shape()));
        }
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(m.max(1)) {
            row.iter_mut().zip(ts.data()).for_each(|(x, s)| *x *= s);
        }
        let shape = ta.shape().to_vec();
        let rg = self.rg(a) || self.rg(scale);
        self.push(Tensor { shape, data }, Op::MulRow(a, scale), rg)
    }

    /// Standardizes each column to zero mean and unit variance over the
    /// rows (population variance plus `eps`).
    pub fn standardize_cols(&mut self, a: Var, eps: f64) -> Var {
        let t = self.value(a);
        let (n, m) = (t.rows(), t.cols());
        let mut mean = vec![0.0; m];
        for r in 0..n {
            mean.iter_mut().zip(t.row(r)).for_each(|(s, x)| *s += x);
        }
        mean.iter_mut().for_each(|s| *s /= n.max(1) as f64);
        let mut var = vec![0.0; m];
        for r in 0..n {
            for ((v, x), mu) in var.iter_mut().zip(t.row(r)).zip(&mean) {
                *v += (x - mu) * (x - mu);
            }
        }
        let sd: Vec<f64> = var.iter().map(|v| (v / n.max(1) as f64 + eps).sqrt()).collect();
        let spread = var.iter().filter(|v| **v > 0.0).fold(f64::INFINITY, |m, v| m.min((v / n as f64).sqrt()));
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(m.max(1)) {
            for ((x, mu), s) in row.iter_mut().zip(&mean).zip(&sd) {
                *x = (*x - mu) / s;
            }
        }
        let shape = t.shape().to_vec();
        let rg = self.rg(a);
        self.min_spread = self.min_spread.min(spread);
        self.push(Tensor { shape, data }, Op::StandardizeCols(a, sd), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.note_kinks(a);
        let t = self.value(a);
        let value = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect(),
        };
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.note_kinks(a);
        let t = self.value(a);
        let value = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&x| if x > 0.0 { x } else { slope * x }).collect(),
        };
        let rg = self.rg(a);
        self.push(value, Op::LeakyRelu(a, slope), rg)
    }

    /// Selects rows `idx` of a matrix (repetition allowed).
    pub fn gather(&mut self, a: Var, idx: Arc<[usize]>) -> Var {
        let t = self.value(a);
        let m = t.cols();
        let rows = t.rows();
        let mut data = Vec::with_capacity(idx.len() * m);
        for &i in idx.iter() {
            if i >= rows {
                shape_err("gather", format!("row {i} of {rows}"));
            }
            data.extend_from_slice(t.row(i));
        }
        let rg = self.rg(a);
        self.push(Tensor { shape: vec![idx.len(), m], data }, Op::Gather(a, idx), rg)
    }

    fn check_segments(&self, op: &str, a: Var, seg: &Segments) {
        let rows = self.value(a).rows();
        if rows != seg.ids.len() {
            shape_err(op, format!("{rows} rows for {} segment ids", seg.ids.len()));
        }
    }

    pub fn segment_sum(&mut self, a: Var, seg: &Segments) -> Var {
        self.check_segments("segment_sum", a, seg);
        let t = self.value(a);
        let m = t.cols();
        let mut out = vec![0.0; seg.n * m];
        for (e, &s) in seg.ids.iter().enumerate() {
            for (o, x) in out[s * m..(s + 1) * m].iter_mut().zip(t.row(e)) {
                *o += x;
            }
        }
        let rg = self.rg(a);
        self.push(Tensor { shape: vec![seg.n, m], data: out }, Op::SegmentSum(a, seg.clone()), rg)
    }

    /// Mean per segment; empty segments yield zeros.
    pub fn segment_mean(&mut self, a: Var, seg: &Segments) -> Var {
        self.check_segments("segment_mean", a, seg);
        let t = self.value(a);
        let m = t.cols();
        let counts = seg.counts();
        let mut out = vec![0.0; seg.n * m];
        for (e, &s) in seg.ids.iter().enumerate() {
            for (o, x) in out[s * m..(s + 1) * m].iter_mut().zip(t.row(e)) {
                *o += x;
            }
        }
        for (s, &c) in counts.iter().enumerate() {
            if c > 0 {
                out[s * m..(s + 1) * m].iter_mut().for_each(|o| *o /= c as f64);
            }
        }
        let rg = self.rg(a);
        self.push(Tensor { shape: vec![seg.n, m], data: out }, Op::SegmentMean(a, seg.clone()), rg)
    }

    /// Element-wise max per segment. Ties go to the lowest row; empty
    /// segments yield zeros and are counted in [`Tape::empty_max_segments`].
    pub fn segment_max(&mut self, a: Var, seg: &Segments) -> Var {
        self.check_segments("segment_max", a, seg);
        let t = self.value(a);
        let m = t.cols();
        let mut arg = vec![NO_ARGMAX; seg.n * m];
        for (e, &s) in seg.ids.iter().enumerate() {
            let row = t.row(e);
            for c in 0..m {
                let slot = &mut arg[s * m + c];
                if *slot == NO_ARGMAX || row[c] > t.get(*slot, c) {
                    *slot = e;
                }
            }
        }
        let out: Vec<f64> = arg
            .iter()
            .enumerate()
            .map(|(k, &e)| if e == NO_ARGMAX { 0.0 } else { t.get(e, k % m) })
            .collect();
        let mut gap = f64::INFINITY;
        for (e, &s) in seg.ids.iter().enumerate() {
            for c in 0..m {
                let best = arg[s * m + c];
                if best != e {
                    gap = gap.min(t.get(best, c) - t.get(e, c));
                }
            }
        }
        let empty = seg.counts().iter().filter(|&&c| c == 0).count();
        self.empty_max_segments += empty;
        self.kink_margin = self.kink_margin.min(gap);
        let rg = self.rg(a);
        self.push(Tensor { shape: vec![seg.n, m], data: out }, Op::SegmentMax(a, arg), rg)
    }

    /// Softmax over the rows of each segment, independently per column.
    pub fn segment_softmax(&mut self, a: Var, seg: &Segments) -> Var {
        self.check_segments("segment_softmax", a, seg);
        let t = self.value(a);
        let m = t.cols();
        let mut mx = vec![f64::NEG_INFINITY; seg.n * m];
        for (e, &s) in seg.ids.iter().enumerate() {
            for (c, x) in t.row(e).iter().enumerate() {
                let v = &mut mx[s * m + c];
                *v = v.max(*x);
            }
        }
        let mut out = vec![0.0; t.len()];
        let mut denom = vec![0.0; seg.n * m];
        for (e, &s) in seg.ids.iter().enumerate() {
            for (c, x) in t.row(e).iter().enumerate() {
                let y = (x - mx[s * m + c]).exp();
                out[e * m + c] = y;
                denom[s * m + c] += y;
            }
        }
        for (e, &s) in seg.ids.iter().enumerate() {
            for c in 0..m {
                out[e * m + c] /= denom[s * m + c];
            }
        }
        let shape = t.shape().to_vec();
        let rg = self.rg(a);
        self.push(Tensor { shape, data: out }, Op::SegmentSoftmax(a, seg.clone()), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.cols();
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(m.max(1)) {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for x in row.iter_mut() {
                *x = (*x - mx).exp();
                z += *x;
            }
            row.iter_mut().for_each(|x| *x /= z);
        }
        let shape = t.shape().to_vec();
        let rg = self.rg(a);
        self.push(Tensor { shape, data: out }, Op::SoftmaxRows(a), rg)
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let n = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != n) {
            shape_err("concat", "row counts differ".into());
        }
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for r in 0..n {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Tensor { shape: vec![n, total], data }, Op::Concat(parts.to_vec()), rg)
    }

    /// Scales each row to unit Euclidean norm (zero rows stay zero).
    pub fn l2_normalize(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.cols();
        let mut norms = Vec::with_capacity(t.rows());
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(m.max(1)) {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            norms.push(norm);
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
        let shape = t.shape().to_vec();
        let rg = self.rg(a);
        self.push(Tensor { shape, data: out }, Op::L2Normalize(a, norms), rg)
    }

    /// Row-wise cosine similarity of two equally shaped matrices → `[n]`.
    /// Rows with zero norm give 0.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            shape_err("cosine_similarity", format!("{:?} vs {:?}", ta.shape(), tb.shape()));
        }
        let n = ta.rows();
        let data = (0..n)
            .map(|r| {
                let (x, y) = (ta.row(r), tb.row(r));
                let (dot, nx, ny) = dot_norms(x, y);
                if nx > 0.0 && ny > 0.0 {
                    dot / (nx * ny)
                } else {
                    0.0
                }
            })
            .collect();
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor { shape: vec![n], data }, Op::Cosine(a, b), rg)
    }

    /// Per-head dot product: `z` is `[n, heads*d]`, `w` is `[heads, d]`;
    /// result `[n, heads]`.
    pub fn head_dot(&mut self, z: Var, w: Var, heads: usize) -> Var {
        let (tz, tw) = (self.value(z), self.value(w));
        let width = tz.cols();
        if heads == 0 || width % heads != 0 || tw.len() != width {
            shape_err("head_dot", format!("{:?} with weights {:?} over {heads} heads", tz.shape(), tw.shape()));
        }
        let d = width / heads;
        let n = tz.rows();
        let mut out = vec![0.0; n * heads];
        for r in 0..n {
            let row = tz.row(r);
            for h in 0..heads {
                out[r * heads + h] = row[h * d..(h + 1) * d]
                    .iter()
                    .zip(&tw.data()[h * d..(h + 1) * d])
                    .map(|(x, y)| x * y)
                    .sum();
            }
        }
        let rg = self.rg(z) || self.rg(w);
        self.push(Tensor { shape: vec![n, heads], data: out }, Op::HeadDot(z, w, heads), rg)
    }

    /// Scales head blocks: `x` is `[n, heads*d]`, `w` is `[n, heads]`.
    pub fn head_scale(&mut self, x: Var, w: Var, heads: usize) -> Var {
        let (tx, tw) = (self.value(x), self.value(w));
        let width = tx.cols();
        if heads == 0 || width % heads != 0 || tw.rows() != tx.rows() || tw.cols() != heads {
            shape_err("head_scale", format!("{:?} by {:?}", tx.shape(), tw.shape()));
        }
        let d = width / heads;
        let mut out = tx.data().to_vec();
        for (r, row) in out.chunks_mut(width.max(1)).enumerate() {
            for h in 0..heads {
                let s = tw.get(r, h);
                row[h * d..(h + 1) * d].iter_mut().for_each(|v| *v *= s);
            }
        }
        let shape = tx.shape().to_vec();
        let rg = self.rg(x) || self.rg(w);
        self.push(Tensor { shape, data: out }, Op::HeadScale(x, w, heads), rg)
    }

    /// Mean squared error against a constant target of identical size.
    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Var {
        let t = self.value(pred);
        if t.len() != target.len() {
            shape_err("mse", format!("{} predictions for {} targets", t.len(), target.len()));
        }
        let n = t.len().max(1) as f64;
        let v = t.data().iter().zip(target).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / n;
        let rg = self.rg(pred);
        self.push(Tensor::scalar(v), Op::Mse(pred, target.into()), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(v), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = t.data().iter().sum::<f64>() / t.len().max(1) as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(v), Op::Mean(a), rg)
    }

    /// Reverse pass from a scalar `loss`; returns gradients of every
    /// parameter leaf (zeros for frozen ones).
    pub fn backward(&self, loss: Var) -> Gradients {
        assert!(self.plan.is_none(), "a replaying tape keeps no gradients");
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut params = BTreeMap::new();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if let Op::Param(key) = &node.op {
                let g = grads[idx]
                    .take()
                    .filter(|_| node.requires_grad)
                    .unwrap_or_else(|| vec![0.0; node.value.len()]);
                let t = Tensor {
                    shape: node.value.shape().to_vec(),
                    data: g,
                };
                match params.get_mut(key) {
                    None => {
                        params.insert(key.clone(), t);
                    }
                    Some(acc) => {
                        let acc: &mut Tensor = acc;
                        acc.data.iter_mut().zip(&t.data).for_each(|(a, b)| *a += b);
                    }
                }
                continue;
            }
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop(idx, &g, &mut grads);
        }
        Gradients::new(params)
    }

    fn backprop(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let len = self.nodes[v.0].value.len();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(slot);
        };
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
                acc(*a, &mut |ga| {
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let brow = &tb.data()[p * m..(p + 1) * m];
                            ga[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let av = ta.data()[i * k + p];
                            for (o, x) in gb[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *o += av * x;
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    acc(v, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, x)| *o += x));
                }
            }
            Op::AddRow(a, bias) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, x)| *o += x));
                let m = out.cols().max(1);
                acc(*bias, &mut |gb| {
                    for row in g.chunks(m) {
                        gb.iter_mut().zip(row).for_each(|(o, x)| *o += x);
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, x)| *o += c * x)),
            Op::AddConst(a) => acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, x)| *o += x)),
            Op::MulScalar(a, s) => {
                let sv = self.value(*s).item();
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, x)| *o += sv * x));
                let ta = self.value(*a);
                acc(*s, &mut |gs| gs[0] += ta.data().iter().zip(g).map(|(x, y)| x * y).sum::<f64>());
            }
            Op::MulRow(a, scale) => {
                let (ta, ts) = (self.value(*a), self.value(*scale));
                let m = ta.cols().max(1);
                acc(*a, &mut |ga| {
                    for (orow, grow) in ga.chunks_mut(m).zip(g.chunks(m)) {
                        for ((o, x), s) in orow.iter_mut().zip(grow).zip(ts.data()) {
                            *o += x * s;
                        }
                    }
                });
                acc(*scale, &mut |gs| {
                    for (arow, grow) in ta.data().chunks(m).zip(g.chunks(m)) {
                        for ((o, x), y) in gs.iter_mut().zip(arow).zip(grow) {
                            *o += x * y;
                        }
                    }
                });
            }
            Op::StandardizeCols(a, sd) => {
                // dx = (g - mean(g) - y * mean(g * y)) / sd, per column
                let (n, m) = (out.rows(), out.cols());
                let y = out.data();
                let mut mg = vec![0.0; m];
                let mut mgy = vec![0.0; m];
                for r in 0..n {
                    for c in 0..m {
                        mg[c] += g[r * m + c];
                        mgy[c] += g[r * m + c] * y[r * m + c];
                    }
                }
                let nf = n.max(1) as f64;
                acc(*a, &mut |ga| {
                    for r in 0..n {
                        for c in 0..m {
                            let k = r * m + c;
                            ga[k] += (g[k] - mg[c] / nf - y[k] * mgy[c] / nf) / sd[c];
                        }
                    }
                });
            }
            Op::Relu(a) => {
                acc(*a, &mut |ga| {
                    for ((o, x), y) in ga.iter_mut().zip(g).zip(out.data()) {
                        if *y > 0.0 {
                            *o += x;
                        }
                    }
                });
            }
            Op::LeakyRelu(a, slope) => {
                let ta = self.value(*a);
                acc(*a, &mut |ga| {
                    for ((o, x), v) in ga.iter_mut().zip(g).zip(ta.data()) {
                        *o += if *v > 0.0 { *x } else { slope * x };
                    }
                });
            }
            Op::Gather(a, idx_rows) => {
                let m = out.cols();
                acc(*a, &mut |ga| {
                    for (e, &i) in idx_rows.iter().enumerate() {
                        for (o, x) in ga[i * m..(i + 1) * m].iter_mut().zip(&g[e * m..(e + 1) * m]) {
                            *o += x;
                        }
                    }
                });
            }
            Op::SegmentSum(a, seg) => {
                let m = out.cols();
                acc(*a, &mut |ga| {
                    for (e, &s) in seg.ids.iter().enumerate() {
                        for (o, x) in ga[e * m..(e + 1) * m].iter_mut().zip(&g[s * m..(s + 1) * m]) {
                            *o += x;
                        }
                    }
                });
            }
            Op::SegmentMean(a, seg) => {
                let m = out.cols();
                let counts = seg.counts();
                acc(*a, &mut |ga| {
                    for (e, &s) in seg.ids.iter().enumerate() {
                        let c = counts[s] as f64;
                        for (o, x) in ga[e * m..(e + 1) * m].iter_mut().zip(&g[s * m..(s + 1) * m]) {
                            *o += x / c;
                        }
                    }
                });
            }
            Op::SegmentMax(a, arg) => {
                let m = out.cols();
                acc(*a, &mut |ga| {
                    for (k, &e) in arg.iter().enumerate() {
                        if e != NO_ARGMAX {
                            ga[e * m + k % m] += g[k];
                        }
                    }
                });
            }
            Op::SegmentSoftmax(a, seg) => {
                let m = out.cols();
                let y = out.data();
                let mut dot = vec![0.0; seg.n * m];
                for (e, &s) in seg.ids.iter().enumerate() {
                    for c in 0..m {
                        dot[s * m + c] += y[e * m + c] * g[e * m + c];
                    }
                }
                acc(*a, &mut |ga| {
                    for (e, &s) in seg.ids.iter().enumerate() {
                        for c in 0..m {
                            let k = e * m + c;
                            ga[k] += y[k] * (g[k] - dot[s * m + c]);
                        }
                    }
                });
            }
            Op::SoftmaxRows(a) => {
                let m = out.cols().max(1);
                acc(*a, &mut |ga| {
                    for ((gr, yr), orow) in g.chunks(m).zip(out.data().chunks(m)).zip(ga.chunks_mut(m)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(x, y)| x * y).sum();
                        for ((o, x), y) in orow.iter_mut().zip(gr).zip(yr) {
                            *o += y * (x - dot);
                        }
                    }
                });
            }
            Op::Concat(parts) => {
                let total = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    acc(p, &mut |gp| {
                        for (r, row) in gp.chunks_mut(w.max(1)).enumerate() {
                            row.iter_mut()
                                .zip(&g[r * total + offset..r * total + offset + w])
                                .for_each(|(o, x)| *o += x);
                        }
                    });
                    offset += w;
                }
            }
            Op::L2Normalize(a, norms) => {
                let m = out.cols().max(1);
                acc(*a, &mut |ga| {
                    for (r, ((gr, yr), orow)) in g.chunks(m).zip(out.data().chunks(m)).zip(ga.chunks_mut(m)).enumerate() {
                        let norm = norms[r];
                        if norm <= 0.0 {
                            continue;
                        }
                        let dot: f64 = gr.iter().zip(yr).map(|(x, y)| x * y).sum();
                        for ((o, x), y) in orow.iter_mut().zip(gr).zip(yr) {
                            *o += (x - y * dot) / norm;
                        }
                    }
                });
            }
            Op::Cosine(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let m = ta.cols();
                // d cos / dx = y/(|x||y|) - cos * x/|x|^2
                let partial = |x: &[f64], y: &[f64], cos: f64, gr: f64, o: &mut [f64]| {
                    let (_, nx, ny) = dot_norms(x, y);
                    if nx <= 0.0 || ny <= 0.0 {
                        return;
                    }
                    for ((o, xi), yi) in o.iter_mut().zip(x).zip(y) {
                        *o += gr * (yi / (nx * ny) - cos * xi / (nx * nx));
                    }
                };
                acc(*a, &mut |ga| {
                    for r in 0..ta.rows() {
                        partial(ta.row(r), tb.row(r), out.data()[r], g[r], &mut ga[r * m..(r + 1) * m]);
                    }
                });
                acc(*b, &mut |gb| {
                    for r in 0..ta.rows() {
                        partial(tb.row(r), ta.row(r), out.data()[r], g[r], &mut gb[r * m..(r + 1) * m]);
                    }
                });
            }
            Op::HeadDot(z, w, heads) => {
                let (tz, tw) = (self.value(*z), self.value(*w));
                let width = tz.cols();
                let d = width / heads;
                acc(*z, &mut |gz| {
                    for r in 0..tz.rows() {
                        for h in 0..*heads {
                            let gv = g[r * heads + h];
                            for c in 0..d {
                                gz[r * width + h * d + c] += gv * tw.data()[h * d + c];
                            }
                        }
                    }
                });
                acc(*w, &mut |gw| {
                    for r in 0..tz.rows() {
                        for h in 0..*heads {
                            let gv = g[r * heads + h];
                            for c in 0..d {
                                gw[h * d + c] += gv * tz.data()[r * width + h * d + c];
                            }
                        }
                    }
                });
            }
            Op::HeadScale(x, w, heads) => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let width = tx.cols();
                let d = width / heads;
                acc(*x, &mut |gx| {
                    for r in 0..tx.rows() {
                        for h in 0..*heads {
                            let s = tw.data()[r * heads + h];
                            for c in 0..d {
                                gx[r * width + h * d + c] += g[r * width + h * d + c] * s;
                            }
                        }
                    }
                });
                acc(*w, &mut |gw| {
                    for r in 0..tx.rows() {
                        for h in 0..*heads {
                            let mut s = 0.0;
                            for c in 0..d {
                                let k = r * width + h * d + c;
                                s += g[k] * tx.data()[k];
                            }
                            gw[r * heads + h] += s;
                        }
                    }
                });
            }
            Op::Mse(p, target) => {
                let tp = self.value(*p);
                let n = tp.len().max(1) as f64;
                acc(*p, &mut |gp| {
                    for ((o, x), y) in gp.iter_mut().zip(tp.data()).zip(target.iter()) {
                        *o += g[0] * 2.0 * (x - y) / n;
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |ga| ga.iter_mut().for_each(|o| *o += g[0])),
            Op::Mean(a) => {
                let n = self.value(*a).len().max(1) as f64;
                acc(*a, &mut |ga| ga.iter_mut().for_each(|o| *o += g[0] / n));
            }
        }
    }
}

fn dot_norms(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let (mut dot, mut nx, mut ny) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    (dot, nx.sqrt(), ny.sqrt())
}
