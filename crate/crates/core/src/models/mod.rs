//! Message-passing backbones and readout heads.
//!
//! Every backbone maps standardized node features to per-node embeddings of
//! width `hidden`. Readout heads turn embeddings into either unit-norm
//! pretext vectors or KPI bin distributions.

mod layers;

pub use layers::{gat_layer, gine_layer, wcgcn_layer};

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CellGraph;
use crate::tensor::{ParamStore, Segments, Tape, Tensor, Var, CHECKPOINT_FORMAT_VERSION};

pub const DEFAULT_LAYERS: usize = 3;
pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_GAT_HEADS: usize = 4;
pub const KPI_BINS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    Mlp,
    Gat,
    Gine,
    Wcgcn,
}

impl BackboneKind {
    pub const ALL: [BackboneKind; 4] = [Self::Mlp, Self::Gat, Self::Gine, Self::Wcgcn];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Mlp => "mlp",
            Self::Gat => "gat",
            Self::Gine => "gine",
            Self::Wcgcn => "wcgcn",
        }
    }
}

impl FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(Self::Mlp),
            "gat" => Ok(Self::Gat),
            "gine" => Ok(Self::Gine),
            "wcgcn" => Ok(Self::Wcgcn),
            other => Err(Error::Config(format!("unknown backbone {other:?}"))),
        }
    }
}

impl std::fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    pub layers: usize,
    pub hidden: usize,
    /// Initial GINE epsilon; learned during training.
    pub epsilon: f64,
    pub gat_heads: usize,
}

impl BackboneConfig {
    pub fn new(kind: BackboneKind) -> Self {
        Self {
            kind,
            layers: DEFAULT_LAYERS,
            hidden: DEFAULT_HIDDEN,
            epsilon: 0.0,
            gat_heads: DEFAULT_GAT_HEADS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 {
            return Err(Error::Config("backbone needs at least one layer".into()));
        }
        if self.hidden < 4 {
            return Err(Error::Config(format!("hidden width {} below 4", self.hidden)));
        }
        if !self.epsilon.is_finite() {
            return Err(Error::Config("epsilon must be finite".into()));
        }
        if self.kind == BackboneKind::Gat && (self.gat_heads == 0 || self.hidden % self.gat_heads != 0) {
            return Err(Error::Config(format!(
                "{} attention heads do not divide hidden width {}",
                self.gat_heads, self.hidden
            )));
        }
        Ok(())
    }
}

/// Tensors of one graph laid out for message passing. Edges run `src → dst`
/// and are aggregated at `dst`.
#[derive(Debug, Clone)]
pub struct GraphInput {
    x: Tensor,
    edge_attr: Tensor,
    src: Arc<[usize]>,
    by_dst: Segments,
    // edges plus one zero-attribute self loop per node
    loop_src: Arc<[usize]>,
    loop_dst: Arc<[usize]>,
    loop_by_dst: Segments,
    loop_attr: Tensor,
}

impl GraphInput {
    pub fn new(features: &[Vec<f64>], edges: &[(usize, usize)], edge_attr: &[Vec<f64>], edge_width: usize) -> Result<Self> {
        let n = features.len();
        if n == 0 {
            return Err(Error::Empty("graph has no nodes"));
        }
        if edge_attr.len() != edges.len() {
            return Err(Error::Shape(format!("{} edges but {} attribute rows", edges.len(), edge_attr.len())));
        }
        if edge_attr.iter().any(|r| r.len() != edge_width) {
            return Err(Error::Shape(format!("edge attributes must have width {edge_width}")));
        }
        if let Some(&(s, d)) = edges.iter().find(|&&(s, d)| s >= n || d >= n) {
            return Err(Error::Validation(format!("edge {s}->{d} references a missing node")));
        }
        let x = Tensor::from_rows(features)?;
        let src: Arc<[usize]> = edges.iter().map(|e| e.0).collect();
        let dst: Arc<[usize]> = edges.iter().map(|e| e.1).collect();
        let mut attr = Vec::with_capacity((edges.len() + n) * edge_width);
        attr.extend(edge_attr.iter().flatten().copied());
        let edge_tensor = Tensor::new(vec![edges.len(), edge_width], attr.clone())?;
        attr.resize((edges.len() + n) * edge_width, 0.0);
        let loop_src: Arc<[usize]> = src.iter().copied().chain(0..n).collect();
        let loop_dst: Arc<[usize]> = dst.iter().copied().chain(0..n).collect();
        Ok(Self {
            x,
            edge_attr: edge_tensor,
            src,
            by_dst: Segments::new(dst, n),
            loop_src,
            loop_by_dst: Segments::new(loop_dst.clone(), n),
            loop_dst,
            loop_attr: Tensor::new(vec![edges.len() + n, edge_width], attr)?,
        })
    }

    /// Standardized features and edge attributes of a cell graph; geometric
    /// overlap summaries are appended to edge attributes when requested.
    pub fn from_graph(g: &CellGraph, edge_geometry: bool) -> Result<Self> {
        let edges: Vec<(usize, usize)> = g.edges.iter().map(|e| (e.src, e.dst)).collect();
        let attr = g.edge_features(edge_geometry);
        let width = crate::graph::EDGE_ATTR_WIDTH + if edge_geometry { 2 } else { 0 };
        Self::new(&g.node_features, &edges, &attr, width)
    }

    pub fn n_nodes(&self) -> usize {
        self.x.rows()
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }

    pub fn feature_width(&self) -> usize {
        self.x.cols()
    }

    pub fn edge_width(&self) -> usize {
        self.edge_attr.cols()
    }

    pub fn features(&self) -> &Tensor {
        &self.x
    }

    pub fn src(&self) -> &Arc<[usize]> {
        &self.src
    }

    pub fn dst(&self) -> &[usize] {
        self.by_dst.ids()
    }

    pub fn bytes(&self) -> usize {
        self.x.bytes() + self.edge_attr.bytes() + self.loop_attr.bytes()
            + (self.src.len() * 2 + self.loop_src.len() * 2) * std::mem::size_of::<usize>()
    }
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, shape: &[usize]) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-limit..limit)).collect())
        .expect("shape product matches")
}

fn add_linear(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, fan_out: usize) {
    store.insert(&format!("{name}.w"), glorot(rng, fan_in, fan_out, &[fan_in, fan_out]));
    store.insert(&format!("{name}.b"), Tensor::zeros(&[fan_out]));
}

/// Column standardization over the nodes of the graph with a learned
/// per-column scale and shift. Keeps sum aggregation from compounding the
/// in-degree across layers.
pub(crate) fn graph_norm(t: &mut Tape, s: &ParamStore, name: &str, x: Var) -> Var {
    let gamma = t.param(s, &format!("{name}.gamma"));
    let beta = t.param(s, &format!("{name}.beta"));
    let y = t.standardize_cols(x, NORM_EPS);
    let y = t.mul_row(y, gamma);
    t.add_row(y, beta)
}

pub const NORM_EPS: f64 = 1e-5;

pub(crate) fn linear(t: &mut Tape, s: &ParamStore, name: &str, x: Var) -> Var {
    let w = t.param(s, &format!("{name}.w"));
    let b = t.param(s, &format!("{name}.b"));
    let y = t.matmul(x, w);
    t.add_row(y, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backbone {
    pub config: BackboneConfig,
    pub in_dim: usize,
    pub edge_dim: usize,
    pub params: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct BackboneCheckpoint {
    format_version: u32,
    config: BackboneConfig,
    in_dim: usize,
    edge_dim: usize,
    params: serde_json::Value,
}

impl Backbone {
    pub const NAMESPACE: &'static str = "gnn";

    pub fn new(config: BackboneConfig, in_dim: usize, edge_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if in_dim == 0 {
            return Err(Error::Config("node features are empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new(Self::NAMESPACE);
        let h = config.hidden;
        match config.kind {
            BackboneKind::Mlp => {
                for l in 0..config.layers {
                    add_linear(&mut s, &mut rng, &format!("l{l}"), if l == 0 { in_dim } else { h }, h);
                }
            }
            BackboneKind::Gine => {
                add_linear(&mut s, &mut rng, "in", in_dim, h);
                for l in 0..config.layers {
                    add_linear(&mut s, &mut rng, &format!("l{l}.edge"), edge_dim, h);
                    add_linear(&mut s, &mut rng, &format!("l{l}.mlp1"), h, h);
                    add_linear(&mut s, &mut rng, &format!("l{l}.mlp2"), h, h);
                    s.insert(&format!("l{l}.eps"), Tensor::scalar(config.epsilon));
                    if l + 1 < config.layers {
                        s.insert(&format!("l{l}.norm.gamma"), Tensor::new(vec![h], vec![1.0; h]).expect("length h"));
                        s.insert(&format!("l{l}.norm.beta"), Tensor::zeros(&[h]));
                    }
                }
            }
            BackboneKind::Wcgcn => {
                for l in 0..config.layers {
                    let d = if l == 0 { in_dim } else { h };
                    add_linear(&mut s, &mut rng, &format!("l{l}.msg"), d + edge_dim, h);
                    add_linear(&mut s, &mut rng, &format!("l{l}.upd"), d + h, h);
                }
            }
            BackboneKind::Gat => {
                let heads = config.gat_heads;
                let dh = h / heads;
                for l in 0..config.layers {
                    let d = if l == 0 { in_dim } else { h };
                    s.insert(&format!("l{l}.w"), glorot(&mut rng, d, h, &[d, h]));
                    s.insert(&format!("l{l}.we"), glorot(&mut rng, edge_dim.max(1), h, &[edge_dim, h]));
                    for a in ["a_src", "a_dst", "a_edge"] {
                        s.insert(&format!("l{l}.{a}"), glorot(&mut rng, dh, 1, &[heads, dh]));
                    }
                    s.insert(&format!("l{l}.b"), Tensor::zeros(&[h]));
                }
            }
        }
        Ok(Self {
            config,
            in_dim,
            edge_dim,
            params: s,
        })
    }

    fn check_input(&self, g: &GraphInput) -> Result<()> {
        if g.feature_width() != self.in_dim {
            return Err(Error::Shape(format!(
                "backbone expects {} node features, graph has {}",
                self.in_dim,
                g.feature_width()
            )));
        }
        if self.config.kind != BackboneKind::Mlp && g.edge_width() != self.edge_dim {
            return Err(Error::Shape(format!(
                "backbone expects {} edge attributes, graph has {}",
                self.edge_dim,
                g.edge_width()
            )));
        }
        Ok(())
    }

    /// Node embeddings `[n, hidden]`.
    pub fn forward(&self, t: &mut Tape, g: &GraphInput) -> Result<Var> {
        Ok(self.forward_with_attention(t, g)?.0)
    }

    /// Like [`Backbone::forward`]; for GAT also returns each layer's
    /// attention weights `[edges + n, heads]` (self loops last).
    pub fn forward_with_attention(&self, t: &mut Tape, g: &GraphInput) -> Result<(Var, Vec<Var>)> {
        self.forward_store(t, &self.params, g)
    }

    fn forward_in(&self, t: &mut Tape, s: &ParamStore, g: &GraphInput) -> Result<Var> {
        Ok(self.forward_store(t, s, g)?.0)
    }

    fn forward_store(&self, t: &mut Tape, s: &ParamStore, g: &GraphInput) -> Result<(Var, Vec<Var>)> {
        self.check_input(g)?;
        let mut h = t.constant(g.x.clone());
        let mut attention = Vec::new();
        match self.config.kind {
            BackboneKind::Mlp => {
                for l in 0..self.config.layers {
                    let y = linear(t, s, &format!("l{l}"), h);
                    h = t.relu(y);
                }
            }
            BackboneKind::Gine => {
                h = linear(t, s, "in", h);
                for l in 0..self.config.layers {
                    h = gine_layer(t, s, l, h, g);
                    if l + 1 < self.config.layers {
                        h = graph_norm(t, s, &format!("l{l}.norm"), h);
                    }
                }
            }
            BackboneKind::Wcgcn => {
                for l in 0..self.config.layers {
                    h = wcgcn_layer(t, s, l, h, g);
                }
            }
            BackboneKind::Gat => {
                for l in 0..self.config.layers {
                    let (y, a) = gat_layer(t, s, l, self.config.gat_heads, h, g);
                    h = y;
                    attention.push(a);
                }
            }
        }
        Ok((h, attention))
    }

    /// Embeddings as a plain tensor (no gradient needed).
    pub fn embed(&self, g: &GraphInput) -> Result<Tensor> {
        let mut t = Tape::new();
        let h = self.forward(&mut t, g)?;
        Ok(t.value(h).clone())
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = BackboneCheckpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: self.config,
            in_dim: self.in_dim,
            edge_dim: self.edge_dim,
            params: serde_json::from_str(&self.params.to_json()?)?,
        };
        Ok(serde_json::to_string(&ck)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let found = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0);
        if found != CHECKPOINT_FORMAT_VERSION as u64 {
            return Err(Error::SchemaVersion {
                artifact: "backbone checkpoint",
                found: found as u32,
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }
        let ck: BackboneCheckpoint = serde_json::from_value(raw)?;
        ck.config.validate()?;
        let params = ParamStore::from_json(&ck.params.to_string())?;
        let fresh = Backbone::new(ck.config, ck.in_dim, ck.edge_dim, 0)?;
        let shapes = |s: &ParamStore| s.iter().map(|(k, p)| (k.clone(), p.value.shape().to_vec())).collect::<Vec<_>>();
        if shapes(&fresh.params) != shapes(&params) {
            return Err(Error::Validation("checkpoint parameters do not match the backbone config".into()));
        }
        Ok(Self {
            config: ck.config,
            in_dim: ck.in_dim,
            edge_dim: ck.edge_dim,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::write_text(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&crate::read_text(path)?)
    }
}

/// Smallest kink distance that central differences with step `1e-5` can
/// tolerate (ten steps, allowing for input-to-activation gains up to ten).
pub const GRAD_CHECK_KINK_MARGIN: f64 = 1e-4;
pub const GRAD_CHECK_MIN_SPREAD: f64 = 0.1;

/// Finite-difference check of every backbone parameter under an MSE loss
/// against a random target near the initial embeddings.
///
/// Keeping the loss small keeps its rounding error (one ulp over 2 * step)
/// well below the relative-error floor, which matters for parameters whose
/// true gradient is structurally zero, e.g. GAT destination attention.
pub fn backbone_grad_check(backbone: &mut Backbone, g: &GraphInput, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h0 = backbone.embed(g)?;
    let target: Vec<f64> = h0.data().iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect();
    let (config, in_dim, edge_dim) = (backbone.config, backbone.in_dim, backbone.edge_dim);
    crate::tensor::grad_check(&mut backbone.params, |t, s| {
        let b = Backbone {
            config,
            in_dim,
            edge_dim,
            params: ParamStore::new(Backbone::NAMESPACE),
        };
        let h = b.forward_in(t, s, g).expect("widths checked by caller");
        t.mse(h, &target)
    })
}

/// Distance of a forward pass from the nearest relu or max kink.
pub fn kink_margin(backbone: &Backbone, g: &GraphInput) -> Result<f64> {
    let mut t = Tape::new();
    backbone.forward(&mut t, g)?;
    Ok(t.kink_margin())
}

/// Whether finite differences at this point resolve the gradient: no kink
/// within `GRAD_CHECK_KINK_MARGIN` and no normalized column narrower than
/// `GRAD_CHECK_MIN_SPREAD`.
pub fn is_smooth_point(backbone: &Backbone, g: &GraphInput) -> Result<bool> {
    let mut t = Tape::new();
    backbone.forward(&mut t, g)?;
    Ok(t.kink_margin() > GRAD_CHECK_KINK_MARGIN && t.min_spread() > GRAD_CHECK_MIN_SPREAD)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Unit-norm vectors of width `hidden` for the similarity pretext.
    Pretext,
    /// Distribution over the four KPI bins.
    Downstream,
}

/// Two-layer perceptron readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutHead {
    pub kind: HeadKind,
    pub hidden: usize,
    pub params: ParamStore,
}

impl ReadoutHead {
    pub fn new(kind: HeadKind, hidden: usize, seed: u64) -> Self {
        let namespace = match kind {
            HeadKind::Pretext => "pt",
            HeadKind::Downstream => "ft",
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new(namespace);
        add_linear(&mut s, &mut rng, "l0", hidden, hidden);
        let out = match kind {
            HeadKind::Pretext => hidden,
            HeadKind::Downstream => KPI_BINS,
        };
        add_linear(&mut s, &mut rng, "l1", hidden, out);
        Self { kind, hidden, params: s }
    }

    pub fn out_width(&self) -> usize {
        match self.kind {
            HeadKind::Pretext => self.hidden,
            HeadKind::Downstream => KPI_BINS,
        }
    }

    pub fn forward(&self, t: &mut Tape, h: Var) -> Var {
        let y = linear(t, &self.params, "l0", h);
        let y = t.relu(y);
        let y = linear(t, &self.params, "l1", y);
        match self.kind {
            HeadKind::Pretext => t.l2_normalize(y),
            HeadKind::Downstream => t.softmax_rows(y),
        }
    }
}
