//! Supervised benchmarking and self-supervised few-shot training protocols.
//!
//! Three protocols share one configuration type:
//!
//! * [`run_pf1`]: full supervision with measurement features, evaluated on
//!   held-out nodes (transductive) or on an unseen graph (inductive).
//! * [`run_pf2`]: similarity pretraining of the backbone, freeze, then
//!   few-shot fine-tuning of a fresh readout on `alpha_pct` of the labels.
//! * [`run_full_supervision`]: the fully supervised reference for few-shot
//!   runs on the same measurement-free graph.

mod ledger;

pub use ledger::{aggregate, append_ledger, format_mean_std, read_ledger, LedgerRow, SummaryRow};

use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CellGraph, FeatureStats, Kpi};
use crate::models::{Backbone, BackboneConfig, BackboneKind, GraphInput, HeadKind, ReadoutHead};
use crate::tensor::{Adam, AdamConfig, ParamStore, Tape, Tensor, Var, CHECKPOINT_FORMAT_VERSION};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_N_PT: usize = 200;
pub const DEFAULT_N_FT: usize = 300;
pub const DEFAULT_LR_PT: f64 = 1e-3;
pub const DEFAULT_LR_FT: f64 = 3e-3;
/// Decoupled weight decay of the fine-tuning optimizer.
pub const DEFAULT_WEIGHT_DECAY_FT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pretext {
    Ia,
    Id,
    None,
}

impl Pretext {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ia => "ia",
            Self::Id => "id",
            Self::None => "none",
        }
    }
}

impl FromStr for Pretext {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ia" => Ok(Self::Ia),
            "id" => Ok(Self::Id),
            "none" => Ok(Self::None),
            other => Err(Error::Config(format!("unknown pretext {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Transductive,
    Inductive,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Transductive => "transductive",
            Self::Inductive => "inductive",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transductive" => Ok(Self::Transductive),
            "inductive" => Ok(Self::Inductive),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pf1,
    Pf2,
    Supervised,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Pf1 => "pf1",
            Self::Pf2 => "pf2",
            Self::Supervised => "supervised",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pf1" => Ok(Self::Pf1),
            "pf2" => Ok(Self::Pf2),
            "supervised" => Ok(Self::Supervised),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_pt: usize,
    /// Fine-tuning epochs; supervised protocols train this many epochs too.
    pub n_ft: usize,
    pub alpha_pct: f64,
    pub hp_pt: AdamConfig,
    pub hp_ft: AdamConfig,
    pub pretext: Pretext,
    pub kpi: Kpi,
    pub backbone: BackboneConfig,
    pub seed: u64,
    pub split: Split,
    /// Append target IA/ID to edge attributes instead of (or besides) using
    /// them as pretext targets.
    pub edge_geometry: bool,
}

impl TrainConfig {
    pub fn new(kind: BackboneKind, kpi: Kpi) -> Self {
        Self {
            n_pt: DEFAULT_N_PT,
            n_ft: DEFAULT_N_FT,
            alpha_pct: 2.5,
            hp_pt: AdamConfig::with_lr(DEFAULT_LR_PT),
            hp_ft: AdamConfig {
                weight_decay: DEFAULT_WEIGHT_DECAY_FT,
                ..AdamConfig::with_lr(DEFAULT_LR_FT)
            },
            pretext: Pretext::Ia,
            kpi,
            backbone: BackboneConfig::new(kind),
            seed: 0,
            split: Split::Transductive,
            edge_geometry: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_pct > 0.0 && self.alpha_pct <= 100.0) {
            return Err(Error::Config(format!("alpha_pct {} outside (0, 100]", self.alpha_pct)));
        }
        if self.n_pt < 1 || self.n_ft < 1 {
            return Err(Error::Config("epoch counts must be at least 1".into()));
        }
        for hp in [self.hp_pt, self.hp_ft] {
            if !(hp.lr > 0.0 && hp.lr.is_finite()) {
                return Err(Error::Config(format!("learning rate {} must be positive", hp.lr)));
            }
            if !(hp.weight_decay >= 0.0 && hp.weight_decay.is_finite()) {
                return Err(Error::Config(format!("weight decay {} must be non-negative", hp.weight_decay)));
            }
        }
        self.backbone.validate()
    }

    /// Stable hash of every setting except the seed; runs that differ only
    /// in seed share it.
    pub fn group_hash(&self, mode: Mode) -> String {
        let mut c = *self;
        c.seed = 0;
        let text = format!("{}|{}", mode.as_str(), serde_json::to_string(&c).expect("config serializes"));
        format!("{:016x}", fnv1a(text.as_bytes()))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Stream-specific seed derived from the run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9)) ^ stream
}

const STREAM_BACKBONE: u64 = 1;
const STREAM_PT_HEAD: u64 = 2;
const STREAM_FT_HEAD: u64 = 3;
const STREAM_FEW_SHOT: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub mode: Mode,
    pub config: TrainConfig,
    pub config_hash: String,
    /// `100 * MSE` keyed by KPI name.
    pub mse_pct: std::collections::BTreeMap<String, f64>,
    pub pt_loss: Vec<f64>,
    pub train_loss: Vec<f64>,
    pub gain: Option<f64>,
    /// Labeled nodes whose loss drives the readout updates.
    pub labeled_nodes: Vec<usize>,
    /// Label rows read during training.
    pub train_label_reads: usize,
    pub eval_nodes: usize,
    /// Labels of the evaluation graph read during training (inductive runs).
    pub target_label_reads_during_training: Option<usize>,
    pub wallclock_s: f64,
    pub peak_mem_bytes: usize,
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn mse(&self) -> f64 {
        self.mse_pct[self.config.kpi.as_str()]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let found = raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0);
        if found != REPORT_SCHEMA_VERSION as u64 {
            return Err(Error::SchemaVersion {
                artifact: "run report",
                found: found as u32,
                expected: REPORT_SCHEMA_VERSION,
            });
        }
        Ok(serde_json::from_value(raw)?)
    }

    /// Metrics only, for reproducibility comparisons (timing excluded).
    pub fn metrics(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            self.mse_pct.values().copied().collect(),
            self.pt_loss.clone(),
            self.train_loss.clone(),
        )
    }
}

/// Backbone plus downstream readout with the feature statistics they were
/// trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub mode: Mode,
    pub config: TrainConfig,
    pub stats: FeatureStats,
    pub feature_names: Vec<String>,
    pub backbone: Backbone,
    pub head: ReadoutHead,
}

impl TrainedModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let found = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0);
        if found != CHECKPOINT_FORMAT_VERSION as u64 {
            return Err(Error::SchemaVersion {
                artifact: "model checkpoint",
                found: found as u32,
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }
        let m: TrainedModel = serde_json::from_value(raw)?;
        m.config.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::write_text(path, &self.to_json()?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&crate::read_text(path)?)
    }

    /// Predicted bin distributions for every node, after standardizing the
    /// graph with the training statistics.
    pub fn predict(&self, graph: &CellGraph) -> Result<Tensor> {
        if graph.feature_names != self.feature_names {
            return Err(Error::Validation(format!(
                "graph features {:?} differ from the model's {:?}",
                graph.feature_names, self.feature_names
            )));
        }
        let g = graph.restandardized(&self.stats)?;
        let input = GraphInput::from_graph(&g, self.config.edge_geometry)?;
        let mut t = Tape::new();
        let h = self.backbone.forward(&mut t, &input)?;
        let p = self.head.forward(&mut t, h);
        Ok(t.value(p).clone())
    }

    /// `100 * MSE` on `nodes` of `graph`.
    pub fn evaluate(&self, graph: &CellGraph, nodes: &[usize]) -> Result<f64> {
        let pred = self.predict(graph)?;
        mse_pct_on(&pred, graph, self.config.kpi, nodes)
    }
}

fn mse_pct_on(pred: &Tensor, graph: &CellGraph, kpi: Kpi, nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::Empty("evaluation node set"));
    }
    let labels = graph.label_rows(kpi, nodes);
    let mut s = 0.0;
    for (&i, y) in nodes.iter().zip(&labels) {
        for (p, l) in pred.row(i).iter().zip(y) {
            s += (p - l) * (p - l);
        }
    }
    Ok(100.0 * s / (nodes.len() * 4) as f64)
}

/// Mean squared error between the cosine similarity of edge endpoint
/// embeddings and the edge targets.
pub fn loss_ssl(t: &mut Tape, h: Var, src: &[usize], dst: &[usize], targets: &[f64]) -> Result<Var> {
    if src.is_empty() {
        return Err(Error::Empty("edge set for the similarity loss"));
    }
    if src.len() != dst.len() || src.len() != targets.len() {
        return Err(Error::Shape("edge endpoints and targets differ in length".into()));
    }
    let hs = t.gather(h, src.into());
    let hd = t.gather(h, dst.into());
    let cos = t.cosine_similarity(hs, hd);
    Ok(t.mse(cos, targets))
}

/// Mean over labeled rows and the four bins of the squared error.
pub fn loss_mse(t: &mut Tape, pred: Var, labels: &[[f64; 4]]) -> Result<Var> {
    if labels.is_empty() {
        return Err(Error::Empty("label set"));
    }
    let flat: Vec<f64> = labels.iter().flatten().copied().collect();
    if t.value(pred).len() != flat.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labeled rows",
            t.value(pred).rows(),
            labels.len()
        )));
    }
    Ok(t.mse(pred, &flat))
}

/// Number of labeled nodes drawn for `alpha_pct` of `n`.
pub fn few_shot_size(n: usize, alpha_pct: f64) -> usize {
    // guard against 2.5% of 200 landing a hair above 5 in floating point
    let k = (alpha_pct / 100.0 * n as f64 - 1e-9).ceil().max(1.0) as usize;
    k.min(n)
}

/// Seeded uniform sample without replacement from `pool`, sorted.
pub fn sample_few_shot(pool: &[usize], alpha_pct: f64, seed: u64) -> Vec<usize> {
    let k = few_shot_size(pool.len(), alpha_pct);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<usize> = pool.choose_multiple(&mut rng, k).copied().collect();
    v.sort_unstable();
    v
}

/// Per-edge similarity targets of the pretext task, in edge order.
pub fn pretext_targets(graph: &CellGraph, pretext: Pretext) -> Result<Vec<f64>> {
    if graph.edges.is_empty() {
        return Err(Error::Validation("pretext targets need at least one edge".into()));
    }
    let t: Vec<f64> = graph
        .edges
        .iter()
        .map(|e| match pretext {
            Pretext::Ia => e.geom.target_ia,
            Pretext::Id => e.geom.target_id,
            Pretext::None => 0.0,
        })
        .collect();
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("pretext target is not finite".into()));
    }
    Ok(t)
}

struct Meter {
    start: Instant,
    peak: usize,
}

impl Meter {
    fn new() -> Self {
        Self {
            start: Instant::now(),
            peak: 0,
        }
    }

    fn observe(&mut self, bytes: usize) {
        self.peak = self.peak.max(bytes);
    }
}

fn report(mode: Mode, cfg: &TrainConfig, mse_pct: f64, meter: &Meter) -> RunReport {
    RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        mode,
        config: *cfg,
        config_hash: cfg.group_hash(mode),
        mse_pct: [(cfg.kpi.as_str().to_string(), mse_pct)].into(),
        pt_loss: Vec::new(),
        train_loss: Vec::new(),
        gain: None,
        labeled_nodes: Vec::new(),
        train_label_reads: 0,
        eval_nodes: 0,
        target_label_reads_during_training: None,
        wallclock_s: meter.start.elapsed().as_secs_f64(),
        peak_mem_bytes: meter.peak,
        notes: Vec::new(),
    }
}

/// Few-shot protocol: optional similarity pretraining of backbone and
/// pretext head, freeze, then fine-tuning of a new readout on a sampled
/// fraction of the training mask. Evaluated on every other node.
pub fn run_pf2(graph: &CellGraph, cfg: &TrainConfig) -> Result<(RunReport, TrainedModel)> {
    cfg.validate()?;
    if graph.has_measurement_columns() {
        return Err(Error::Validation("few-shot runs require a graph built without measurement features".into()));
    }
    if cfg.split != Split::Transductive {
        return Err(Error::Config("few-shot runs are transductive only".into()));
    }
    let mut meter = Meter::new();
    let input = GraphInput::from_graph(graph, cfg.edge_geometry)?;
    let mut backbone = Backbone::new(cfg.backbone, input.feature_width(), input.edge_width(), derive_seed(cfg.seed, STREAM_BACKBONE))?;
    let fixed = input.bytes();

    let mut pt_loss = Vec::new();
    if cfg.pretext != Pretext::None {
        let targets = pretext_targets(graph, cfg.pretext)?;
        let mut head = ReadoutHead::new(HeadKind::Pretext, cfg.backbone.hidden, derive_seed(cfg.seed, STREAM_PT_HEAD));
        let mut opt = Adam::new(cfg.hp_pt);
        for _ in 0..cfg.n_pt {
            let mut t = Tape::new();
            let h = backbone.forward(&mut t, &input)?;
            let z = head.forward(&mut t, h);
            let loss = loss_ssl(&mut t, z, input.src(), input.dst(), &targets)?;
            pt_loss.push(t.value(loss).item());
            let grads = t.backward(loss);
            meter.observe(fixed + t.bytes() + backbone.params.bytes() + head.params.bytes());
            opt.step(&mut [&mut backbone.params, &mut head.params], &grads)?;
        }
    }
    backbone.params.freeze();
    let frozen = backbone.params.clone();
    let emb = backbone.embed(&input)?;

    let labeled = sample_few_shot(&graph.masks.train, cfg.alpha_pct, derive_seed(cfg.seed, STREAM_FEW_SHOT));
    let reads_before = graph.label_reads();
    let labels = graph.label_rows(cfg.kpi, &labeled);
    let train_label_reads = graph.label_reads() - reads_before;
    let emb_labeled = Tensor::from_rows(&labeled.iter().map(|&i| emb.row(i).to_vec()).collect::<Vec<_>>())?;

    let mut head = ReadoutHead::new(HeadKind::Downstream, cfg.backbone.hidden, derive_seed(cfg.seed, STREAM_FT_HEAD));
    let mut opt = Adam::new(cfg.hp_ft);
    let mut train_loss = Vec::with_capacity(cfg.n_ft);
    for _ in 0..cfg.n_ft {
        let mut t = Tape::new();
        let h = t.constant(emb_labeled.clone());
        let p = head.forward(&mut t, h);
        let loss = loss_mse(&mut t, p, &labels)?;
        train_loss.push(t.value(loss).item());
        let grads = t.backward(loss);
        meter.observe(fixed + emb.bytes() + t.bytes() + backbone.params.bytes() + head.params.bytes());
        opt.step(&mut [&mut backbone.params, &mut head.params], &grads)?;
    }
    if !bitwise_equal(&backbone.params, &frozen) {
        return Err(Error::Validation("frozen backbone changed during fine-tuning".into()));
    }

    let eval: Vec<usize> = {
        let mut v: Vec<usize> = graph
            .masks
            .train
            .iter()
            .filter(|i| labeled.binary_search(i).is_err())
            .chain(&graph.masks.test)
            .copied()
            .collect();
        v.sort_unstable();
        v
    };
    let mut t = Tape::new();
    let h = t.constant(emb.clone());
    let p = head.forward(&mut t, h);
    let mse = mse_pct_on(t.value(p), graph, cfg.kpi, &eval)?;

    let mut r = report(Mode::Pf2, cfg, mse, &meter);
    r.pt_loss = pt_loss;
    r.train_loss = train_loss;
    r.labeled_nodes = labeled;
    r.train_label_reads = train_label_reads;
    r.eval_nodes = eval.len();
    if cfg.pretext == Pretext::None {
        r.notes.push("no pretraining: readout over a randomly initialized frozen backbone".into());
    }
    let model = TrainedModel {
        format_version: CHECKPOINT_FORMAT_VERSION,
        mode: Mode::Pf2,
        config: *cfg,
        stats: graph.stats.clone(),
        feature_names: graph.feature_names.clone(),
        backbone,
        head,
    };
    Ok((r, model))
}

/// Full-label benchmark with measurement features. Inductive runs need the
/// unseen graph `target`, which is standardized with the training graph's
/// statistics and whose labels are read only after training.
pub fn run_pf1(graph: &CellGraph, target: Option<&CellGraph>, cfg: &TrainConfig) -> Result<(RunReport, TrainedModel)> {
    if !graph.has_measurement_columns() {
        return Err(Error::Validation("full-feature runs require a graph built with measurement features".into()));
    }
    if let Some(b) = target {
        if !b.has_measurement_columns() {
            return Err(Error::Validation("the inductive target graph lacks measurement features".into()));
        }
    }
    supervised(Mode::Pf1, graph, target, cfg)
}

/// Fully supervised reference on a measurement-free graph: the same
/// backbone trained end to end on the whole training mask, no pretraining.
pub fn run_full_supervision(graph: &CellGraph, cfg: &TrainConfig) -> Result<(RunReport, TrainedModel)> {
    if graph.has_measurement_columns() {
        return Err(Error::Validation("the few-shot reference must not see measurement features".into()));
    }
    let mut r = supervised(Mode::Supervised, graph, None, cfg)?;
    r.0.notes.push("reference trained without measurement features".into());
    Ok(r)
}

fn supervised(mode: Mode, graph: &CellGraph, target: Option<&CellGraph>, cfg: &TrainConfig) -> Result<(RunReport, TrainedModel)> {
    cfg.validate()?;
    let eval_graph = match (cfg.split, target) {
        (Split::Transductive, None) => None,
        (Split::Inductive, Some(b)) => {
            if b.feature_names != graph.feature_names {
                return Err(Error::Validation("inductive graphs have different feature columns".into()));
            }
            Some(b.restandardized(&graph.stats)?)
        }
        (Split::Transductive, Some(_)) => return Err(Error::Config("transductive runs take no target graph".into())),
        (Split::Inductive, None) => return Err(Error::Config("inductive runs need a target graph".into())),
    };
    let target_reads_before = target.map(|b| b.label_reads());

    let mut meter = Meter::new();
    let input = GraphInput::from_graph(graph, cfg.edge_geometry)?;
    let mut backbone = Backbone::new(cfg.backbone, input.feature_width(), input.edge_width(), derive_seed(cfg.seed, STREAM_BACKBONE))?;
    let mut head = ReadoutHead::new(HeadKind::Downstream, cfg.backbone.hidden, derive_seed(cfg.seed, STREAM_FT_HEAD));
    let labeled = graph.masks.train.clone();
    let reads_before = graph.label_reads();
    let labels = graph.label_rows(cfg.kpi, &labeled);
    let train_label_reads = graph.label_reads() - reads_before;
    let idx: std::sync::Arc<[usize]> = labeled.clone().into();

    let mut opt = Adam::new(cfg.hp_ft);
    let mut train_loss = Vec::with_capacity(cfg.n_ft);
    for _ in 0..cfg.n_ft {
        let mut t = Tape::new();
        let h = backbone.forward(&mut t, &input)?;
        let hz = t.gather(h, idx.clone());
        let p = head.forward(&mut t, hz);
        let loss = loss_mse(&mut t, p, &labels)?;
        train_loss.push(t.value(loss).item());
        let grads = t.backward(loss);
        meter.observe(input.bytes() + t.bytes() + backbone.params.bytes() + head.params.bytes());
        opt.step(&mut [&mut backbone.params, &mut head.params], &grads)?;
    }
    let target_reads = match (target, target_reads_before) {
        (Some(b), Some(before)) => Some(b.label_reads() - before),
        _ => None,
    };

    let model = TrainedModel {
        format_version: CHECKPOINT_FORMAT_VERSION,
        mode,
        config: *cfg,
        stats: graph.stats.clone(),
        feature_names: graph.feature_names.clone(),
        backbone,
        head,
    };
    let (mse, eval_nodes) = match &eval_graph {
        None => (model.evaluate(graph, &graph.masks.test)?, graph.masks.test.len()),
        Some(b) => {
            let all: Vec<usize> = (0..b.n_nodes()).collect();
            let pred = model.predict(b)?;
            // labels are read from the caller's graph so its counter sees them
            let mse = mse_pct_on(&pred, target.expect("inductive target"), cfg.kpi, &all)?;
            (mse, all.len())
        }
    };
    let mut r = report(mode, cfg, mse, &meter);
    r.train_loss = train_loss;
    r.labeled_nodes = labeled;
    r.train_label_reads = train_label_reads;
    r.eval_nodes = eval_nodes;
    r.target_label_reads_during_training = target_reads;
    Ok((r, model))
}

/// `mse_pct(no pretraining) - mse_pct(pretrained)`; positive when
/// pretraining helped. The configurations must differ only in pretext.
pub fn gain(pretrained: &RunReport, baseline: &RunReport) -> Result<f64> {
    let mut a = pretrained.config;
    let mut b = baseline.config;
    a.pretext = Pretext::None;
    b.pretext = Pretext::None;
    if a != b || pretrained.mode != baseline.mode {
        return Err(Error::Config("gain compares runs that differ beyond the pretext".into()));
    }
    Ok(baseline.mse() - pretrained.mse())
}

/// Runs `f` over `items` on up to `jobs` threads, preserving order.
pub fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut out: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let slots = std::sync::Mutex::new(&mut out);
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("no poisoned worker")[i] = Some(r);
            });
        }
    });
    out.into_iter().map(|r| r.expect("every item processed")).collect()
}

/// Parameter stores are compared bitwise by value.
pub fn bitwise_equal(a: &ParamStore, b: &ParamStore) -> bool {
    a.iter().count() == b.iter().count()
        && a.iter().zip(b.iter()).all(|((ka, pa), (kb, pb))| {
            ka == kb
                && pa.value.shape() == pb.value.shape()
                && pa.value.data().iter().zip(pb.value.data()).all(|(x, y)| x.to_bits() == y.to_bits())
        })
}

#[cfg(test)]
mod tests;
