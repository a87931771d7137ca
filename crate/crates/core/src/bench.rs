//! Inference cost of a single forward pass.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CellGraph;
use crate::models::{Backbone, BackboneConfig, BackboneKind, GraphInput, HeadKind, ReadoutHead};
use crate::tensor::Tape;

pub const FORWARD_BUDGET_S: f64 = 0.2;
pub const MEMORY_BUDGET_BYTES: usize = 15 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub backbone: BackboneKind,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub reps: usize,
    /// Median wall time of one backbone plus downstream readout pass.
    pub forward_s: f64,
    pub param_bytes: usize,
    /// Peak bytes held while the pass runs with each value freed after its
    /// last use, including the copies of parameters and inputs the pass
    /// reads.
    pub activation_bytes: usize,
    /// Node features, edge attributes and index arrays.
    pub input_bytes: usize,
    /// Mean in-degree plus one: cells consulted per estimate.
    pub search_space_per_result: f64,
}

impl BenchReport {
    pub fn model_bytes(&self) -> usize {
        self.param_bytes + self.activation_bytes
    }

    pub fn within_budget(&self) -> bool {
        self.forward_s < FORWARD_BUDGET_S && self.model_bytes() < MEMORY_BUDGET_BYTES
    }
}

/// Times `reps` forward passes of a freshly initialized default-size model.
pub fn bench_backbone(graph: &CellGraph, kind: BackboneKind, seed: u64, reps: usize) -> Result<BenchReport> {
    let input = GraphInput::from_graph(graph, false)?;
    let config = BackboneConfig::new(kind);
    let backbone = Backbone::new(config, input.feature_width(), input.edge_width(), seed)?;
    let head = ReadoutHead::new(HeadKind::Downstream, config.hidden, seed.wrapping_add(1));
    bench_model(graph, &input, &backbone, &head, reps)
}

pub fn bench_model(
    graph: &CellGraph,
    input: &GraphInput,
    backbone: &Backbone,
    head: &ReadoutHead,
    reps: usize,
) -> Result<BenchReport> {
    if reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    let plan = {
        let mut t = Tape::new();
        let h = backbone.forward(&mut t, input)?;
        let p = head.forward(&mut t, h);
        Arc::new(t.release_plan(&[p]))
    };
    let mut times = Vec::with_capacity(reps);
    let mut activation_bytes = 0;
    for _ in 0..reps {
        let start = Instant::now();
        let mut t = Tape::with_plan(plan.clone());
        let h = backbone.forward(&mut t, input)?;
        let p = head.forward(&mut t, h);
        std::hint::black_box(t.value(p));
        times.push(start.elapsed().as_secs_f64());
        activation_bytes = t.peak_live_bytes();
    }
    times.sort_by(f64::total_cmp);
    Ok(BenchReport {
        backbone: backbone.config.kind,
        n_nodes: input.n_nodes(),
        n_edges: input.n_edges(),
        reps,
        forward_s: times[reps / 2],
        param_bytes: backbone.params.bytes() + head.params.bytes(),
        activation_bytes,
        input_bytes: input.bytes(),
        search_space_per_result: graph.search_space_per_result(),
    })
}
