//! Attributed directed inter-cell graph built from a scenario and oracle output.

use std::collections::HashSet;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, GeomFeatures, Sector, SECTOR_RADIUS_M};
use crate::radio::{wrap_degrees, KpiBins, Simulation};
use crate::scenario::{Scenario, CELL_FEATURE_NAMES};

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

/// A source cell within this many dB of the serving cell counts as interfering.
pub const INTERFERENCE_WINDOW_DB: f64 = 12.0;
/// Co-sited cells on different carriers whose azimuths differ by at most
/// this much layer the same sector.
pub const CO_SECTOR_WINDOW_DEG: f64 = 30.0;
pub const TEST_FRACTION: f64 = 0.2;

pub const M_FEATURE_NAMES: [&str; 4] = ["rssi_perfect", "rssi_good", "rssi_fair", "rssi_bad"];
/// Width of [`CellGraph::edge_features`] without geometric columns.
pub const EDGE_ATTR_WIDTH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kpi {
    Sinr,
    Cqi,
}

impl Kpi {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kpi::Sinr => "sinr",
            Kpi::Cqi => "cqi",
        }
    }
}

impl std::str::FromStr for Kpi {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sinr" => Ok(Kpi::Sinr),
            "cqi" => Ok(Kpi::Cqi),
            other => Err(Error::Config(format!("unknown kpi {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Interfering,
    Complementing,
    Both,
}

impl Relation {
    pub fn onehot(&self) -> [f64; 3] {
        match self {
            Relation::Interfering => [1.0, 0.0, 0.0],
            Relation::Complementing => [0.0, 1.0, 0.0],
            Relation::Both => [0.0, 0.0, 1.0],
        }
    }

    pub fn from_onehot(v: &[f64; 3]) -> Option<Self> {
        match v {
            [a, b, c] if *a == 1.0 && *b == 0.0 && *c == 0.0 => Some(Relation::Interfering),
            [a, b, c] if *a == 0.0 && *b == 1.0 && *c == 0.0 => Some(Relation::Complementing),
            [a, b, c] if *a == 0.0 && *b == 0.0 && *c == 1.0 => Some(Relation::Both),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeAttr {
    pub relation_onehot: [f64; 3],
    pub strength: f64,
    pub distance_m: f64,
}

impl EdgeAttr {
    pub fn relation(&self) -> Option<Relation> {
        Relation::from_onehot(&self.relation_onehot)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub attr: EdgeAttr,
    pub geom: GeomFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    /// Column statistics over `rows[idx]`; constant columns get unit scale.
    pub fn fit(rows: &[Vec<f64>], idx: &[usize]) -> Result<Self> {
        let first = idx.first().ok_or(Error::Empty("standardization rows"))?;
        let width = rows[*first].len();
        let n = idx.len() as f64;
        let mut mean = vec![0.0; width];
        for &i in idx {
            for (m, v) in mean.iter_mut().zip(&rows[i]) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for &i in idx {
            for ((s, v), m) in var.iter_mut().zip(&rows[i]).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter()
            .map(|r| {
                if r.len() != self.mean.len() {
                    return Err(Error::Shape(format!(
                        "feature width {} does not match statistics width {}",
                        r.len(),
                        self.mean.len()
                    )));
                }
                Ok(r.iter()
                    .zip(self.mean.iter().zip(&self.std))
                    .map(|(v, (m, s))| (v - m) / s)
                    .collect())
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub sinr: Vec<KpiBins>,
    pub cqi: Vec<KpiBins>,
}

impl Labels {
    pub fn get(&self, kpi: Kpi) -> &[KpiBins] {
        match kpi {
            Kpi::Sinr => &self.sinr,
            Kpi::Cqi => &self.cqi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Masks {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    #[serde(default)]
    pub few_shot: Vec<usize>,
}

/// Counts label rows handed out, so protocols can prove which labels they touched.
#[derive(Debug, Default)]
pub struct LabelCounter(AtomicUsize);

impl Clone for LabelCounter {
    fn clone(&self) -> Self {
        LabelCounter(AtomicUsize::new(self.0.load(Ordering::Relaxed)))
    }
}

impl PartialEq for LabelCounter {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGraph {
    pub schema_version: u32,
    pub nodes: Vec<String>,
    pub feature_names: Vec<String>,
    /// Standardized node features, one row per node.
    pub node_features: Vec<Vec<f64>>,
    pub raw_features: Vec<Vec<f64>>,
    pub stats: FeatureStats,
    pub edges: Vec<Edge>,
    pub labels: Labels,
    pub masks: Masks,
    pub include_m: bool,
    #[serde(skip)]
    label_reads: LabelCounter,
}

/// Interference and coverage-overlap counts between every ordered cell pair.
struct PixelCounts {
    n: usize,
    served: Vec<usize>,
    /// `interf[i * n + j]`: pixels served by j where i is within the window.
    interf: Vec<usize>,
    /// `cover[i * n + j]`: pixels served by j (on j's carrier) also served by i.
    cover: Vec<usize>,
}

impl PixelCounts {
    fn new(scenario: &Scenario, sim: &Simulation) -> Self {
        let map = &sim.map;
        let n = scenario.len();
        let slots = map.carriers.len();
        let by_slot: Vec<Vec<usize>> = (0..slots)
            .map(|k| {
                (0..n)
                    .filter(|&i| map.carrier_slot(scenario.cells[i].carrier_mhz) == Some(k))
                    .collect()
            })
            .collect();
        let mut served = vec![0; n];
        let mut interf = vec![0; n * n];
        let mut cover = vec![0; n * n];
        let mut servers = vec![0usize; slots];
        for p in 0..map.n_pixels() {
            for k in 0..slots {
                let Some(j) = map.serving_cell(p, k) else { continue };
                servers[k] = j;
                served[j] += 1;
                let pj = map.rssi_dbm(p, j);
                for &i in &by_slot[k] {
                    if i != j && map.rssi_dbm(p, i) >= pj - INTERFERENCE_WINDOW_DB {
                        interf[i * n + j] += 1;
                    }
                }
            }
            for kj in 0..slots {
                for ki in 0..slots {
                    if ki != kj {
                        cover[servers[ki] * n + servers[kj]] += 1;
                    }
                }
            }
        }
        Self {
            n,
            served,
            interf,
            cover,
        }
    }

    fn fraction(&self, counts: &[usize], i: usize, j: usize) -> f64 {
        match self.served[j] {
            0 => 0.0,
            s => counts[i * self.n + j] as f64 / s as f64,
        }
    }

    fn interference(&self, i: usize, j: usize) -> f64 {
        self.fraction(&self.interf, i, j)
    }

    fn coverage(&self, i: usize, j: usize) -> f64 {
        self.fraction(&self.cover, i, j)
    }
}

/// Directed edges with relation attributes and pair geometry.
///
/// For an unordered pair the relation comes from carriers and geometry:
/// same carrier with overlapping sectors interferes (or is `both` when the
/// cells share a site); different carriers complement when co-sited within
/// [`CO_SECTOR_WINDOW_DEG`] or, across sites, when their sectors overlap.
/// Overlap-based candidates become edges only when the measured strength is
/// positive in at least one direction; co-sited layering always does. Every
/// edge is emitted in both directions with direction-specific strength.
pub fn derive_edges(scenario: &Scenario, sim: &Simulation) -> Vec<Edge> {
    let counts = PixelCounts::new(scenario, sim);
    let cells = &scenario.cells;
    let sectors: Vec<Sector> = cells.iter().map(Sector::from_cell).collect();
    let mut edges = Vec::new();
    for i in 0..cells.len() {
        for j in i + 1..cells.len() {
            let (a, b) = (&cells[i], &cells[j]);
            let co_sited = a.site_id == b.site_id;
            let same_carrier = a.carrier_mhz == b.carrier_mhz;
            let (relation, s_ij, s_ji, needs_overlap) = if same_carrier {
                let rel = if co_sited {
                    Relation::Both
                } else {
                    Relation::Interfering
                };
                (rel, counts.interference(i, j), counts.interference(j, i), true)
            } else if co_sited {
                if wrap_degrees(a.azimuth_deg - b.azimuth_deg).abs() > CO_SECTOR_WINDOW_DEG {
                    continue;
                }
                (Relation::Complementing, counts.coverage(i, j), counts.coverage(j, i), false)
            } else {
                (Relation::Complementing, counts.coverage(i, j), counts.coverage(j, i), true)
            };
            if needs_overlap && s_ij <= 0.0 && s_ji <= 0.0 {
                continue;
            }
            let overlap = geometry::sector_overlap(&sectors[i], &sectors[j], geometry::DEFAULT_GRID_STEP_M);
            if needs_overlap && overlap.count == 0 {
                continue;
            }
            let geom = geometry::geometry_from_overlap(&sectors[i], &sectors[j], &overlap);
            let distance_m = a.position().dist(b.position());
            let onehot = relation.onehot();
            for (src, dst, strength) in [(i, j, s_ij), (j, i, s_ji)] {
                edges.push(Edge {
                    src,
                    dst,
                    attr: EdgeAttr {
                        relation_onehot: onehot,
                        strength,
                        distance_m,
                    },
                    geom,
                });
            }
        }
    }
    edges.sort_by_key(|e| (e.src, e.dst));
    edges
}

/// Seeded 80/20 node split; both halves ascending.
pub fn split_nodes(n: usize, seed: u64) -> Masks {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_test = (n as f64 * TEST_FRACTION).round() as usize;
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Masks {
        train,
        test,
        few_shot: Vec::new(),
    }
}

/// Builds the graph; node features carry the RSSI bins only when `include_m`.
pub fn build_graph(scenario: &Scenario, sim: &Simulation, include_m: bool, seed: u64) -> Result<CellGraph> {
    let n = scenario.len();
    if n == 0 {
        return Err(Error::Empty("scenario has no cells"));
    }
    if sim.sinr.len() != n || sim.cqi.len() != n || sim.rssi.len() != n || sim.map.n_cells != n {
        return Err(Error::Shape(format!(
            "oracle output covers {} cells, scenario has {n}",
            sim.sinr.len()
        )));
    }
    let mut feature_names: Vec<String> = CELL_FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    if include_m {
        feature_names.extend(M_FEATURE_NAMES.iter().map(|s| s.to_string()));
    }
    let raw_features: Vec<Vec<f64>> = scenario
        .cells
        .iter()
        .zip(&sim.rssi)
        .map(|(c, m)| {
            let mut x = c.encode();
            if include_m {
                x.extend_from_slice(&m.to_array());
            }
            x
        })
        .collect();
    let masks = split_nodes(n, seed);
    let fit_rows = if masks.train.is_empty() {
        &masks.test
    } else {
        &masks.train
    };
    let stats = FeatureStats::fit(&raw_features, fit_rows)?;
    let node_features = stats.apply(&raw_features)?;
    let graph = CellGraph {
        schema_version: GRAPH_SCHEMA_VERSION,
        nodes: scenario.cells.iter().map(|c| c.cell_id.clone()).collect(),
        feature_names,
        node_features,
        raw_features,
        stats,
        edges: derive_edges(scenario, sim),
        labels: Labels {
            sinr: sim.sinr.clone(),
            cqi: sim.cqi.clone(),
        },
        masks,
        include_m,
        label_reads: LabelCounter::default(),
    };
    graph.validate()?;
    Ok(graph)
}

impl CellGraph {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_width(&self) -> usize {
        self.feature_names.len()
    }

    /// True when any node-feature column derives from RSSI measurements.
    pub fn has_measurement_columns(&self) -> bool {
        self.feature_names.iter().any(|f| f.starts_with("rssi_"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != GRAPH_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                artifact: "graph",
                found: self.schema_version,
                expected: GRAPH_SCHEMA_VERSION,
            });
        }
        let n = self.n_nodes();
        let w = self.feature_width();
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.node_features.len() != n || self.raw_features.len() != n {
            return bad("feature row count differs from node count".into());
        }
        if self.node_features.iter().chain(&self.raw_features).any(|r| r.len() != w) {
            return Err(Error::Shape(format!("node feature rows must have width {w}")));
        }
        if self.node_features.iter().flatten().any(|v| !v.is_finite()) {
            return bad("non-finite node feature".into());
        }
        if self.stats.mean.len() != w || self.stats.std.len() != w {
            return Err(Error::Shape("feature statistics width mismatch".into()));
        }
        if self.include_m != self.has_measurement_columns() {
            return bad("include_m flag disagrees with feature columns".into());
        }
        if self.labels.sinr.len() != n || self.labels.cqi.len() != n {
            return bad("label count differs from node count".into());
        }
        let mut pairs = HashSet::with_capacity(self.edges.len());
        for e in &self.edges {
            if e.src >= n || e.dst >= n {
                return bad(format!("edge {}->{} out of range", e.src, e.dst));
            }
            if e.src == e.dst {
                return bad(format!("self-loop on node {}", e.src));
            }
            if e.attr.relation().is_none() {
                return bad(format!("edge {}->{} relation is not one-hot", e.src, e.dst));
            }
            if !(0.0..=1.0).contains(&e.attr.strength) || !(e.attr.distance_m >= 0.0) {
                return bad(format!("edge {}->{} attribute out of range", e.src, e.dst));
            }
            if !pairs.insert((e.src, e.dst)) {
                return bad(format!("duplicate edge {}->{}", e.src, e.dst));
            }
        }
        if let Some(e) = self.edges.iter().find(|e| !pairs.contains(&(e.dst, e.src))) {
            return bad(format!("edge {}->{} lacks its reverse", e.src, e.dst));
        }
        let mut seen = vec![0u8; n];
        for (bit, mask) in [(1u8, &self.masks.train), (2, &self.masks.test)] {
            for &i in mask {
                if i >= n || seen[i] & bit != 0 {
                    return bad(format!("mask index {i} out of range or repeated"));
                }
                seen[i] |= bit;
            }
        }
        if seen.contains(&3) {
            return bad("train and test masks overlap".into());
        }
        if self.masks.few_shot.iter().any(|&i| i >= n || seen[i] & 1 == 0) {
            return bad("few-shot set must lie inside the training mask".into());
        }
        Ok(())
    }

    /// Re-standardizes node features with statistics fitted elsewhere.
    pub fn restandardized(&self, stats: &FeatureStats) -> Result<CellGraph> {
        let mut g = self.clone();
        g.node_features = stats.apply(&self.raw_features)?;
        g.stats = stats.clone();
        Ok(g)
    }

    /// Label rows for `idx`; every call is counted.
    pub fn label_rows(&self, kpi: Kpi, idx: &[usize]) -> Vec<[f64; 4]> {
        self.label_reads.0.fetch_add(idx.len(), Ordering::Relaxed);
        let labels = self.labels.get(kpi);
        idx.iter().map(|&i| labels[i].to_array()).collect()
    }

    pub fn label_reads(&self) -> usize {
        self.label_reads.0.load(Ordering::Relaxed)
    }

    /// Edge feature rows: relation one-hot, strength, distance in units of
    /// the sector radius, plus target IA and ID when `with_geometry`.
    pub fn edge_features(&self, with_geometry: bool) -> Vec<Vec<f64>> {
        self.edges
            .iter()
            .map(|e| {
                let mut v = e.attr.relation_onehot.to_vec();
                v.push(e.attr.strength);
                v.push(e.attr.distance_m / SECTOR_RADIUS_M);
                if with_geometry {
                    v.push(e.geom.target_ia);
                    v.push(e.geom.target_id);
                }
                v
            })
            .collect()
    }

    /// Mean in-degree plus one: cells consulted per estimate.
    pub fn search_space_per_result(&self) -> f64 {
        self.n_edges() as f64 / self.n_nodes().max(1) as f64 + 1.0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<CellGraph> {
        let probe: serde_json::Value = serde_json::from_str(text)?;
        let found = probe
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Parse("graph file lacks schema_version".into()))?;
        if found != GRAPH_SCHEMA_VERSION as u64 {
            return Err(Error::SchemaVersion {
                artifact: "graph",
                found: found as u32,
                expected: GRAPH_SCHEMA_VERSION,
            });
        }
        let g: CellGraph = serde_json::from_value(probe)?;
        g.validate()?;
        Ok(g)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::write_text(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<CellGraph> {
        CellGraph::from_json(&crate::read_text(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::simulate;
    use crate::scenario::{Bounds, Cell};

    fn cell(id: &str, site: &str, x: f64, y: f64, az: f64, carrier: u32) -> Cell {
        Cell {
            cell_id: id.into(),
            site_id: site.into(),
            x,
            y,
            azimuth_deg: az,
            mech_tilt_deg: 3.0,
            antenna_height_m: 30.0,
            h_beamwidth_deg: 65.0,
            carrier_mhz: carrier,
            tx_power_dbm: 43.0,
        }
    }

    fn graph_of(cells: Vec<Cell>, side: f64, include_m: bool) -> (Scenario, CellGraph) {
        let s = Scenario::new("t", Bounds::square(side), 100.0, cells).unwrap();
        let sim = simulate(&s).unwrap();
        let g = build_graph(&s, &sim, include_m, 3).unwrap();
        (s, g)
    }

    #[test]
    fn distant_same_carrier_cells_have_no_edge() {
        let (_, g) = graph_of(
            vec![
                cell("a", "s1", 100.0, 100.0, 270.0, 2100),
                cell("b", "s2", 25_100.0, 100.0, 90.0, 2100),
            ],
            25_200.0,
            false,
        );
        assert!(g.edges.is_empty());
    }

    #[test]
    fn co_sited_layers_complement_both_ways() {
        let (_, g) = graph_of(
            vec![cell("a", "s", 1000.0, 1000.0, 10.0, 800), cell("b", "s", 1000.0, 1000.0, 20.0, 2100)],
            2000.0,
            false,
        );
        assert_eq!(g.edges.len(), 2);
        for e in &g.edges {
            assert_eq!(e.attr.relation(), Some(Relation::Complementing));
            assert_eq!(e.attr.distance_m, 0.0);
        }
    }

    #[test]
    fn co_sited_same_carrier_overlap_is_both() {
        let (_, g) = graph_of(
            vec![cell("a", "s", 1000.0, 1000.0, 0.0, 800), cell("b", "s", 1000.0, 1000.0, 50.0, 800)],
            2000.0,
            false,
        );
        assert_eq!(g.edges.len(), 2);
        assert!(g.edges.iter().all(|e| e.attr.relation() == Some(Relation::Both)));
    }

    #[test]
    fn include_m_adds_four_columns() {
        let cells = vec![
            cell("a", "s1", 500.0, 500.0, 45.0, 800),
            cell("b", "s2", 1500.0, 1500.0, 225.0, 800),
        ];
        let (_, without) = graph_of(cells.clone(), 2000.0, false);
        let (_, with) = graph_of(cells, 2000.0, true);
        assert_eq!(with.feature_width(), without.feature_width() + 4);
        assert!(with.has_measurement_columns());
        assert!(!without.has_measurement_columns());
    }

    #[test]
    fn split_sizes() {
        let m = split_nodes(120, 1);
        assert_eq!((m.train.len(), m.test.len()), (96, 24));
        let m = split_nodes(1, 1);
        assert_eq!((m.train.len(), m.test.len()), (1, 0));
    }

    #[test]
    fn standardization_zeroes_training_means() {
        let cells = (0..6)
            .map(|i| cell(&format!("c{i}"), &format!("s{i}"), 300.0 * i as f64 + 10.0, 500.0, 60.0 * i as f64, 2100))
            .collect();
        let (_, g) = graph_of(cells, 2000.0, true);
        for col in 0..g.feature_width() {
            let m: f64 = g.masks.train.iter().map(|&i| g.node_features[i][col]).sum::<f64>() / g.masks.train.len() as f64;
            assert!(m.abs() < 1e-9, "column {col} mean {m}");
        }
    }

    #[test]
    fn json_round_trip_and_schema_check() {
        let (_, g) = graph_of(
            vec![cell("a", "s", 1000.0, 1000.0, 10.0, 800), cell("b", "s", 1000.0, 1000.0, 20.0, 2100)],
            2000.0,
            false,
        );
        let back = CellGraph::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(back, g);
        let mut v: serde_json::Value = serde_json::from_str(&g.to_json().unwrap()).unwrap();
        v["schema_version"] = 99.into();
        assert!(matches!(
            CellGraph::from_json(&v.to_string()),
            Err(Error::SchemaVersion { found: 99, .. })
        ));
    }

    #[test]
    fn label_reads_are_counted() {
        let (_, g) = graph_of(vec![cell("a", "s", 1000.0, 1000.0, 10.0, 800)], 2000.0, false);
        assert_eq!(g.label_reads(), 0);
        let rows = g.label_rows(Kpi::Sinr, &[0]);
        assert_eq!(rows.len(), 1);
        assert_eq!(g.label_reads(), 1);
    }

    #[test]
    fn restandardize_rejects_width_mismatch() {
        let (_, g) = graph_of(vec![cell("a", "s", 1000.0, 1000.0, 10.0, 800)], 2000.0, false);
        let stats = FeatureStats {
            mean: vec![0.0; 3],
            std: vec![1.0; 3],
        };
        assert!(matches!(g.restandardized(&stats), Err(Error::Shape(_))));
    }
}
