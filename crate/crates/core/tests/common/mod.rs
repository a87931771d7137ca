//! Fixtures and independent oracles shared by the integration suites.
#![allow(dead_code)]

use cellgraph::geometry::{sector_area, Sector};
use cellgraph::graph::{build_graph, CellGraph, INTERFERENCE_WINDOW_DB};
use cellgraph::models::GraphInput;
use cellgraph::radio::{simulate, Simulation};
use cellgraph::scenario::{generate_scenario, Bounds, Cell, GenerateParams, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 50 sites with two sectors on two carriers: 200 cells.
pub fn reference_scenario() -> Scenario {
    generate_scenario(&GenerateParams {
        n_sites: 50,
        sectors_per_site: 2,
        carriers: vec![800, 2100],
        bounds: Bounds::square(8000.0),
        seed: 42,
    })
    .unwrap()
}

pub fn reference_graph() -> CellGraph {
    let s = reference_scenario();
    let sim = simulate(&s).unwrap();
    build_graph(&s, &sim, false, 42).unwrap()
}

/// Small deployment on a coarse grid.
pub fn small_scenario(seed: u64, n_sites: usize, sectors: usize, carriers: &[u32], side_m: f64, res_m: f64) -> Scenario {
    let mut s = generate_scenario(&GenerateParams {
        n_sites,
        sectors_per_site: sectors,
        carriers: carriers.to_vec(),
        bounds: Bounds::square(side_m),
        seed,
    })
    .unwrap();
    s.grid_resolution_m = res_m;
    s
}

pub fn cell(id: &str, site: &str, x: f64, y: f64, azimuth: f64, carrier: u32, power: f64) -> Cell {
    Cell {
        cell_id: id.into(),
        site_id: site.into(),
        x,
        y,
        azimuth_deg: azimuth,
        mech_tilt_deg: 4.0,
        antenna_height_m: 30.0,
        h_beamwidth_deg: 65.0,
        carrier_mhz: carrier,
        tx_power_dbm: power,
    }
}

/// Random directed graph with features in [-1.5, 1.5) and attributes in [-1, 1).
pub fn random_input(seed: u64, n: usize, f: usize, d: usize, p: f64) -> GraphInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..f).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    let attr: Vec<Vec<f64>> = edges.iter().map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    GraphInput::new(&x, &edges, &attr, d).unwrap()
}

/// Membership by polar angle and radius.
fn inside(s: &Sector, x: f64, y: f64) -> bool {
    let (dx, dy) = (x - s.apex.x, y - s.apex.y);
    let r = dx.hypot(dy);
    if r > s.radius_m {
        return false;
    }
    if r == 0.0 {
        return true;
    }
    let bearing = dx.atan2(dy).to_degrees();
    let off = (bearing - s.azimuth_deg + 540.0).rem_euclid(360.0) - 180.0;
    off.abs() <= s.half_angle_deg
}

/// Box around the apex and a densely sampled arc.
fn hull_box(s: &Sector, pad: f64) -> (f64, f64, f64, f64) {
    let (mut x0, mut y0, mut x1, mut y1) = (s.apex.x, s.apex.y, s.apex.x, s.apex.y);
    let steps = (s.half_angle_deg * 8.0).ceil() as usize;
    for k in 0..=2 * steps {
        let a = (s.azimuth_deg - s.half_angle_deg + k as f64 * s.half_angle_deg / steps as f64).to_radians();
        let (x, y) = (s.apex.x + s.radius_m * a.sin(), s.apex.y + s.radius_m * a.cos());
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    (x0 - pad, y0 - pad, x1 + pad, y1 + pad)
}

/// Fine-grid reference for a sector pair.
pub struct BruteOverlap {
    pub area_m2: f64,
    pub ia: f64,
    pub id_m: f64,
}

pub fn brute_overlap(a: &Sector, b: &Sector, step: f64) -> BruteOverlap {
    let (ax0, ay0, ax1, ay1) = hull_box(a, step);
    let (bx0, by0, bx1, by1) = hull_box(b, step);
    let (x0, y0, x1, y1) = (ax0.max(bx0), ay0.max(by0), ax1.min(bx1), ay1.min(by1));
    let (mut n, mut da, mut db) = (0usize, 0.0, 0.0);
    if x1 > x0 && y1 > y0 {
        let cols = ((x1 - x0) / step).ceil() as usize;
        let rows = ((y1 - y0) / step).ceil() as usize;
        for r in 0..rows {
            let y = y0 + (r as f64 + 0.5) * step;
            for c in 0..cols {
                let x = x0 + (c as f64 + 0.5) * step;
                if inside(a, x, y) && inside(b, x, y) {
                    n += 1;
                    da += (x - a.apex.x).hypot(y - a.apex.y);
                    db += (x - b.apex.x).hypot(y - b.apex.y);
                }
            }
        }
    }
    let area = n as f64 * step * step;
    let union = sector_area(a) + sector_area(b) - area;
    BruteOverlap {
        area_m2: area,
        ia: if n == 0 { 0.0 } else { area / union },
        id_m: if n == 0 { 0.0 } else { (da + db) / (2.0 * n as f64) },
    }
}

/// Per-pixel recount of directed interference strengths: the share of j's
/// served pixels where i arrives within the interference window of j.
pub fn recount_interference(scenario: &Scenario, sim: &Simulation) -> Vec<Vec<f64>> {
    let n = scenario.len();
    let map = &sim.map;
    let mut hits = vec![vec![0usize; n]; n];
    let mut served = vec![0usize; n];
    for p in 0..map.n_pixels() {
        let rec = map.pixel(p);
        for &(carrier, j, _, _) in &rec.per_carrier {
            served[j] += 1;
            let pj = rec.rssi_dbm_per_cell[j];
            for (i, c) in scenario.cells.iter().enumerate() {
                if i != j && c.carrier_mhz == carrier && rec.rssi_dbm_per_cell[i] >= pj - INTERFERENCE_WINDOW_DB {
                    hits[i][j] += 1;
                }
            }
        }
    }
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if served[j] == 0 { 0.0 } else { hits[i][j] as f64 / served[j] as f64 })
                .collect()
        })
        .collect()
}

/// Checks that deleting cell `c` never lowers SINR on a same-carrier pixel
/// it did not serve and leaves every other carrier untouched. Returns the
/// number of pixel slots compared.
pub fn check_removal(scenario: &Scenario, sim: &Simulation, c: usize) -> Result<usize, String> {
    let reduced = simulate(&scenario.without_cell(c)).map_err(|e| e.to_string())?;
    let (a, b) = (&sim.map, &reduced.map);
    let carrier = scenario.cells[c].carrier_mhz;
    let mut compared = 0;
    for (k, &f) in a.carriers.iter().enumerate() {
        let Some(kb) = b.carrier_slot(f) else { continue };
        for p in 0..a.n_pixels() {
            let Some(j) = a.serving_cell(p, k) else { continue };
            if j == c {
                continue;
            }
            let expected_server = if j > c { j - 1 } else { j };
            if b.serving_cell(p, kb) != Some(expected_server) {
                return Err(format!("pixel {p} changed server after removing cell {c}"));
            }
            let (before, after) = (a.sinr_db(p, k).unwrap(), b.sinr_db(p, kb).unwrap());
            if f == carrier && after < before {
                return Err(format!("pixel {p}: SINR fell {before} -> {after} after removing cell {c}"));
            }
            if f != carrier && after.to_bits() != before.to_bits() {
                return Err(format!("pixel {p}: other-carrier cell {c} changed SINR {before} -> {after}"));
            }
            compared += 1;
        }
    }
    Ok(compared)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}
