//! Desk-scale downlink propagation model.
//!
//! Produces per-pixel serving cell, SINR and CQI for every carrier, and per
//! cell the Perfect/Good/Fair/Bad area fractions of SINR, CQI and RSSI over
//! the pixels that cell serves.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Scenario;

pub const REFERENCE_DISTANCE_M: f64 = 1000.0;
pub const PATH_LOSS_EXPONENT: f64 = 3.5;
pub const PEAK_ANTENNA_GAIN_DBI: f64 = 15.0;
pub const MAX_ATTENUATION_DB: f64 = 25.0;
pub const V_BEAMWIDTH_DEG: f64 = 10.0;
/// Fixed gain added to every link on top of the antenna pattern.
pub const LINK_GAIN_DB: f64 = 15.0;
pub const NOISE_FLOOR_DBM: f64 = -110.0;
pub const MAX_PIXELS: usize = 4_000_000;

/// Lower edges of the Perfect, Good and Fair bins; anything below `fair` is Bad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinThresholds {
    pub perfect: f64,
    pub good: f64,
    pub fair: f64,
}

impl BinThresholds {
    /// Bin index: 0 Perfect, 1 Good, 2 Fair, 3 Bad.
    pub fn classify(&self, v: f64) -> usize {
        if v >= self.perfect {
            0
        } else if v >= self.good {
            1
        } else if v >= self.fair {
            2
        } else {
            3
        }
    }
}

pub const SINR_BINS_DB: BinThresholds = BinThresholds {
    perfect: 20.0,
    good: 10.0,
    fair: 0.0,
};
pub const CQI_BINS: BinThresholds = BinThresholds {
    perfect: 12.0,
    good: 9.0,
    fair: 5.0,
};
pub const RSSI_BINS_DBM: BinThresholds = BinThresholds {
    perfect: -80.0,
    good: -95.0,
    fair: -105.0,
};

/// Fractions of a cell's served area in each quality bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpiBins {
    pub perfect: f64,
    pub good: f64,
    pub fair: f64,
    pub bad: f64,
}

impl KpiBins {
    pub const WIDTH: usize = 4;

    pub fn new(perfect: f64, good: f64, fair: f64, bad: f64) -> Self {
        Self {
            perfect,
            good,
            fair,
            bad,
        }
    }

    /// Label for a cell that serves no pixels.
    pub fn all_bad() -> Self {
        Self::new(0.0, 0.0, 0.0, 1.0)
    }

    pub fn from_counts(counts: [usize; 4]) -> Self {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Self::all_bad();
        }
        let t = total as f64;
        Self::new(
            counts[0] as f64 / t,
            counts[1] as f64 / t,
            counts[2] as f64 / t,
            counts[3] as f64 / t,
        )
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.perfect, self.good, self.fair, self.bad]
    }

    pub fn sum(&self) -> f64 {
        self.to_array().iter().sum()
    }

    pub fn is_simplex(&self, tol: f64) -> bool {
        self.to_array().iter().all(|v| (0.0..=1.0).contains(v)) && (self.sum() - 1.0).abs() <= tol
    }
}

/// Log-distance path loss: free space up to 1 km, exponent 3.5 beyond.
pub fn path_loss_db(d_m: f64, f_mhz: f64) -> f64 {
    let d = d_m.max(1.0);
    let n = if d > REFERENCE_DISTANCE_M {
        PATH_LOSS_EXPONENT
    } else {
        2.0
    };
    // the 20·log10(d0_km) term vanishes for d0 = 1 km
    32.45 + 20.0 * f_mhz.log10() + 10.0 * n * (d / REFERENCE_DISTANCE_M).log10()
}

/// Parabolic horizontal+vertical pattern in dBi, offsets in degrees.
pub fn antenna_gain_db(bearing_offset_deg: f64, tilt_offset_deg: f64, h_beamwidth_deg: f64) -> f64 {
    let h = bearing_offset_deg / h_beamwidth_deg;
    let v = tilt_offset_deg / V_BEAMWIDTH_DEG;
    PEAK_ANTENNA_GAIN_DBI - (12.0 * h * h + 12.0 * v * v).min(MAX_ATTENUATION_DB)
}

/// Maps an angle difference into [-180, 180].
pub fn wrap_degrees(deg: f64) -> f64 {
    let a = (deg + 180.0).rem_euclid(360.0) - 180.0;
    if a < -180.0 {
        a + 360.0
    } else {
        a
    }
}

/// Compass bearing from `from` to `to`, degrees clockwise from north.
pub fn compass_bearing_deg(dx: f64, dy: f64) -> f64 {
    dx.atan2(dy).to_degrees()
}

/// CQI as an affine quantization of SINR, clamped to 1..=15.
pub fn cqi_from_sinr(sinr_db: f64) -> u8 {
    let q = ((sinr_db + 6.0) / 2.2).floor() + 1.0;
    q.clamp(1.0, 15.0) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub xmin: f64,
    pub ymin: f64,
    pub resolution_m: f64,
    pub ncols: usize,
    pub nrows: usize,
}

impl GridSpec {
    pub fn for_scenario(scenario: &Scenario) -> Result<Self> {
        let b = scenario.bounds;
        let res = scenario.grid_resolution_m;
        let ncols = (b.width() / res).ceil() as usize;
        let nrows = (b.height() / res).ceil() as usize;
        let pixels = ncols.saturating_mul(nrows);
        if pixels > MAX_PIXELS {
            return Err(Error::PixelBudget {
                pixels,
                limit: MAX_PIXELS,
            });
        }
        Ok(Self {
            xmin: b.xmin,
            ymin: b.ymin,
            resolution_m: res,
            ncols,
            nrows,
        })
    }

    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixel center, row-major index.
    pub fn center(&self, pixel: usize) -> (f64, f64) {
        let r = pixel / self.ncols;
        let c = pixel % self.ncols;
        (
            self.xmin + (c as f64 + 0.5) * self.resolution_m,
            self.ymin + (r as f64 + 0.5) * self.resolution_m,
        )
    }
}

const NO_SERVER: u32 = u32::MAX;

/// Per-pixel oracle output.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMap {
    pub grid: GridSpec,
    /// Carriers present in the scenario, ascending.
    pub carriers: Vec<u32>,
    pub n_cells: usize,
    rssi_dbm: Vec<f64>,
    serving: Vec<u32>,
    sinr_db: Vec<f64>,
    cqi: Vec<u8>,
}

/// One pixel of a [`CoverageMap`], expanded for export.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelRecord {
    pub x: f64,
    pub y: f64,
    /// (carrier, serving cell index, SINR dB, CQI) per carrier.
    pub per_carrier: Vec<(u32, usize, f64, u8)>,
    pub rssi_dbm_per_cell: Vec<f64>,
}

impl CoverageMap {
    pub fn n_pixels(&self) -> usize {
        self.grid.len()
    }

    pub fn carrier_slot(&self, carrier_mhz: u32) -> Option<usize> {
        self.carriers.iter().position(|&c| c == carrier_mhz)
    }

    /// Received power of `cell` at `pixel` on the cell's own carrier.
    pub fn rssi_dbm(&self, pixel: usize, cell: usize) -> f64 {
        self.rssi_dbm[pixel * self.n_cells + cell]
    }

    pub fn serving_cell(&self, pixel: usize, slot: usize) -> Option<usize> {
        match self.serving[pixel * self.carriers.len() + slot] {
            NO_SERVER => None,
            c => Some(c as usize),
        }
    }

    pub fn sinr_db(&self, pixel: usize, slot: usize) -> Option<f64> {
        self.serving_cell(pixel, slot)
            .map(|_| self.sinr_db[pixel * self.carriers.len() + slot])
    }

    pub fn cqi(&self, pixel: usize, slot: usize) -> Option<u8> {
        self.serving_cell(pixel, slot)
            .map(|_| self.cqi[pixel * self.carriers.len() + slot])
    }

    pub fn pixel(&self, pixel: usize) -> PixelRecord {
        let (x, y) = self.grid.center(pixel);
        let per_carrier = (0..self.carriers.len())
            .filter_map(|k| {
                self.serving_cell(pixel, k).map(|c| {
                    let i = pixel * self.carriers.len() + k;
                    (self.carriers[k], c, self.sinr_db[i], self.cqi[i])
                })
            })
            .collect();
        PixelRecord {
            x,
            y,
            per_carrier,
            rssi_dbm_per_cell: self.rssi_dbm[pixel * self.n_cells..(pixel + 1) * self.n_cells].to_vec(),
        }
    }

    /// Pixels served by `cell`, ascending.
    pub fn served_pixels(&self, cell: usize, slot: usize) -> Vec<usize> {
        (0..self.n_pixels())
            .filter(|&p| self.serving[p * self.carriers.len() + slot] == cell as u32)
            .collect()
    }
}

/// Oracle output aligned with the scenario's cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub map: CoverageMap,
    pub sinr: Vec<KpiBins>,
    pub cqi: Vec<KpiBins>,
    pub rssi: Vec<KpiBins>,
}

struct Link {
    x: f64,
    y: f64,
    azimuth: f64,
    tilt: f64,
    height: f64,
    beamwidth: f64,
    eirp: f64,
    freq_term: f64,
    slot: usize,
}

impl Link {
    fn received_dbm(&self, px: f64, py: f64) -> f64 {
        let dx = px - self.x;
        let dy = py - self.y;
        let d = dx.hypot(dy);
        let bearing_off = wrap_degrees(compass_bearing_deg(dx, dy) - self.azimuth);
        let depression = self.height.atan2(d).to_degrees();
        let gain = antenna_gain_db(bearing_off, depression - self.tilt, self.beamwidth);
        let dc = d.max(1.0);
        let n = if dc > REFERENCE_DISTANCE_M {
            PATH_LOSS_EXPONENT
        } else {
            2.0
        };
        let pl = self.freq_term + 10.0 * n * (dc / REFERENCE_DISTANCE_M).log10();
        self.eirp + gain - pl
    }
}

/// Evaluates every pixel of the scenario grid and bins the result per cell.
pub fn simulate(scenario: &Scenario) -> Result<Simulation> {
    scenario.validate()?;
    let grid = GridSpec::for_scenario(scenario)?;
    let carriers = scenario.carriers();
    let n_cells = scenario.len();
    let n_slots = carriers.len();
    let links: Vec<Link> = scenario
        .cells
        .iter()
        .map(|c| Link {
            x: c.x,
            y: c.y,
            azimuth: c.azimuth_deg,
            tilt: c.mech_tilt_deg,
            height: c.antenna_height_m,
            beamwidth: c.h_beamwidth_deg,
            eirp: c.tx_power_dbm + LINK_GAIN_DB,
            freq_term: 32.45 + 20.0 * (c.carrier_mhz as f64).log10(),
            slot: carriers.iter().position(|&k| k == c.carrier_mhz).unwrap_or(0),
        })
        .collect();
    // cells of each carrier, ascending index
    let by_slot: Vec<Vec<usize>> = (0..n_slots)
        .map(|k| (0..n_cells).filter(|&i| links[i].slot == k).collect())
        .collect();

    let n_pixels = grid.len();
    let mut rssi = vec![0.0; n_pixels * n_cells];
    let mut serving = vec![NO_SERVER; n_pixels * n_slots];
    let mut sinr = vec![f64::NAN; n_pixels * n_slots];
    let mut cqi = vec![0u8; n_pixels * n_slots];
    let mut counts_sinr = vec![[0usize; 4]; n_cells];
    let mut counts_cqi = vec![[0usize; 4]; n_cells];
    let mut counts_rssi = vec![[0usize; 4]; n_cells];
    let noise_mw = 10f64.powf(NOISE_FLOOR_DBM / 10.0);
    let mut linear = vec![0.0; n_cells];

    for p in 0..n_pixels {
        let (px, py) = grid.center(p);
        let row = &mut rssi[p * n_cells..(p + 1) * n_cells];
        for (i, link) in links.iter().enumerate() {
            row[i] = link.received_dbm(px, py);
            linear[i] = 10f64.powf(row[i] / 10.0);
        }
        for (k, members) in by_slot.iter().enumerate() {
            let Some(&first) = members.first() else {
                continue;
            };
            let mut best = first;
            for &i in &members[1..] {
                if row[i] > row[best] {
                    best = i;
                }
            }
            let mut interference = 0.0;
            for &i in members {
                if i != best {
                    interference += linear[i];
                }
            }
            let s = row[best] - 10.0 * (interference + noise_mw).log10();
            let q = cqi_from_sinr(s);
            let slot = p * n_slots + k;
            serving[slot] = best as u32;
            sinr[slot] = s;
            cqi[slot] = q;
            counts_sinr[best][SINR_BINS_DB.classify(s)] += 1;
            counts_cqi[best][CQI_BINS.classify(q as f64)] += 1;
            counts_rssi[best][RSSI_BINS_DBM.classify(row[best])] += 1;
        }
    }

    Ok(Simulation {
        map: CoverageMap {
            grid,
            carriers,
            n_cells,
            rssi_dbm: rssi,
            serving,
            sinr_db: sinr,
            cqi,
        },
        sinr: counts_sinr.into_iter().map(KpiBins::from_counts).collect(),
        cqi: counts_cqi.into_iter().map(KpiBins::from_counts).collect(),
        rssi: counts_rssi.into_iter().map(KpiBins::from_counts).collect(),
    })
}

/// Per-cell KPI table: `cell_id,kpi,perfect,good,fair,bad`.
pub fn kpi_table_csv(scenario: &Scenario, sim: &Simulation) -> String {
    let mut out = String::from("cell_id,kpi,perfect,good,fair,bad\n");
    for (i, cell) in scenario.cells.iter().enumerate() {
        for (kpi, bins) in [("sinr", &sim.sinr), ("cqi", &sim.cqi), ("rssi", &sim.rssi)] {
            let b = bins[i];
            let _ = writeln!(
                out,
                "{},{kpi},{},{},{},{}",
                cell.cell_id, b.perfect, b.good, b.fair, b.bad
            );
        }
    }
    out
}

/// Per-pixel dump for plotting: one row per pixel and carrier.
pub fn coverage_map_csv(scenario: &Scenario, map: &CoverageMap) -> String {
    let mut out = String::from("x,y,carrier_mhz,serving_cell,rssi_dbm,sinr_db,cqi\n");
    for p in 0..map.n_pixels() {
        let (x, y) = map.grid.center(p);
        for k in 0..map.carriers.len() {
            if let Some(c) = map.serving_cell(p, k) {
                let _ = writeln!(
                    out,
                    "{x},{y},{},{},{:.3},{:.3},{}",
                    map.carriers[k],
                    scenario.cells[c].cell_id,
                    map.rssi_dbm(p, c),
                    map.sinr_db[p * map.carriers.len() + k],
                    map.cqi[p * map.carriers.len() + k]
                );
            }
        }
    }
    out
}
