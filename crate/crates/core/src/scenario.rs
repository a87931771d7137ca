//! Cell configuration data model, file ingestion and synthetic scenario generation.
//!
//! Coordinates are planar meters in a local tangent projection. Azimuths are
//! compass degrees (0 = north, clockwise).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Carrier frequencies a cell may use. One-hot encodings index into this list.
pub const CARRIERS_MHZ: [u32; 3] = [800, 2100, 2600];

/// Horizontal beamwidths drawn by [`generate_scenario`].
pub const GENERATED_BEAMWIDTHS_DEG: [f64; 3] = [33.0, 65.0, 90.0];

pub const MIN_INTER_SITE_DISTANCE_M: f64 = 500.0;
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;
pub const DEFAULT_GRID_RESOLUTION_M: f64 = 50.0;

/// Names of the configuration-vector entries produced by [`Cell::encode`].
pub const CELL_FEATURE_NAMES: [&str; 9] = [
    "azimuth_sin",
    "azimuth_cos",
    "mech_tilt_deg",
    "antenna_height_m",
    "h_beamwidth_deg",
    "tx_power_dbm",
    "carrier_800",
    "carrier_2100",
    "carrier_2600",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// One eUtran cell: a single carrier on one sector antenna of a site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub cell_id: String,
    pub site_id: String,
    pub x: f64,
    pub y: f64,
    pub azimuth_deg: f64,
    pub mech_tilt_deg: f64,
    pub antenna_height_m: f64,
    pub h_beamwidth_deg: f64,
    pub carrier_mhz: u32,
    pub tx_power_dbm: f64,
}

impl Cell {
    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn carrier_index(&self) -> Option<usize> {
        CARRIERS_MHZ.iter().position(|&c| c == self.carrier_mhz)
    }

    pub fn carrier_onehot(&self) -> [f64; 3] {
        let mut v = [0.0; 3];
        if let Some(i) = self.carrier_index() {
            v[i] = 1.0;
        }
        v
    }

    /// Configuration vector `x_i`, laid out as [`CELL_FEATURE_NAMES`].
    pub fn encode(&self) -> Vec<f64> {
        let az = self.azimuth_deg.to_radians();
        let mut v = vec![
            az.sin(),
            az.cos(),
            self.mech_tilt_deg,
            self.antenna_height_m,
            self.h_beamwidth_deg,
            self.tx_power_dbm,
        ];
        v.extend_from_slice(&self.carrier_onehot());
        v
    }

    fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| {
            Err(Error::Validation(format!(
                "cell {}: field {field} {why}",
                self.cell_id
            )))
        };
        if self.cell_id.is_empty() {
            return Err(Error::Validation("cell with empty cell_id".into()));
        }
        if self.site_id.is_empty() {
            return bad("site_id", "is empty");
        }
        for (name, v) in [
            ("x", self.x),
            ("y", self.y),
            ("azimuth_deg", self.azimuth_deg),
            ("mech_tilt_deg", self.mech_tilt_deg),
            ("antenna_height_m", self.antenna_height_m),
            ("h_beamwidth_deg", self.h_beamwidth_deg),
            ("tx_power_dbm", self.tx_power_dbm),
        ] {
            if !v.is_finite() {
                return bad(name, "is not finite");
            }
        }
        if !(0.0..360.0).contains(&self.azimuth_deg) {
            return bad("azimuth_deg", "must lie in [0,360)");
        }
        if !(self.h_beamwidth_deg > 0.0 && self.h_beamwidth_deg < 180.0) {
            return bad("h_beamwidth_deg", "must lie in (0,180)");
        }
        if !(10.0..=50.0).contains(&self.tx_power_dbm) {
            return bad("tx_power_dbm", "must lie in [10,50]");
        }
        if self.antenna_height_m <= 0.0 {
            return bad("antenna_height_m", "must be positive");
        }
        if self.carrier_index().is_none() {
            return bad("carrier_mhz", "is not a supported carrier (800, 2100, 2600)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Bounds {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self {
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    /// Square region of side `side_m` with the origin at its lower-left corner.
    pub fn square(side_m: f64) -> Self {
        Self::new(0.0, 0.0, side_m, side_m)
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub bounds: Bounds,
    pub grid_resolution_m: f64,
    pub cells: Vec<Cell>,
}

impl Scenario {
    /// Sorts cells by id and checks every invariant.
    pub fn new(name: impl Into<String>, bounds: Bounds, grid_resolution_m: f64, cells: Vec<Cell>) -> Result<Self> {
        let mut s = Scenario {
            name: name.into(),
            bounds,
            grid_resolution_m,
            cells,
        };
        s.cells.sort_by(|a, b| a.cell_id.cmp(&b.cell_id));
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.bounds;
        if ![b.xmin, b.ymin, b.xmax, b.ymax].iter().all(|v| v.is_finite())
            || b.xmax <= b.xmin
            || b.ymax <= b.ymin
        {
            return Err(Error::Validation("bounds must be finite with xmin<xmax, ymin<ymax".into()));
        }
        if !(self.grid_resolution_m.is_finite() && self.grid_resolution_m > 0.0) {
            return Err(Error::Validation("grid_resolution_m must be positive".into()));
        }
        let mut ids = HashSet::new();
        let mut sites: HashMap<&str, Point> = HashMap::new();
        for (i, c) in self.cells.iter().enumerate() {
            c.validate()?;
            if !ids.insert(c.cell_id.as_str()) {
                return Err(Error::Validation(format!("cell {}: field cell_id is duplicated", c.cell_id)));
            }
            if i > 0 && self.cells[i - 1].cell_id > c.cell_id {
                return Err(Error::Validation("cells must be sorted by cell_id".into()));
            }
            if !self.bounds.contains(c.position()) {
                return Err(Error::Validation(format!("cell {}: field x/y lies outside bounds", c.cell_id)));
            }
            match sites.get(c.site_id.as_str()) {
                Some(p) if *p != c.position() => {
                    return Err(Error::Validation(format!(
                        "cell {}: field x/y differs from other cells of site {}",
                        c.cell_id, c.site_id
                    )))
                }
                Some(_) => {}
                None => {
                    sites.insert(&c.site_id, c.position());
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index_of(&self, cell_id: &str) -> Option<usize> {
        self.cells
            .binary_search_by(|c| c.cell_id.as_str().cmp(cell_id))
            .ok()
    }

    /// Distinct carriers present, ascending.
    pub fn carriers(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.cells.iter().map(|c| c.carrier_mhz).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// A copy without the cell at `index`.
    pub fn without_cell(&self, index: usize) -> Scenario {
        let mut s = self.clone();
        s.cells.remove(index);
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Scenario> {
        let s: Scenario = serde_json::from_str(text)?;
        Scenario::new(s.name, s.bounds, s.grid_resolution_m, s.cells)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::write_text(path, &self.to_json()?)
    }
}

/// Loads a scenario from JSON, or from CSV when the extension is `.csv`.
///
/// CSV files carry one row per cell with the JSON cell field names as
/// columns; bounds are the cell extent padded by [`CSV_BOUNDS_MARGIN_M`].
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_csv = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false);
    if is_csv {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
        scenario_from_csv(&name, &text)
    } else {
        Scenario::from_json(&text)
    }
}

pub const CSV_BOUNDS_MARGIN_M: f64 = 2000.0;

pub fn scenario_from_csv(name: &str, text: &str) -> Result<Scenario> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut cells = Vec::new();
    for row in rdr.deserialize() {
        let cell: Cell = row?;
        cells.push(cell);
    }
    if cells.is_empty() {
        return Err(Error::Validation("csv scenario contains no cells".into()));
    }
    let (mut xmin, mut ymin) = (f64::INFINITY, f64::INFINITY);
    let (mut xmax, mut ymax) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in &cells {
        xmin = xmin.min(c.x);
        ymin = ymin.min(c.y);
        xmax = xmax.max(c.x);
        ymax = ymax.max(c.y);
    }
    let m = CSV_BOUNDS_MARGIN_M;
    Scenario::new(
        name,
        Bounds::new(xmin - m, ymin - m, xmax + m, ymax + m),
        DEFAULT_GRID_RESOLUTION_M,
        cells,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateParams {
    pub n_sites: usize,
    pub sectors_per_site: usize,
    pub carriers: Vec<u32>,
    pub bounds: Bounds,
    pub seed: u64,
}

/// Synthesizes a randomized multi-site deployment.
///
/// Sites are rejection-sampled uniformly inside `bounds` with at least
/// [`MIN_INTER_SITE_DISTANCE_M`] between them. Each site carries
/// `sectors_per_site` antennas spaced evenly in azimuth (±10° jitter), and
/// every antenna hosts one cell per carrier. Antenna azimuth, beamwidth and
/// height are shared by the cells of one sector; tilt and power are per cell.
pub fn generate_scenario(params: &GenerateParams) -> Result<Scenario> {
    let GenerateParams {
        n_sites,
        sectors_per_site,
        ref carriers,
        bounds,
        seed,
    } = *params;
    if n_sites == 0 {
        return Err(Error::Config("n_sites must be at least 1".into()));
    }
    if !(1..=3).contains(&sectors_per_site) {
        return Err(Error::Config("sectors_per_site must be 1, 2 or 3".into()));
    }
    let mut carriers = carriers.clone();
    carriers.sort_unstable();
    carriers.dedup();
    if carriers.is_empty() {
        return Err(Error::Config("at least one carrier is required".into()));
    }
    if let Some(c) = carriers.iter().find(|c| !CARRIERS_MHZ.contains(c)) {
        return Err(Error::Config(format!("unsupported carrier {c} MHz")));
    }
    if bounds.width() <= 0.0 || bounds.height() <= 0.0 {
        return Err(Error::Config("bounds must have positive extent".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sites: Vec<Point> = Vec::with_capacity(n_sites);
    for _ in 0..n_sites {
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let p = Point::new(
                rng.gen_range(bounds.xmin..=bounds.xmax),
                rng.gen_range(bounds.ymin..=bounds.ymax),
            );
            if sites.iter().all(|s| s.dist(p) >= MIN_INTER_SITE_DISTANCE_M) {
                placed = Some(p);
                break;
            }
        }
        match placed {
            Some(p) => sites.push(p),
            None => {
                return Err(Error::Placement {
                    sites: n_sites,
                    attempts: MAX_PLACEMENT_ATTEMPTS,
                })
            }
        }
    }

    let spacing = 360.0 / sectors_per_site as f64;
    let mut cells = Vec::with_capacity(n_sites * sectors_per_site * carriers.len());
    for (s, pos) in sites.iter().enumerate() {
        let site_id = format!("S{s:03}");
        let base = rng.gen_range(0.0..360.0);
        let height = rng.gen_range(20.0..=40.0);
        for k in 0..sectors_per_site {
            let jitter = rng.gen_range(-10.0..=10.0);
            let azimuth = normalize_azimuth(base + k as f64 * spacing + jitter);
            let beamwidth = GENERATED_BEAMWIDTHS_DEG[rng.gen_range(0..GENERATED_BEAMWIDTHS_DEG.len())];
            for &carrier in &carriers {
                cells.push(Cell {
                    cell_id: format!("{site_id}-{k}-{carrier:04}"),
                    site_id: site_id.clone(),
                    x: pos.x,
                    y: pos.y,
                    azimuth_deg: azimuth,
                    mech_tilt_deg: rng.gen_range(0.0..=10.0),
                    antenna_height_m: height,
                    h_beamwidth_deg: beamwidth,
                    carrier_mhz: carrier,
                    tx_power_dbm: rng.gen_range(40.0..=46.0),
                });
            }
        }
    }
    Scenario::new(format!("synthetic-{seed}"), bounds, DEFAULT_GRID_RESOLUTION_M, cells)
}

/// Maps any angle in degrees into [0, 360).
pub fn normalize_azimuth(deg: f64) -> f64 {
    let a = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360.0 for tiny negative inputs
    if a >= 360.0 {
        0.0
    } else {
        a
    }
}

/// Groups cell indices by site id, preserving scenario order inside each group.
pub fn cells_by_site(scenario: &Scenario) -> BTreeMap<&str, Vec<usize>> {
    let mut m: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in scenario.cells.iter().enumerate() {
        m.entry(c.site_id.as_str()).or_default().push(i);
    }
    m
}
