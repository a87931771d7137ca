//! Interference geometry between pairs of cells.
//!
//! Each cell is modelled as a circular sector of fixed radius around its
//! antenna azimuth. For a pair of cells the overlap of their sectors gives the
//! interference area (IA, Jaccard ratio), the interference distance (ID, mean
//! distance of the overlap from the two apexes) and the interference centric
//! (IC, overlap centroid). IA and ID are normalized into [0,1] pretext targets.

use serde::{Deserialize, Serialize};

use crate::scenario::{Cell, Point};

pub const SECTOR_RADIUS_M: f64 = 10_000.0;
pub const DEFAULT_GRID_STEP_M: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    pub apex: Point,
    pub azimuth_deg: f64,
    pub half_angle_deg: f64,
    pub radius_m: f64,
}

impl Sector {
    pub fn new(apex: Point, azimuth_deg: f64, half_angle_deg: f64) -> Self {
        Self {
            apex,
            azimuth_deg,
            half_angle_deg,
            radius_m: SECTOR_RADIUS_M,
        }
    }

    pub fn from_cell(cell: &Cell) -> Self {
        Self::new(cell.position(), cell.azimuth_deg, cell.h_beamwidth_deg / 2.0)
    }

    fn direction(&self) -> (f64, f64) {
        let a = self.azimuth_deg.to_radians();
        (a.sin(), a.cos())
    }

    /// Membership test; the apex itself belongs to the sector.
    pub fn contains(&self, p: Point) -> bool {
        SectorTest::new(self).contains(p.x, p.y)
    }

    /// Tight axis-aligned bounding box as (xmin, ymin, xmax, ymax).
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let r = self.radius_m;
        let (ax, ay) = (self.apex.x, self.apex.y);
        let mut xs = vec![ax];
        let mut ys = vec![ay];
        for off in [-self.half_angle_deg, self.half_angle_deg] {
            let a = (self.azimuth_deg + off).to_radians();
            xs.push(ax + r * a.sin());
            ys.push(ay + r * a.cos());
        }
        // compass directions north, east, south, west
        for (bearing, dx, dy) in [(0.0, 0.0, r), (90.0, r, 0.0), (180.0, 0.0, -r), (270.0, -r, 0.0)] {
            if crate::radio::wrap_degrees(bearing - self.azimuth_deg).abs() <= self.half_angle_deg {
                xs.push(ax + dx);
                ys.push(ay + dy);
            }
        }
        let fold = |v: &[f64], f: fn(f64, f64) -> f64, init: f64| v.iter().copied().fold(init, f);
        (
            fold(&xs, f64::min, f64::INFINITY),
            fold(&ys, f64::min, f64::INFINITY),
            fold(&xs, f64::max, f64::NEG_INFINITY),
            fold(&ys, f64::max, f64::NEG_INFINITY),
        )
    }
}

/// Precomputed membership test.
struct SectorTest {
    ax: f64,
    ay: f64,
    ux: f64,
    uy: f64,
    cos_half: f64,
    r2: f64,
}

impl SectorTest {
    fn new(s: &Sector) -> Self {
        let (ux, uy) = s.direction();
        Self {
            ax: s.apex.x,
            ay: s.apex.y,
            ux,
            uy,
            cos_half: s.half_angle_deg.to_radians().cos(),
            r2: s.radius_m * s.radius_m,
        }
    }

    #[inline]
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.ax;
        let dy = y - self.ay;
        let d2 = dx * dx + dy * dy;
        if d2 > self.r2 {
            return false;
        }
        if d2 == 0.0 {
            return true;
        }
        dx * self.ux + dy * self.uy >= d2.sqrt() * self.cos_half
    }
}

pub fn sector_area(s: &Sector) -> f64 {
    (2.0 * s.half_angle_deg / 360.0) * std::f64::consts::PI * s.radius_m * s.radius_m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub area_m2: f64,
    pub count: usize,
    /// Mean distance of the overlap samples from the first sector's apex.
    pub mean_dist_first_m: f64,
    /// Mean distance of the overlap samples from the second sector's apex.
    pub mean_dist_second_m: f64,
    pub centroid: Option<Point>,
}

impl Overlap {
    fn empty() -> Self {
        Self {
            area_m2: 0.0,
            count: 0,
            mean_dist_first_m: 0.0,
            mean_dist_second_m: 0.0,
            centroid: None,
        }
    }
}

/// Grid-sampled intersection of two sectors.
///
/// Samples sit at cell centers of a `grid_step_m` lattice anchored at the
/// lower-left corner of the intersection of both sectors' bounding boxes, so
/// the sample set does not depend on argument order.
pub fn sector_overlap(si: &Sector, sj: &Sector, grid_step_m: f64) -> Overlap {
    assert!(grid_step_m > 0.0, "grid step must be positive");
    if si.apex.dist(sj.apex) > si.radius_m + sj.radius_m {
        return Overlap::empty();
    }
    let (ax0, ay0, ax1, ay1) = si.bounding_box();
    let (bx0, by0, bx1, by1) = sj.bounding_box();
    let (x0, y0) = (ax0.max(bx0), ay0.max(by0));
    let (x1, y1) = (ax1.min(bx1), ay1.min(by1));
    if x1 < x0 || y1 < y0 {
        return Overlap::empty();
    }
    let ti = SectorTest::new(si);
    let tj = SectorTest::new(sj);
    let ncols = ((x1 - x0) / grid_step_m).ceil().max(1.0) as usize;
    let nrows = ((y1 - y0) / grid_step_m).ceil().max(1.0) as usize;
    let mut count = 0usize;
    let (mut sum_di, mut sum_dj, mut sx, mut sy) = (0.0, 0.0, 0.0, 0.0);
    for r in 0..nrows {
        let y = y0 + (r as f64 + 0.5) * grid_step_m;
        for c in 0..ncols {
            let x = x0 + (c as f64 + 0.5) * grid_step_m;
            if ti.contains(x, y) && tj.contains(x, y) {
                count += 1;
                sum_di += (x - si.apex.x).hypot(y - si.apex.y);
                sum_dj += (x - sj.apex.x).hypot(y - sj.apex.y);
                sx += x;
                sy += y;
            }
        }
    }
    if count == 0 {
        return Overlap::empty();
    }
    let n = count as f64;
    Overlap {
        area_m2: n * grid_step_m * grid_step_m,
        count,
        mean_dist_first_m: sum_di / n,
        mean_dist_second_m: sum_dj / n,
        centroid: Some(Point::new(sx / n, sy / n)),
    }
}

/// Geometric edge features and their pretext targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeomFeatures {
    pub ia: f64,
    pub id_m: f64,
    pub ic: Option<Point>,
    pub target_ia: f64,
    pub target_id: f64,
}

impl GeomFeatures {
    pub fn none() -> Self {
        Self {
            ia: 0.0,
            id_m: 0.0,
            ic: None,
            target_ia: 0.0,
            target_id: 0.0,
        }
    }
}

pub fn edge_geometry(ci: &Cell, cj: &Cell) -> GeomFeatures {
    edge_geometry_with_step(ci, cj, DEFAULT_GRID_STEP_M)
}

/// Symmetric in its arguments: swapping the cells yields identical features.
pub fn edge_geometry_with_step(ci: &Cell, cj: &Cell, grid_step_m: f64) -> GeomFeatures {
    let si = Sector::from_cell(ci);
    let sj = Sector::from_cell(cj);
    let ov = sector_overlap(&si, &sj, grid_step_m);
    geometry_from_overlap(&si, &sj, &ov)
}

pub(crate) fn geometry_from_overlap(si: &Sector, sj: &Sector, ov: &Overlap) -> GeomFeatures {
    if ov.count == 0 {
        return GeomFeatures::none();
    }
    let union = sector_area(si) + sector_area(sj) - ov.area_m2;
    let ia = if union > 0.0 {
        (ov.area_m2 / union).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let id_m = (ov.mean_dist_first_m + ov.mean_dist_second_m) / 2.0;
    let radius = si.radius_m.max(sj.radius_m);
    GeomFeatures {
        ia,
        id_m,
        ic: ov.centroid,
        target_ia: ia,
        target_id: (1.0 - id_m / radius).clamp(0.0, 1.0),
    }
}
