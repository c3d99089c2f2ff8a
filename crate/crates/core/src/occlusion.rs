//! Ray and segment occlusion against building prisms and the terrain surface.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{clip_segment, point_in_polygon, Aabb, GeoPoint};
use crate::index::SpatialIndex;
use crate::scene::{Building, CityScene};

/// What stopped a sight line or sun ray.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Blocker {
    Terrain,
    Building { id: String },
}

// Parametric slack that keeps a segment from hitting the surface it starts on.
const START_EPS_M: f64 = 1e-6;
const BELOW_TERRAIN_TOL: f64 = 1e-9;

/// Buildings of a scene behind a spatial index, for repeated ray tests.
pub struct Occluders<'a> {
    scene: &'a CityScene,
    index: SpatialIndex<usize>,
    max_top: f64,
}

impl<'a> Occluders<'a> {
    pub fn new(scene: &'a CityScene) -> Self {
        let buildings = scene.buildings();
        let index = SpatialIndex::build(buildings.iter().enumerate().map(|(i, b)| (i, b.footprint.bbox())).collect())
            .expect("positions are unique");
        let max_top = buildings.iter().map(Building::top).fold(f64::NEG_INFINITY, f64::max);
        Self { scene, index, max_top }
    }

    pub fn scene(&self) -> &'a CityScene {
        self.scene
    }

    /// First building hit by `origin + t * dir` for `t` in `[t_min, t_max]`.
    fn first_building_hit(&self, origin: &GeoPoint, dir: [f64; 3], t_min: f64, t_max: f64) -> Option<(f64, usize)> {
        if t_max < t_min {
            return None;
        }
        let a = GeoPoint::xy(origin.x + t_min * dir[0], origin.y + t_min * dir[1]);
        let b = GeoPoint::xy(origin.x + t_max * dir[0], origin.y + t_max * dir[1]);
        let window = Aabb::from_points([&a, &b]).expect("two points");
        let buildings = self.scene.buildings();
        let mut best: Option<(f64, usize)> = None;
        self.index.for_each_in_range(&window, |&i, _| {
            if let Some(t) = prism_first_hit(&buildings[i], origin, dir, t_min, t_max) {
                if best.is_none_or(|(bt, bi)| t < bt || (t == bt && buildings[i].id < buildings[bi].id)) {
                    best = Some((t, i));
                }
            }
        });
        best
    }

    /// First `t` in `[t_min, t_max]` at which `origin + t * dir` lies below the
    /// terrain surface. Within one grid cell the bilinear surface along a
    /// straight path is quadratic in `t`, so each cell is solved exactly.
    fn first_terrain_hit(&self, origin: &GeoPoint, dir: [f64; 3], t_min: f64, t_max: f64) -> Option<f64> {
        if t_max <= t_min {
            return None;
        }
        let g = self.scene.terrain();
        let at = |t: f64| GeoPoint::new(origin.x + t * dir[0], origin.y + t * dir[1], origin.z + t * dir[2]);
        let (s0, s1) = clip_segment(&at(t_min), &at(t_max), &g.extent())?;
        let span = t_max - t_min;
        let (ta, tb) = (t_min + s0 * span, t_min + s1 * span);

        let mut cuts = vec![ta, tb];
        for (o, d, grid_o, n) in [(origin.x, dir[0], g.origin.x, g.n_cols), (origin.y, dir[1], g.origin.y, g.n_rows)] {
            if d == 0.0 {
                continue;
            }
            let (u0, u1) = ((o + ta * d - grid_o) / g.cell_size, (o + tb * d - grid_o) / g.cell_size);
            let (lo, hi) = (u0.min(u1).ceil().max(1.0) as usize, u0.max(u1).floor().min((n - 2) as f64));
            for k in lo..=hi.max(0.0) as usize {
                let t = (grid_o + k as f64 * g.cell_size - o) / d;
                if t > ta && t < tb {
                    cuts.push(t);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let clearance = |t: f64, col: usize, row: usize| {
            let p = at(t);
            let fx = (p.x - g.origin.x) / g.cell_size - col as f64;
            let fy = (p.y - g.origin.y) / g.cell_size - row as f64;
            p.z - g.in_cell(col, row, fx, fy)
        };
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let m = at(0.5 * (a + b));
            let col = (((m.x - g.origin.x) / g.cell_size).floor().max(0.0) as usize).min(g.n_cols - 2);
            let row = (((m.y - g.origin.y) / g.cell_size).floor().max(0.0) as usize).min(g.n_rows - 2);
            let (c0, cm, c1) = (clearance(a, col, row), clearance(0.5 * (a + b), col, row), clearance(b, col, row));
            if let Some(s) = first_dip(c0, cm, c1) {
                return Some(a + s * (b - a));
            }
        }
        None
    }

    pub fn line_of_sight(&self, a: &GeoPoint, b: &GeoPoint) -> Result<crate::terrain::LineOfSight> {
        let terrain = self.scene.terrain();
        for p in [a, b] {
            if !terrain.contains(p) || !p.is_finite() {
                return Err(Error::OutOfBounds(format!("({}, {}) outside terrain extent", p.x, p.y)));
            }
        }
        let dir = [b.x - a.x, b.y - a.y, b.z - a.z];
        let len = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        if len == 0.0 {
            return Ok(crate::terrain::LineOfSight { visible: true, blocker: None });
        }
        let eps = (START_EPS_M / len).min(0.5);
        let building = self.first_building_hit(a, dir, eps, 1.0 - eps);

        let ground = self.first_terrain_hit(a, dir, eps, 1.0 - eps);

        let blocker = self.earliest(building, ground);
        Ok(crate::terrain::LineOfSight { visible: blocker.is_none(), blocker })
    }

    fn building_blocker(&self, i: usize) -> Blocker {
        Blocker::Building { id: self.scene.buildings()[i].id.clone() }
    }

    /// Casts a ray from `pt` toward a sun at the given elevation and azimuth
    /// (degrees, azimuth clockwise from north). Returns the first blocker.
    pub(crate) fn sun_ray_blocker(&self, pt: &GeoPoint, azimuth_deg: f64, elevation_deg: f64) -> Option<Blocker> {
        let (sa, ca) = azimuth_deg.to_radians().sin_cos();
        let (se, ce) = elevation_deg.to_radians().sin_cos();
        let dir = [sa * ce, ca * ce, se];
        let terrain = self.scene.terrain();

        let building = if self.max_top > pt.z {
            self.first_building_hit(pt, dir, START_EPS_M, (self.max_top - pt.z) / se)
        } else {
            None
        };

        let (_, terrain_max) = terrain.min_max();
        let ground = if terrain_max > pt.z && ce > 0.0 {
            self.first_terrain_hit(pt, dir, START_EPS_M, (terrain_max - pt.z) / se)
        } else {
            None
        };

        self.earliest(building, ground)
    }

    fn earliest(&self, building: Option<(f64, usize)>, ground: Option<f64>) -> Option<Blocker> {
        match (building, ground) {
            (Some((tb, _)), Some(tg)) if tg < tb => Some(Blocker::Terrain),
            (Some((_, i)), _) => Some(self.building_blocker(i)),
            (None, Some(_)) => Some(Blocker::Terrain),
            (None, None) => None,
        }
    }
}

/// Smallest `s` in `[0, 1]` where the quadratic through `(0, c0)`,
/// `(0.5, cm)`, `(1, c1)` drops below `-BELOW_TERRAIN_TOL`.
fn first_dip(c0: f64, cm: f64, c1: f64) -> Option<f64> {
    if c0 < -BELOW_TERRAIN_TOL {
        return Some(0.0);
    }
    let a = 2.0 * (c0 - 2.0 * cm + c1);
    let b = c1 - c0 - a;
    let c = c0 + BELOW_TERRAIN_TOL;
    let scale = c0.abs().max(cm.abs()).max(c1.abs()).max(1.0);
    let mut roots = if a.abs() <= 1e-12 * scale {
        if b < 0.0 {
            vec![-c / b]
        } else {
            vec![]
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc <= 0.0 {
            vec![]
        } else {
            let sq = disc.sqrt();
            vec![(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)]
        }
    };
    roots.sort_by(f64::total_cmp);
    // A downward crossing is where the slope of q is negative.
    roots
        .into_iter()
        .find(|&s| (0.0..=1.0).contains(&s) && 2.0 * a * s + b < 0.0)
        .or_else(|| (c1 < -BELOW_TERRAIN_TOL).then_some(1.0))
}

/// Smallest `t` in `[t_min, t_max]` at which `origin + t * dir` lies in the
/// closed prism of `b`.
pub(crate) fn prism_first_hit(b: &Building, origin: &GeoPoint, dir: [f64; 3], t_min: f64, t_max: f64) -> Option<f64> {
    let (base, top) = (b.base_elevation, b.top());
    let (mut lo, mut hi) = (t_min, t_max);
    if dir[2] == 0.0 {
        if origin.z < base || origin.z > top {
            return None;
        }
    } else {
        let ta = (base - origin.z) / dir[2];
        let tb = (top - origin.z) / dir[2];
        lo = lo.max(ta.min(tb));
        hi = hi.min(ta.max(tb));
    }
    if lo > hi {
        return None;
    }
    let at = |t: f64| GeoPoint::xy(origin.x + t * dir[0], origin.y + t * dir[1]);
    if point_in_polygon(&at(lo), &b.footprint) {
        return Some(lo);
    }
    let (dx, dy) = (dir[0], dir[1]);
    if dx == 0.0 && dy == 0.0 {
        return None;
    }
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t >= lo && t <= hi && best.is_none_or(|bt| t < bt) {
            best = Some(t);
        }
    };
    for (p, q) in b.footprint.edges() {
        let (ex, ey) = (q.x - p.x, q.y - p.y);
        let (wx, wy) = (p.x - origin.x, p.y - origin.y);
        let denom = dx * ey - dy * ex;
        if denom == 0.0 {
            if wx * dy - wy * dx != 0.0 {
                continue; // parallel, not collinear
            }
            let d2 = dx * dx + dy * dy;
            let tp = (wx * dx + wy * dy) / d2;
            let tq = ((q.x - origin.x) * dx + (q.y - origin.y) * dy) / d2;
            let (e0, e1) = (tp.min(tq), tp.max(tq));
            if e1 >= lo && e0 <= hi {
                consider(e0.max(lo));
            }
            continue;
        }
        let t = (wx * ey - wy * ex) / denom;
        let s = (wx * dy - wy * dx) / denom;
        if (0.0..=1.0).contains(&s) {
            consider(t);
        }
    }
    best
}
