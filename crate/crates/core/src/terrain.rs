//! Raster terrain queries: elevation, slope/aspect, profiles and line of sight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::geometry::{Aabb, GeoPoint, Polyline};
use crate::occlusion::{Blocker, Occluders};
use crate::scene::CityScene;

/// Regular elevation grid. Node `(col, row)` sits at
/// `origin + (col * cell_size, row * cell_size)`; row 0 is the southern edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainGrid {
    pub origin: GeoPoint,
    pub cell_size: f64,
    pub n_cols: usize,
    pub n_rows: usize,
    /// Row-major, south to north.
    pub elevations: Vec<f64>,
}

impl TerrainGrid {
    pub fn new(origin: GeoPoint, cell_size: f64, n_cols: usize, n_rows: usize, elevations: Vec<f64>) -> Result<Self> {
        let g = Self { origin, cell_size, n_cols, n_rows, elevations };
        if let Some(v) = g.violations().into_iter().next() {
            return Err(Error::InvalidGeometry(format!("terrain violates `{}`", v.rule)));
        }
        Ok(g)
    }

    /// Grid with every node at `z`.
    pub fn flat(origin: GeoPoint, cell_size: f64, n_cols: usize, n_rows: usize, z: f64) -> Result<Self> {
        Self::new(origin, cell_size, n_cols, n_rows, vec![z; n_cols * n_rows])
    }

    /// Grid sampled from a height function of node coordinates.
    pub fn from_fn(
        origin: GeoPoint,
        cell_size: f64,
        n_cols: usize,
        n_rows: usize,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut elevations = Vec::with_capacity(n_cols * n_rows);
        for r in 0..n_rows {
            for c in 0..n_cols {
                elevations.push(f(origin.x + c as f64 * cell_size, origin.y + r as f64 * cell_size));
            }
        }
        Self::new(origin, cell_size, n_cols, n_rows, elevations)
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bad = |rule: &str, detail: String| out.push(Violation::new("terrain", rule, detail));
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            bad("cell_size > 0", format!("cell_size = {}", self.cell_size));
        }
        if self.n_cols < 2 || self.n_rows < 2 {
            bad("at least 2x2 nodes", format!("{}x{}", self.n_cols, self.n_rows));
        }
        if self.elevations.len() != self.n_cols * self.n_rows {
            bad(
                "elevations length = n_cols x n_rows",
                format!("{} != {} x {}", self.elevations.len(), self.n_cols, self.n_rows),
            );
        }
        if !self.elevations.iter().all(|z| z.is_finite()) {
            bad("elevations finite", String::new());
        }
        if !self.origin.is_finite() {
            bad("origin finite", String::new());
        }
        out
    }

    #[inline]
    pub fn node(&self, col: usize, row: usize) -> f64 {
        self.elevations[row * self.n_cols + col]
    }

    pub fn extent(&self) -> Aabb {
        Aabb {
            min_x: self.origin.x,
            min_y: self.origin.y,
            max_x: self.origin.x + (self.n_cols - 1) as f64 * self.cell_size,
            max_y: self.origin.y + (self.n_rows - 1) as f64 * self.cell_size,
        }
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        self.extent().contains_point(p)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.elevations.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &z| (lo.min(z), hi.max(z)))
    }

    fn check_inside(&self, p: &GeoPoint) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::OutOfBounds(format!("({}, {}) outside terrain extent", p.x, p.y)))
        }
    }

    /// Bilinear elevation; exact node values at node coordinates.
    pub fn elevation_at(&self, pt: &GeoPoint) -> Result<f64> {
        self.check_inside(pt)?;
        Ok(self.sample(pt.x, pt.y))
    }

    /// Bilinear sample without the extent check; coordinates are clamped to the grid.
    pub(crate) fn sample(&self, x: f64, y: f64) -> f64 {
        let (col, fx) = split(((x - self.origin.x) / self.cell_size).max(0.0), self.n_cols);
        let (row, fy) = split(((y - self.origin.y) / self.cell_size).max(0.0), self.n_rows);
        self.in_cell(col, row, fx, fy)
    }

    pub(crate) fn in_cell(&self, col: usize, row: usize, fx: f64, fy: f64) -> f64 {
        let z00 = self.node(col, row);
        let z10 = self.node(col + 1, row);
        let z01 = self.node(col, row + 1);
        let z11 = self.node(col + 1, row + 1);
        let lo = z00 + fx * (z10 - z00);
        let hi = z01 + fx * (z11 - z01);
        lo + fy * (hi - lo)
    }

    /// Horn 3x3 slope and aspect at an interior node.
    pub fn slope_aspect(&self, col: usize, row: usize) -> Result<SlopeAspect> {
        if col < 1 || row < 1 || col + 2 > self.n_cols || row + 2 > self.n_rows {
            return Err(Error::OutOfBounds(format!("node ({col}, {row}) is not interior")));
        }
        let z = |dc: isize, dr: isize| self.node((col as isize + dc) as usize, (row as isize + dr) as usize);
        // a b c
        // d e f   (north up)
        // g h i
        let (a, b, c) = (z(-1, 1), z(0, 1), z(1, 1));
        let (d, f) = (z(-1, 0), z(1, 0));
        let (g, h, i) = (z(-1, -1), z(0, -1), z(1, -1));
        let dzdx = ((c + 2.0 * f + i) - (a + 2.0 * d + g)) / (8.0 * self.cell_size);
        let dzdy = ((a + 2.0 * b + c) - (g + 2.0 * h + i)) / (8.0 * self.cell_size);
        let slope_deg = dzdx.hypot(dzdy).atan().to_degrees();
        let aspect_deg = (slope_deg >= FLAT_SLOPE_DEG).then(|| {
            let a = (-dzdx).atan2(-dzdy).to_degrees();
            if a < 0.0 {
                a + 360.0
            } else {
                a
            }
        });
        Ok(SlopeAspect { slope_deg, aspect_deg })
    }

    /// Samples at `0, spacing, 2*spacing, ...` along the line plus the exact endpoint.
    pub fn profile(&self, line: &Polyline, spacing: f64) -> Result<Vec<ProfileSample>> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidArgument(format!("spacing must be > 0, got {spacing}")));
        }
        for v in line.vertices() {
            self.check_inside(v)?;
        }
        let total = line.length();
        let mut out = Vec::new();
        let mut i = 0usize;
        loop {
            let d = i as f64 * spacing;
            if d >= total {
                break;
            }
            let p = line.point_at(d);
            out.push(ProfileSample { distance: d, elevation: self.elevation_at(&p)? });
            i += 1;
        }
        let end = line.vertices().last().expect("polyline has vertices");
        out.push(ProfileSample { distance: total, elevation: self.elevation_at(end)? });
        Ok(out)
    }
}

/// Slopes below this many degrees have no defined aspect.
pub const FLAT_SLOPE_DEG: f64 = 0.01;

fn split(u: f64, n: usize) -> (usize, f64) {
    // Snap round-off so node coordinates hit node values exactly.
    let nearest = u.round();
    let u = if (u - nearest).abs() <= 1e-12 * nearest.max(1.0) { nearest } else { u };
    let cell = (u.floor() as usize).min(n - 2);
    (cell, u - cell as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeAspect {
    pub slope_deg: f64,
    /// Downslope direction, degrees clockwise from north. `None` on flat ground.
    pub aspect_deg: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub distance: f64,
    pub elevation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineOfSight {
    pub visible: bool,
    /// First obstruction along `a -> b`, if any.
    pub blocker: Option<Blocker>,
}

/// Tests the straight segment `a -> b` (absolute heights) against terrain and
/// building prisms. The endpoints' own surfaces do not block.
pub fn line_of_sight(scene: &CityScene, a: &GeoPoint, b: &GeoPoint) -> Result<LineOfSight> {
    Occluders::new(scene).line_of_sight(a, b)
}
