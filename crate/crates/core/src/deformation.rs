//! Metro-line deformation: buffer selection, cylinder glyphs and trends.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::geometry::{Aabb, GeoPoint, Polyline};
use crate::index::SpatialIndex;
use crate::terrain::TerrainGrid;

/// Buffer presets in meters offered by the viewer.
pub const BUFFER_PRESETS_M: [f64; 2] = [100.0, 50.0];
/// Glyph meters per millimeter of deformation.
pub const DEFAULT_SCALE_M_PER_MM: f64 = 0.5;
/// Slopes within this band (mm/day) count as stable: 0.1 mm per 30 days.
pub const DEFAULT_STABLE_EPS_MM_PER_DAY: f64 = 0.1 / 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetroLine {
    pub id: String,
    pub name: String,
    pub path: Polyline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub timestamp: DateTime<Utc>,
    /// Signed millimeters; positive is lifting, negative is sinking.
    pub deformation_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitoringPoint {
    pub id: String,
    pub position: GeoPoint,
    pub history: Vec<Reading>,
}

impl MonitoringPoint {
    pub fn violations(&self) -> Vec<Violation> {
        let object = format!("monitoring_point:{}", self.id);
        let mut out = Vec::new();
        if !self.position.is_finite() {
            out.push(Violation::new(&object, "position finite", ""));
        }
        if self.history.windows(2).any(|w| w[0].timestamp >= w[1].timestamp) {
            out.push(Violation::new(&object, "history timestamps strictly increasing", ""));
        }
        if self.history.iter().any(|r| !r.deformation_mm.is_finite()) {
            out.push(Violation::new(&object, "deformation finite", ""));
        }
        out
    }

    pub fn latest(&self) -> Option<&Reading> {
        self.history.last()
    }
}

/// Builds the point index used by [`select_points`]; ids are positions in `points`.
pub fn point_index(points: &[MonitoringPoint]) -> SpatialIndex<usize> {
    SpatialIndex::build(points.iter().enumerate().map(|(i, p)| (i, Aabb::from_point(&p.position))).collect())
        .expect("positions are unique")
}

/// Points within `buffer` meters of the line, ordered by chainage of their
/// projection onto it (ties by id).
pub fn select_points<'a>(
    line: &MetroLine,
    points: &'a [MonitoringPoint],
    buffer: f64,
    idx: &SpatialIndex<usize>,
) -> Result<Vec<&'a MonitoringPoint>> {
    let hits = idx.query_buffer(&line.path, buffer, |&i| points[i].position)?;
    let mut keyed: Vec<(f64, &MonitoringPoint)> =
        hits.into_iter().map(|i| (line.path.project(&points[i].position).1, &points[i])).collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
    Ok(keyed.into_iter().map(|(_, p)| p).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlyphDirection {
    Up,
    Down,
    /// Zero deformation; drawn as a point on the ground.
    Level,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlyphStyle {
    Cylinder,
    Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderGlyph {
    pub point_id: String,
    pub base: GeoPoint,
    pub height: f64,
    pub direction: GlyphDirection,
    pub style: GlyphStyle,
    pub deformation_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub point_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GlyphSet {
    pub glyphs: Vec<CylinderGlyph>,
    pub diagnostics: Vec<Diagnostic>,
}

/// One glyph per point from its latest reading. Points with no history or
/// outside the terrain are skipped and listed in the diagnostics.
pub fn make_glyphs<'a>(
    points: impl IntoIterator<Item = &'a MonitoringPoint>,
    scale: f64,
    terrain: &TerrainGrid,
) -> Result<GlyphSet> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale must be > 0, got {scale}")));
    }
    let mut out = GlyphSet::default();
    for p in points {
        let skip = |reason: &str| Diagnostic { point_id: p.id.clone(), reason: reason.to_string() };
        let Some(latest) = p.latest() else {
            out.diagnostics.push(skip("empty history"));
            continue;
        };
        let Ok(z) = terrain.elevation_at(&p.position) else {
            out.diagnostics.push(skip("outside terrain"));
            continue;
        };
        let d = latest.deformation_mm;
        let (direction, style) = if d > 0.0 {
            (GlyphDirection::Up, GlyphStyle::Cylinder)
        } else if d < 0.0 {
            (GlyphDirection::Down, GlyphStyle::Cylinder)
        } else {
            (GlyphDirection::Level, GlyphStyle::Point)
        };
        out.glyphs.push(CylinderGlyph {
            point_id: p.id.clone(),
            base: p.position.with_z(z),
            height: d.abs() * scale,
            direction,
            style,
            deformation_mm: d,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Lifting,
    Sinking,
    Stable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub trend: Trend,
    pub slope_mm_per_day: f64,
}

pub fn trend(p: &MonitoringPoint) -> Result<TrendFit> {
    trend_with(p, DEFAULT_STABLE_EPS_MM_PER_DAY)
}

pub fn trend_with(p: &MonitoringPoint, eps_mm_per_day: f64) -> Result<TrendFit> {
    if p.history.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "point {} has {} reading(s), trend needs 2",
            p.id,
            p.history.len()
        )));
    }
    let slope = ols_slope(&p.history);
    let trend = if slope > eps_mm_per_day {
        Trend::Lifting
    } else if slope < -eps_mm_per_day {
        Trend::Sinking
    } else {
        Trend::Stable
    };
    Ok(TrendFit { trend, slope_mm_per_day: slope })
}

/// Least-squares slope of deformation against days since the first reading.
fn ols_slope(history: &[Reading]) -> f64 {
    let t0 = history[0].timestamp;
    let xs: Vec<f64> = history.iter().map(|r| (r.timestamp - t0).num_milliseconds() as f64 / 86_400_000.0).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = history.iter().map(|r| r.deformation_mm).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, r) in xs.iter().zip(history) {
        sxy += (x - mx) * (r.deformation_mm - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Selection, glyphs and trends for one metro line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationReport {
    pub line_id: String,
    pub buffer_m: f64,
    pub scale: f64,
    pub point_ids: Vec<String>,
    pub glyphs: Vec<CylinderGlyph>,
    pub trends: Vec<PointTrend>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointTrend {
    pub point_id: String,
    #[serde(flatten)]
    pub fit: TrendFit,
}

pub fn analyze_line(
    line: &MetroLine,
    points: &[MonitoringPoint],
    idx: &SpatialIndex<usize>,
    buffer_m: f64,
    scale: f64,
    terrain: &TerrainGrid,
) -> Result<DeformationReport> {
    let selected = select_points(line, points, buffer_m, idx)?;
    let GlyphSet { glyphs, diagnostics } = make_glyphs(selected.iter().copied(), scale, terrain)?;
    let trends =
        selected.iter().filter_map(|p| trend(p).ok().map(|fit| PointTrend { point_id: p.id.clone(), fit })).collect();
    Ok(DeformationReport {
        line_id: line.id.clone(),
        buffer_m,
        scale,
        point_ids: selected.iter().map(|p| p.id.clone()).collect(),
        glyphs,
        trends,
        diagnostics,
    })
}
