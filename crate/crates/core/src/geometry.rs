//! Planar geometry primitives in the local east-north-up frame.
//!
//! All distances are meters. Containment and intersection predicates are
//! closed: a point on a polygon boundary is inside, boxes that share an edge
//! intersect.

use std::fmt;

use serde::de::{self, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A position in the local frame: `x` east, `y` north, `z` up.
///
/// Serialized as a GeoJSON position, `[x, y]` or `[x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl GeoPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn xy(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn with_z(self, z: f64) -> Self {
        Self { z, ..self }
    }

    pub fn distance_2d(&self, other: &GeoPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn same_xy(&self, other: &GeoPoint) -> bool {
        self.x == other.x && self.y == other.y
    }
}

impl Serialize for GeoPoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.z == 0.0 {
            [self.x, self.y].serialize(serializer)
        } else {
            [self.x, self.y, self.z].serialize(serializer)
        }
    }
}

impl<'de> Deserialize<'de> for GeoPoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct PositionVisitor;

        impl<'de> Visitor<'de> for PositionVisitor {
            type Value = GeoPoint;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a position [x, y] or [x, y, z]")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<GeoPoint, A::Error> {
                let x: f64 = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let y: f64 = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(1, &self))?;
                let z: f64 = seq.next_element()?.unwrap_or(0.0);
                if seq.next_element::<de::IgnoredAny>()?.is_some() {
                    return Err(de::Error::invalid_length(4, &self));
                }
                Ok(GeoPoint { x, y, z })
            }
        }

        deserializer.deserialize_seq(PositionVisitor)
    }
}

/// Geographic coordinates in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLong {
    pub lat: f64,
    pub lon: f64,
}

impl LatLong {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let ll = Self { lat, lon };
        ll.check()?;
        Ok(ll)
    }

    pub fn check(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::InvalidArgument(format!(
                "latitude/longitude ({}, {}) out of range",
                self.lat, self.lon
            )));
        }
        Ok(())
    }
}

/// Axis-aligned bounding box in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Aabb {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        let b = Self { min_x, min_y, max_x, max_y };
        if ![min_x, min_y, max_x, max_y].iter().all(|v| v.is_finite()) || min_x > max_x || min_y > max_y {
            return Err(Error::InvalidArgument(format!("malformed box {b:?}")));
        }
        Ok(b)
    }

    pub fn from_point(p: &GeoPoint) -> Self {
        Self { min_x: p.x, min_y: p.y, max_x: p.x, max_y: p.y }
    }

    /// Bounding box of a non-empty point set.
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a GeoPoint>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = Self::from_point(it.next()?);
        Some(it.fold(first, |b, p| b.union(&Self::from_point(p))))
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb {
            min_x: self.min_x.min(o.min_x),
            min_y: self.min_y.min(o.min_y),
            max_x: self.max_x.max(o.max_x),
            max_y: self.max_y.max(o.max_y),
        }
    }

    pub fn intersects(&self, o: &Aabb) -> bool {
        self.min_x <= o.max_x && o.min_x <= self.max_x && self.min_y <= o.max_y && o.min_y <= self.max_y
    }

    pub fn contains_point(&self, p: &GeoPoint) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn contains(&self, o: &Aabb) -> bool {
        o.min_x >= self.min_x && o.max_x <= self.max_x && o.min_y >= self.min_y && o.max_y <= self.max_y
    }

    pub fn expand(&self, d: f64) -> Aabb {
        Aabb { min_x: self.min_x - d, min_y: self.min_y - d, max_x: self.max_x + d, max_y: self.max_y + d }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint::xy((self.min_x + self.max_x) * 0.5, (self.min_y + self.max_y) * 0.5)
    }

    /// Squared distance from a point to the closest point of the box.
    pub fn distance2_to(&self, p: &GeoPoint) -> f64 {
        let dx = (self.min_x - p.x).max(0.0).max(p.x - self.max_x);
        let dy = (self.min_y - p.y).max(0.0).max(p.y - self.max_y);
        dx * dx + dy * dy
    }
}

#[inline]
fn cross(o: &GeoPoint, a: &GeoPoint, b: &GeoPoint) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(p: &GeoPoint, a: &GeoPoint, b: &GeoPoint) -> bool {
    cross(a, b, p) == 0.0 && p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed segment intersection test.
pub(crate) fn segments_intersect(a: &GeoPoint, b: &GeoPoint, c: &GeoPoint, d: &GeoPoint) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

/// Distance from `p` to segment `a`-`b` in the plane, with the segment parameter of the foot.
pub(crate) fn point_segment_distance(p: &GeoPoint, a: &GeoPoint, b: &GeoPoint) -> (f64, f64) {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) };
    let fx = a.x + t * dx;
    let fy = a.y + t * dy;
    ((p.x - fx).hypot(p.y - fy), t)
}

/// A simple, counter-clockwise polygon without holes. The closing edge is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    ring: Vec<GeoPoint>,
}

impl Polygon {
    /// Validates the ring; fails unless it is simple, counter-clockwise and has nonzero area.
    pub fn new(ring: Vec<GeoPoint>) -> Result<Self> {
        if let Some(rule) = polygon_rule_violation(&ring) {
            return Err(Error::InvalidGeometry(format!("polygon violates `{rule}`")));
        }
        Ok(Self { ring })
    }

    /// Like [`Polygon::new`] but reverses clockwise input instead of rejecting it.
    pub fn new_normalized(mut ring: Vec<GeoPoint>) -> Result<Self> {
        if ring.len() >= 3 && signed_area(&ring) < 0.0 {
            ring.reverse();
        }
        Self::new(ring)
    }

    /// Axis-aligned rectangle, counter-clockwise from the south-west corner.
    pub fn rect(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        Self::new(vec![
            GeoPoint::xy(min_x, min_y),
            GeoPoint::xy(max_x, min_y),
            GeoPoint::xy(max_x, max_y),
            GeoPoint::xy(min_x, max_y),
        ])
    }

    pub fn ring(&self) -> &[GeoPoint] {
        &self.ring
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(&self.ring).expect("polygon has vertices")
    }

    /// Edges as `(start, end)` pairs, including the closing edge.
    pub fn edges(&self) -> impl Iterator<Item = (&GeoPoint, &GeoPoint)> {
        let n = self.ring.len();
        (0..n).map(move |i| (&self.ring[i], &self.ring[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.ring)
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        point_in_polygon(p, self)
    }

    pub fn centroid(&self) -> GeoPoint {
        let o = self.ring[0];
        let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
        for (p, q) in self.edges() {
            let (px, py, qx, qy) = (p.x - o.x, p.y - o.y, q.x - o.x, q.y - o.y);
            let c = px * qy - qx * py;
            a2 += c;
            cx += (px + qx) * c;
            cy += (py + qy) * c;
        }
        GeoPoint::xy(o.x + cx / (3.0 * a2), o.y + cy / (3.0 * a2))
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Polygon {
        Polygon { ring: self.ring.iter().map(|p| GeoPoint::new(p.x + dx, p.y + dy, p.z)).collect() }
    }
}

/// Shoelace area, positive for counter-clockwise rings. Computed relative to
/// the first vertex so large frame offsets do not cost precision.
fn signed_area(ring: &[GeoPoint]) -> f64 {
    let Some(o) = ring.first() else { return 0.0 };
    let n = ring.len();
    let mut acc = 0.0;
    for i in 0..n {
        let p = &ring[i];
        let q = &ring[(i + 1) % n];
        acc += (p.x - o.x) * (q.y - o.y) - (q.x - o.x) * (p.y - o.y);
    }
    acc * 0.5
}

/// Returns the name of the first polygon invariant the ring breaks, if any.
pub(crate) fn polygon_rule_violation(ring: &[GeoPoint]) -> Option<&'static str> {
    if !ring.iter().all(GeoPoint::is_finite) {
        return Some("coordinates finite");
    }
    let n = ring.len();
    if n < 3 {
        return Some("at least 3 vertices");
    }
    for i in 0..n {
        if ring[i].same_xy(&ring[(i + 1) % n]) {
            return Some("consecutive vertices distinct");
        }
    }
    let area = signed_area(ring);
    if area == 0.0 {
        return Some("nonzero area");
    }
    if !is_simple(ring) {
        return Some("simple (no self-intersection)");
    }
    if area < 0.0 {
        return Some("counter-clockwise orientation");
    }
    None
}

fn is_simple(ring: &[GeoPoint]) -> bool {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (&ring[i], &ring[(i + 1) % n]);
        for j in (i + 1)..n {
            let (c, d) = (&ring[j], &ring[(j + 1) % n]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Shared vertex is fine; a fold-back along the same line is not.
                let (shared, other_ab, other_cd) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                if cross(shared, other_ab, other_cd) == 0.0 {
                    let dot = (other_ab.x - shared.x) * (other_cd.x - shared.x)
                        + (other_ab.y - shared.y) * (other_cd.y - shared.y);
                    if dot > 0.0 {
                        return false;
                    }
                }
            } else if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

impl Serialize for Polygon {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        GeoJsonPolygon::from_ring(&self.ring).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Polygon {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = GeoJsonPolygon::deserialize(deserializer)?;
        let ring = raw.into_ring().map_err(de::Error::custom)?;
        Polygon::new(ring).map_err(de::Error::custom)
    }
}

/// GeoJSON `Polygon` geometry as it appears on the wire. The ring is closed
/// (first position repeated last) per GeoJSON; only the outer ring is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoJsonPolygon {
    #[serde(rename = "type")]
    pub kind: String,
    pub coordinates: Vec<Vec<GeoPoint>>,
}

impl GeoJsonPolygon {
    pub fn from_ring(ring: &[GeoPoint]) -> Self {
        let mut closed = ring.to_vec();
        if let Some(first) = ring.first() {
            closed.push(*first);
        }
        Self { kind: "Polygon".into(), coordinates: vec![closed] }
    }

    /// Open ring (closing duplicate removed).
    pub fn into_ring(self) -> std::result::Result<Vec<GeoPoint>, String> {
        if self.kind != "Polygon" {
            return Err(format!("expected geometry type Polygon, found {}", self.kind));
        }
        let mut rings = self.coordinates.into_iter();
        let mut ring = rings.next().ok_or("polygon has no rings")?;
        if rings.next().is_some() {
            return Err("polygon holes are not supported".into());
        }
        if ring.len() >= 2 && ring.first() == ring.last() {
            ring.pop();
        }
        Ok(ring)
    }
}

/// GeoJSON `LineString` geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoJsonLineString {
    #[serde(rename = "type")]
    pub kind: String,
    pub coordinates: Vec<GeoPoint>,
}

impl GeoJsonLineString {
    pub fn new(coordinates: Vec<GeoPoint>) -> Self {
        Self { kind: "LineString".into(), coordinates }
    }

    pub fn into_vertices(self) -> std::result::Result<Vec<GeoPoint>, String> {
        if self.kind != "LineString" {
            return Err(format!("expected geometry type LineString, found {}", self.kind));
        }
        Ok(self.coordinates)
    }
}

/// An open polyline with at least two distinct consecutive vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    vertices: Vec<GeoPoint>,
}

impl Polyline {
    pub fn new(vertices: Vec<GeoPoint>) -> Result<Self> {
        if let Some(rule) = polyline_rule_violation(&vertices) {
            return Err(Error::InvalidGeometry(format!("polyline violates `{rule}`")));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[GeoPoint] {
        &self.vertices
    }

    pub fn segments(&self) -> impl Iterator<Item = (&GeoPoint, &GeoPoint)> {
        self.vertices.windows(2).map(|w| (&w[0], &w[1]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| a.distance_2d(b)).sum()
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(&self.vertices).expect("polyline has vertices")
    }

    /// Planar distance from `p` to the line and the along-line distance
    /// (chainage) of the closest point. Ties keep the earliest segment.
    pub fn project(&self, p: &GeoPoint) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        let mut walked = 0.0;
        for (a, b) in self.segments() {
            let len = a.distance_2d(b);
            let (d, t) = point_segment_distance(p, a, b);
            if d < best.0 {
                best = (d, walked + t * len);
            }
            walked += len;
        }
        best
    }

    /// Point at along-line distance `s`, clamped to the ends. z is interpolated.
    pub fn point_at(&self, s: f64) -> GeoPoint {
        if s <= 0.0 {
            return self.vertices[0];
        }
        let mut walked = 0.0;
        for (a, b) in self.segments() {
            let len = a.distance_2d(b);
            if s <= walked + len {
                let t = (s - walked) / len;
                return GeoPoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.z + t * (b.z - a.z));
            }
            walked += len;
        }
        *self.vertices.last().expect("polyline has vertices")
    }
}

pub(crate) fn polyline_rule_violation(vertices: &[GeoPoint]) -> Option<&'static str> {
    if !vertices.iter().all(GeoPoint::is_finite) {
        return Some("coordinates finite");
    }
    if vertices.len() < 2 {
        return Some("at least 2 vertices");
    }
    if vertices.windows(2).any(|w| w[0].same_xy(&w[1])) {
        return Some("consecutive vertices distinct");
    }
    None
}

impl Serialize for Polyline {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        GeoJsonLineString::new(self.vertices.clone()).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Polyline {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = GeoJsonLineString::deserialize(deserializer)?;
        let vertices = raw.into_vertices().map_err(de::Error::custom)?;
        Polyline::new(vertices).map_err(de::Error::custom)
    }
}

/// Shoelace area of a valid polygon in square meters.
pub fn polygon_area(p: &Polygon) -> f64 {
    p.area()
}

/// Boundary-inclusive containment test (crossing number with an explicit
/// on-edge check).
pub fn point_in_polygon(pt: &GeoPoint, p: &Polygon) -> bool {
    let mut inside = false;
    for (a, b) in p.edges() {
        if on_segment(pt, a, b) {
            return true;
        }
        if (a.y > pt.y) != (b.y > pt.y) {
            let x_cross = a.x + (pt.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if pt.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Minimum planar distance from `pt` to any segment of `line`.
pub fn point_polyline_distance(pt: &GeoPoint, line: &Polyline) -> f64 {
    line.segments().map(|(a, b)| point_segment_distance(pt, a, b).0).fold(f64::INFINITY, f64::min)
}

/// Clips segment `a`-`b` to a closed box (Liang-Barsky). Returns the clipped
/// parameter range within `[0, 1]`, if any.
pub(crate) fn clip_segment(a: &GeoPoint, b: &GeoPoint, bx: &Aabb) -> Option<(f64, f64)> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [(-dx, a.x - bx.min_x), (dx, bx.max_x - a.x), (-dy, a.y - bx.min_y), (dy, bx.max_y - a.y)] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

/// Triangle mesh with vertex-index triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<GeoPoint>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    /// Signed enclosed volume via the divergence theorem. Positive for
    /// outward-facing triangles.
    pub fn signed_volume(&self) -> f64 {
        let o = self.vertices.first().copied().unwrap_or_default();
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| {
                    let v = self.vertices[i as usize];
                    [v.x - o.x, v.y - o.y, v.z - o.z]
                });
                a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                    + a[2] * (b[0] * c[1] - b[1] * c[0])
            })
            .sum::<f64>()
            / 6.0
    }
}

/// Ear-clipping triangulation of a counter-clockwise simple polygon.
/// Returns `n - 2` counter-clockwise index triples.
pub fn triangulate(p: &Polygon) -> Result<Vec<[u32; 3]>> {
    let ring = p.ring();
    let mut idx: Vec<usize> = (0..ring.len()).collect();
    let mut out = Vec::with_capacity(ring.len().saturating_sub(2));
    while idx.len() > 3 {
        let m = idx.len();
        let ear = (0..m).find(|&i| {
            let (a, b, c) = (idx[(i + m - 1) % m], idx[i], idx[(i + 1) % m]);
            let (pa, pb, pc) = (&ring[a], &ring[b], &ring[c]);
            if cross(pa, pb, pc) <= 0.0 {
                return false;
            }
            idx.iter().all(|&j| {
                j == a || j == b || j == c || {
                    let q = &ring[j];
                    // Vertices coincident with the ear's corners do not block it.
                    q.same_xy(pa) || q.same_xy(pb) || q.same_xy(pc) || !in_triangle(q, pa, pb, pc)
                }
            })
        });
        let Some(i) = ear else {
            return Err(Error::InvalidGeometry("polygon could not be triangulated".into()));
        };
        out.push([idx[(i + m - 1) % m] as u32, idx[i] as u32, idx[(i + 1) % m] as u32]);
        idx.remove(i);
    }
    if cross(&ring[idx[0]], &ring[idx[1]], &ring[idx[2]]) <= 0.0 {
        return Err(Error::InvalidGeometry("polygon could not be triangulated".into()));
    }
    out.push([idx[0] as u32, idx[1] as u32, idx[2] as u32]);
    Ok(out)
}

fn in_triangle(q: &GeoPoint, a: &GeoPoint, b: &GeoPoint, c: &GeoPoint) -> bool {
    cross(a, b, q) >= 0.0 && cross(b, c, q) >= 0.0 && cross(c, a, q) >= 0.0
}
