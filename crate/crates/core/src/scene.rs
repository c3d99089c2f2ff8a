//! Buildings and the city scene container.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::community::CommunityRecord;
use crate::deformation::MetroLine;
use crate::error::{Error, Result, ValidationReport, Violation};
use crate::geometry::{clip_segment, point_in_polygon, triangulate, Aabb, GeoPoint, LatLong, Mesh, Polygon};
use crate::layers::{LayerKind, LayerNode};
use crate::terrain::TerrainGrid;
use crate::traffic::RoadSegment;

/// Axis-aligned room box. `min`/`max` are opposite corners in absolute meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub id: String,
    pub min: GeoPoint,
    pub max: GeoPoint,
}

/// A footprint extruded from `base_elevation` up by `height` meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub id: String,
    pub footprint: Polygon,
    pub base_elevation: f64,
    pub height: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rooms: Vec<Room>,
}

impl Building {
    pub fn new(
        id: impl Into<String>,
        footprint: Polygon,
        base_elevation: f64,
        height: f64,
        rooms: Vec<Room>,
    ) -> Result<Self> {
        let b = Self { id: id.into(), footprint, base_elevation, height, rooms };
        let report = ValidationReport { violations: b.violations() };
        report.into_result()?;
        Ok(b)
    }

    pub fn top(&self) -> f64 {
        self.base_elevation + self.height
    }

    pub fn bbox(&self) -> Aabb {
        self.footprint.bbox()
    }

    pub fn violations(&self) -> Vec<Violation> {
        let object = format!("building:{}", self.id);
        let mut out = Vec::new();
        if self.id.is_empty() {
            out.push(Violation::new(&object, "id non-empty", ""));
        }
        if !self.base_elevation.is_finite() {
            out.push(Violation::new(&object, "base_elevation finite", ""));
        }
        if !(self.height > 0.0 && self.height.is_finite()) {
            out.push(Violation::new(&object, "height > 0", format!("height = {}", self.height)));
            return out;
        }
        let mut room_ids = BTreeSet::new();
        for room in &self.rooms {
            let object = format!("building:{}/room:{}", self.id, room.id);
            if !room_ids.insert(room.id.as_str()) {
                out.push(Violation::new(&object, "room ids unique", ""));
            }
            if !(room.min.is_finite() && room.max.is_finite())
                || room.min.x >= room.max.x
                || room.min.y >= room.max.y
                || room.min.z >= room.max.z
            {
                out.push(Violation::new(&object, "room min < max", ""));
                continue;
            }
            if !self.contains_room(room) {
                out.push(Violation::new(&object, "room inside building prism", ""));
            }
        }
        out
    }

    fn contains_room(&self, room: &Room) -> bool {
        if room.min.z < self.base_elevation || room.max.z > self.top() {
            return false;
        }
        let (x0, y0, x1, y1) = (room.min.x, room.min.y, room.max.x, room.max.y);
        let corners = [GeoPoint::xy(x0, y0), GeoPoint::xy(x1, y0), GeoPoint::xy(x1, y1), GeoPoint::xy(x0, y1)];
        if !corners.iter().all(|c| point_in_polygon(c, &self.footprint)) {
            return false;
        }
        // No footprint edge may pass through the open rectangle.
        let rect = Aabb { min_x: x0, min_y: y0, max_x: x1, max_y: y1 };
        self.footprint.edges().all(|(p, q)| match clip_segment(p, q, &rect) {
            None => true,
            Some((t0, t1)) => {
                let t = 0.5 * (t0 + t1);
                let mx = p.x + t * (q.x - p.x);
                let my = p.y + t * (q.y - p.y);
                !(mx > x0 && mx < x1 && my > y0 && my < y1)
            }
        })
    }
}

/// Closed prism mesh: `2n` vertices (bottom ring then top ring), `2n` wall
/// triangles and `2(n - 2)` cap triangles, all facing outward.
pub fn extrude_building(b: &Building) -> Result<Mesh> {
    if b.height.is_nan() || b.height <= 0.0 {
        return Err(Error::InvalidGeometry(format!("building {} has non-positive height", b.id)));
    }
    let ring = b.footprint.ring();
    let n = ring.len();
    let top = b.top();
    let mut vertices = Vec::with_capacity(2 * n);
    vertices.extend(ring.iter().map(|p| GeoPoint::new(p.x, p.y, b.base_elevation)));
    vertices.extend(ring.iter().map(|p| GeoPoint::new(p.x, p.y, top)));

    let caps = triangulate(&b.footprint)?;
    let mut triangles = Vec::with_capacity(2 * n + 2 * caps.len());
    for i in 0..n {
        let j = (i + 1) % n;
        let (bi, bj, ti, tj) = (i as u32, j as u32, (i + n) as u32, (j + n) as u32);
        triangles.push([bi, bj, tj]);
        triangles.push([bi, tj, ti]);
    }
    for [a, b2, c] in &caps {
        triangles.push([a + n as u32, b2 + n as u32, c + n as u32]);
        triangles.push([*c, *b2, *a]);
    }
    Ok(Mesh { vertices, triangles })
}

/// Everything a scene is built from. Collections need not be sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneParts {
    pub terrain: TerrainGrid,
    pub buildings: Vec<Building>,
    pub roads: Vec<RoadSegment>,
    pub metro_lines: Vec<MetroLine>,
    pub communities: Vec<CommunityRecord>,
    pub layer_root: LayerNode,
    pub geo_anchor: LatLong,
}

/// A validated, immutable city scene. Collections are kept sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct CityScene {
    parts: SceneParts,
}

impl CityScene {
    /// Validates every invariant, reporting all violations at once.
    pub fn new(mut parts: SceneParts) -> Result<Self> {
        parts.buildings.sort_by(|a, b| a.id.cmp(&b.id));
        parts.roads.sort_by(|a, b| a.id.cmp(&b.id));
        parts.metro_lines.sort_by(|a, b| a.id.cmp(&b.id));
        parts.communities.sort_by(|a, b| a.id.cmp(&b.id));
        validate_parts(&parts).into_result()?;
        Ok(Self { parts })
    }

    /// Skips validation; callers guarantee `parts` is sorted and valid.
    pub(crate) fn from_valid_parts(parts: SceneParts) -> Self {
        Self { parts }
    }

    pub fn into_parts(self) -> SceneParts {
        self.parts
    }

    pub fn parts(&self) -> &SceneParts {
        &self.parts
    }

    pub fn terrain(&self) -> &TerrainGrid {
        &self.parts.terrain
    }

    pub fn buildings(&self) -> &[Building] {
        &self.parts.buildings
    }

    pub fn roads(&self) -> &[RoadSegment] {
        &self.parts.roads
    }

    pub fn metro_lines(&self) -> &[MetroLine] {
        &self.parts.metro_lines
    }

    pub fn communities(&self) -> &[CommunityRecord] {
        &self.parts.communities
    }

    pub fn layer_root(&self) -> &LayerNode {
        &self.parts.layer_root
    }

    pub fn geo_anchor(&self) -> LatLong {
        self.parts.geo_anchor
    }

    pub fn building(&self, id: &str) -> Result<&Building> {
        find_sorted(&self.parts.buildings, id, |b| &b.id).ok_or_else(|| Error::not_found("building", id))
    }

    pub fn road(&self, id: &str) -> Result<&RoadSegment> {
        find_sorted(&self.parts.roads, id, |r| &r.id).ok_or_else(|| Error::not_found("road", id))
    }

    pub fn metro_line(&self, id: &str) -> Result<&MetroLine> {
        find_sorted(&self.parts.metro_lines, id, |m| &m.id).ok_or_else(|| Error::not_found("metro line", id))
    }

    pub fn community(&self, id: &str) -> Result<&CommunityRecord> {
        find_sorted(&self.parts.communities, id, |c| &c.id).ok_or_else(|| Error::not_found("community", id))
    }

    /// Union of the terrain extent and every building and road box.
    pub fn extent(&self) -> Aabb {
        let mut b = self.parts.terrain.extent();
        for bl in &self.parts.buildings {
            b = b.union(&bl.bbox());
        }
        for r in &self.parts.roads {
            b = b.union(&r.path.bbox());
        }
        b
    }

    /// Same scene with a different layer tree. The tree must reference existing ids.
    pub fn with_layer_root(&self, root: LayerNode) -> Result<Self> {
        let mut parts = self.parts.clone();
        parts.layer_root = root;
        validate_parts(&parts).into_result()?;
        Ok(Self { parts })
    }
}

pub(crate) fn find_sorted<'a, T>(items: &'a [T], id: &str, key: impl Fn(&T) -> &String) -> Option<&'a T> {
    items.binary_search_by(|x| key(x).as_str().cmp(id)).ok().map(|i| &items[i])
}

fn check_unique<'a>(kind: &str, ids: impl Iterator<Item = &'a String>, report: &mut ValidationReport) {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            report.push(Violation::new(format!("{kind}:{id}"), "ids unique", ""));
        }
    }
}

/// Cross-object and per-object checks over already-typed scene parts.
pub fn validate_parts(parts: &SceneParts) -> ValidationReport {
    let mut report = ValidationReport::default();
    if parts.geo_anchor.check().is_err() {
        report.push(Violation::new(
            "geo_anchor",
            "lat in [-90, 90] and lon in [-180, 180]",
            format!("({}, {})", parts.geo_anchor.lat, parts.geo_anchor.lon),
        ));
    }
    report.violations.extend(parts.terrain.violations());
    for b in &parts.buildings {
        report.violations.extend(b.violations());
    }
    for r in &parts.roads {
        report.violations.extend(r.violations());
    }
    for c in &parts.communities {
        report.violations.extend(c.violations());
    }
    check_unique("building", parts.buildings.iter().map(|b| &b.id), &mut report);
    check_unique("road", parts.roads.iter().map(|r| &r.id), &mut report);
    check_unique("metro_line", parts.metro_lines.iter().map(|m| &m.id), &mut report);
    check_unique("community", parts.communities.iter().map(|c| &c.id), &mut report);

    let mut layer_ids = BTreeSet::new();
    parts.layer_root.walk(&mut |node| {
        let object = format!("layer:{}", node.id);
        if !layer_ids.insert(node.id.clone()) {
            report.push(Violation::new(&object, "layer ids unique", ""));
        }
        if let Some(target) = &node.target {
            let exists = match node.kind {
                LayerKind::Buildings => parts.buildings.iter().any(|b| &b.id == target),
                LayerKind::Roads => parts.roads.iter().any(|r| &r.id == target),
                LayerKind::Metro => parts.metro_lines.iter().any(|m| &m.id == target),
                LayerKind::Communities => parts.communities.iter().any(|c| &c.id == target),
                LayerKind::Group | LayerKind::Terrain | LayerKind::AnalysisResult => false,
            };
            if !exists {
                report.push(Violation::new(
                    &object,
                    "layer references existing id",
                    format!("target `{target}` not found"),
                ));
            }
        }
    });
    report
}
