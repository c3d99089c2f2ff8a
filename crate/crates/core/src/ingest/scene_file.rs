//! The JSON scene document: loading with full validation, deterministic saving.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::community::{Bin, CommunityRecord};
use crate::deformation::MetroLine;
use crate::error::{Error, Result, ValidationReport, Violation};
use crate::geometry::{
    polygon_rule_violation, polyline_rule_violation, GeoJsonLineString, GeoJsonPolygon, LatLong, Polygon, Polyline,
};
use crate::layers::{LayerKind, LayerNode};
use crate::scene::{Building, CityScene, Room, SceneParts};
use crate::terrain::TerrainGrid;
use crate::traffic::RoadSegment;

pub const FORMAT: &str = "urbanlens-scene";
pub const VERSION: u32 = 1;

#[derive(Serialize)]
struct DocumentOut<'a> {
    format: &'static str,
    version: u32,
    geo_anchor: &'a LatLong,
    terrain: &'a TerrainGrid,
    buildings: &'a [Building],
    roads: &'a [RoadSegment],
    metro_lines: &'a [MetroLine],
    communities: &'a [CommunityRecord],
    layers: &'a LayerNode,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    format: String,
    version: u32,
    geo_anchor: LatLong,
    terrain: TerrainGrid,
    #[serde(default)]
    buildings: Vec<RawBuilding>,
    #[serde(default)]
    roads: Vec<RawRoad>,
    #[serde(default)]
    metro_lines: Vec<RawMetroLine>,
    #[serde(default)]
    communities: Vec<RawCommunity>,
    #[serde(default)]
    layers: Option<LayerNode>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBuilding {
    id: String,
    footprint: GeoJsonPolygon,
    base_elevation: f64,
    height: f64,
    #[serde(default)]
    rooms: Vec<Room>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRoad {
    id: String,
    path: GeoJsonLineString,
    lanes: u32,
    free_flow_speed_kmh: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetroLine {
    id: String,
    name: String,
    path: GeoJsonLineString,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCommunity {
    id: String,
    name: String,
    boundary: GeoJsonPolygon,
    population: u64,
    #[serde(default)]
    age_bins: Vec<Bin>,
    #[serde(default)]
    education_bins: Vec<Bin>,
}

/// Root group with one child per scene collection plus an analysis layer.
pub fn default_layer_tree() -> LayerNode {
    LayerNode::new("city", "City", LayerKind::Group).with_children(vec![
        LayerNode::new("terrain", "Terrain", LayerKind::Terrain),
        LayerNode::new("buildings", "Buildings", LayerKind::Buildings),
        LayerNode::new("roads", "Roads", LayerKind::Roads),
        LayerNode::new("metro", "Metro", LayerKind::Metro),
        LayerNode::new("communities", "Communities", LayerKind::Communities),
        LayerNode::new("analysis", "Analysis results", LayerKind::AnalysisResult),
    ])
}

fn polygon(object: &str, field: &str, g: GeoJsonPolygon, report: &mut ValidationReport) -> Option<Polygon> {
    let ring = match g.into_ring() {
        Ok(r) => r,
        Err(e) => {
            report.push(Violation::new(object, format!("{field} is a GeoJSON Polygon"), e));
            return None;
        }
    };
    if let Some(rule) = polygon_rule_violation(&ring) {
        report.push(Violation::new(object, format!("{field} {rule}"), ""));
        return None;
    }
    Polygon::new(ring).ok()
}

fn polyline(object: &str, field: &str, g: GeoJsonLineString, report: &mut ValidationReport) -> Option<Polyline> {
    let vertices = match g.into_vertices() {
        Ok(v) => v,
        Err(e) => {
            report.push(Violation::new(object, format!("{field} is a GeoJSON LineString"), e));
            return None;
        }
    };
    if let Some(rule) = polyline_rule_violation(&vertices) {
        report.push(Violation::new(object, format!("{field} {rule}"), ""));
        return None;
    }
    Polyline::new(vertices).ok()
}

/// Parses and validates a scene document, reporting every violation found.
pub fn parse_scene(text: &str) -> Result<CityScene> {
    let raw: RawDocument = serde_json::from_str(text).map_err(|e| Error::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut report = ValidationReport::default();
    if raw.format != FORMAT || raw.version != VERSION {
        report.push(Violation::new(
            "document",
            format!("format = {FORMAT} and version = {VERSION}"),
            format!("found {} version {}", raw.format, raw.version),
        ));
    }

    let buildings = raw
        .buildings
        .into_iter()
        .filter_map(|b| {
            let fp = polygon(&format!("building:{}", b.id), "footprint", b.footprint, &mut report)?;
            Some(Building {
                id: b.id,
                footprint: fp,
                base_elevation: b.base_elevation,
                height: b.height,
                rooms: b.rooms,
            })
        })
        .collect();
    let roads = raw
        .roads
        .into_iter()
        .filter_map(|r| {
            let path = polyline(&format!("road:{}", r.id), "path", r.path, &mut report)?;
            Some(RoadSegment { id: r.id, path, lanes: r.lanes, free_flow_speed_kmh: r.free_flow_speed_kmh })
        })
        .collect();
    let metro_lines = raw
        .metro_lines
        .into_iter()
        .filter_map(|m| {
            let path = polyline(&format!("metro_line:{}", m.id), "path", m.path, &mut report)?;
            Some(MetroLine { id: m.id, name: m.name, path })
        })
        .collect();
    let communities = raw
        .communities
        .into_iter()
        .filter_map(|c| {
            let boundary = polygon(&format!("community:{}", c.id), "boundary", c.boundary, &mut report)?;
            Some(CommunityRecord {
                id: c.id,
                name: c.name,
                boundary,
                population: c.population,
                age_bins: c.age_bins,
                education_bins: c.education_bins,
            })
        })
        .collect();

    let parts = SceneParts {
        terrain: raw.terrain,
        buildings,
        roads,
        metro_lines,
        communities,
        layer_root: raw.layers.unwrap_or_else(default_layer_tree),
        geo_anchor: raw.geo_anchor,
    };
    match CityScene::new(parts) {
        Ok(scene) if report.is_empty() => Ok(scene),
        Ok(_) => Err(Error::Validation(report)),
        Err(Error::Validation(rest)) => {
            report.violations.extend(rest.violations);
            Err(Error::Validation(report))
        }
        Err(e) => Err(e),
    }
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<CityScene> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scene(&text)
}

/// Pretty-printed document with fixed key order and objects sorted by id.
pub fn scene_to_string(scene: &CityScene) -> String {
    let doc = DocumentOut {
        format: FORMAT,
        version: VERSION,
        geo_anchor: &scene.parts().geo_anchor,
        terrain: scene.terrain(),
        buildings: scene.buildings(),
        roads: scene.roads(),
        metro_lines: scene.metro_lines(),
        communities: scene.communities(),
        layers: scene.layer_root(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("scene serializes");
    s.push('\n');
    s
}

pub fn save_scene(scene: &CityScene, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, scene_to_string(scene)).map_err(|e| Error::io(path, e))
}
