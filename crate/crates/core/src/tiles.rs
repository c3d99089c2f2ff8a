//! Level-of-detail tiles over a local quadtree of the scene extent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{clip_segment, Aabb, GeoPoint, Mesh, Polygon, Polyline};
use crate::index::SpatialIndex;
use crate::scene::{extrude_building, CityScene, Room};

pub const DEFAULT_DETAIL_ZOOM: u8 = 15;
pub const MAX_ZOOM: u8 = 24;
/// Upper bound on terrain samples per tile axis.
pub const PATCH_SAMPLES: usize = 33;

/// Tile `(x, y)` at `zoom` covers column `x` and row `y` of a `2^zoom` grid
/// over the scene extent; `y` counts from the south edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileKey {
    pub zoom: u8,
    pub x: u32,
    pub y: u32,
}

impl TileKey {
    pub fn new(zoom: u8, x: u32, y: u32) -> Self {
        Self { zoom, x, y }
    }

    pub fn children(&self) -> [TileKey; 4] {
        let (z, x, y) = (self.zoom + 1, self.x * 2, self.y * 2);
        [TileKey::new(z, x, y), TileKey::new(z, x + 1, y), TileKey::new(z, x, y + 1), TileKey::new(z, x + 1, y + 1)]
    }

    fn check(&self) -> Result<()> {
        if self.zoom > MAX_ZOOM || self.x >= 1 << self.zoom || self.y >= 1 << self.zoom {
            return Err(Error::not_found("tile", format!("{}/{}/{}", self.zoom, self.x, self.y)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileBuilding {
    pub id: String,
    pub footprint: Polygon,
    pub base_elevation: f64,
    pub height: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<Mesh>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rooms: Option<Vec<Room>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRoad {
    pub id: String,
    pub lanes: u32,
    /// Parts of the path inside the tile.
    pub pieces: Vec<Polyline>,
}

/// Terrain nodes inside the tile, possibly subsampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainPatch {
    pub origin: GeoPoint,
    pub spacing: f64,
    pub n_cols: usize,
    pub n_rows: usize,
    pub elevations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTile {
    pub key: TileKey,
    pub bbox: Aabb,
    pub detail: bool,
    pub buildings: Vec<TileBuilding>,
    pub roads: Vec<TileRoad>,
    pub terrain: TerrainPatch,
}

impl SceneTile {
    pub fn is_empty(&self) -> bool {
        self.buildings.is_empty() && self.roads.is_empty()
    }
}

/// Tile cutter for one immutable scene. Holds only the indices, so
/// [`TileService::get_tile`] must be given the scene it was built from.
#[derive(Debug, Clone)]
pub struct TileService {
    extent: Aabb,
    detail_zoom: u8,
    buildings: SpatialIndex<usize>,
    roads: SpatialIndex<usize>,
}

impl TileService {
    pub fn new(scene: &CityScene, detail_zoom: u8) -> Self {
        let index = |boxes: Vec<(usize, Aabb)>| SpatialIndex::build(boxes).expect("positions are unique");
        Self {
            extent: scene.extent(),
            detail_zoom,
            buildings: index(scene.buildings().iter().enumerate().map(|(i, b)| (i, b.bbox())).collect()),
            roads: index(scene.roads().iter().enumerate().map(|(i, r)| (i, r.path.bbox())).collect()),
        }
    }

    pub fn extent(&self) -> Aabb {
        self.extent
    }

    pub fn detail_zoom(&self) -> u8 {
        self.detail_zoom
    }

    pub fn tile_bbox(&self, key: TileKey) -> Result<Aabb> {
        key.check()?;
        let n = (1u64 << key.zoom) as f64;
        let e = &self.extent;
        let (w, h) = (e.width() / n, e.height() / n);
        let edge = |min: f64, max: f64, span: f64, i: u32| {
            if i as f64 == n {
                max
            } else {
                min + span * i as f64
            }
        };
        Ok(Aabb {
            min_x: edge(e.min_x, e.max_x, w, key.x),
            min_y: edge(e.min_y, e.max_y, h, key.y),
            max_x: edge(e.min_x, e.max_x, w, key.x + 1),
            max_y: edge(e.min_y, e.max_y, h, key.y + 1),
        })
    }

    pub fn get_tile(&self, scene: &CityScene, key: TileKey) -> Result<SceneTile> {
        let bbox = self.tile_bbox(key)?;
        let detail = key.zoom >= self.detail_zoom;

        let mut buildings = Vec::new();
        for i in self.buildings.query_range(&bbox) {
            let b = &scene.buildings()[i];
            let (mesh, rooms) = if detail { (Some(extrude_building(b)?), Some(b.rooms.clone())) } else { (None, None) };
            buildings.push(TileBuilding {
                id: b.id.clone(),
                footprint: b.footprint.clone(),
                base_elevation: b.base_elevation,
                height: b.height,
                mesh,
                rooms,
            });
        }

        let mut roads = Vec::new();
        for i in self.roads.query_range(&bbox) {
            let r = &scene.roads()[i];
            let pieces = clip_polyline(&r.path, &bbox);
            if !pieces.is_empty() {
                roads.push(TileRoad { id: r.id.clone(), lanes: r.lanes, pieces });
            }
        }

        Ok(SceneTile { key, bbox, detail, buildings, roads, terrain: terrain_patch(scene, &bbox) })
    }
}

/// Pieces of `line` inside `bx` with positive length, contiguous runs merged.
pub fn clip_polyline(line: &Polyline, bx: &Aabb) -> Vec<Polyline> {
    let mut pieces = Vec::new();
    let mut run: Vec<GeoPoint> = Vec::new();
    for (a, b) in line.segments() {
        let lerp = |t: f64| GeoPoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.z + t * (b.z - a.z));
        match clip_segment(a, b, bx) {
            Some((t0, t1)) if t1 > t0 => {
                let (p, q) = (lerp(t0), lerp(t1));
                if run.last().is_none_or(|l| !l.same_xy(&p)) {
                    flush(&mut run, &mut pieces);
                    run.push(p);
                }
                run.push(q);
                if t1 < 1.0 {
                    flush(&mut run, &mut pieces);
                }
            }
            _ => flush(&mut run, &mut pieces),
        }
    }
    flush(&mut run, &mut pieces);
    pieces
}

fn flush(run: &mut Vec<GeoPoint>, out: &mut Vec<Polyline>) {
    if run.len() >= 2 {
        if let Ok(p) = Polyline::new(std::mem::take(run)) {
            out.push(p);
        }
    }
    run.clear();
}

fn terrain_patch(scene: &CityScene, bbox: &Aabb) -> TerrainPatch {
    let t = scene.terrain();
    let range = |min: f64, max: f64, origin: f64, n: usize| -> Option<(usize, usize)> {
        let lo = ((min - origin) / t.cell_size).ceil().max(0.0);
        let hi = ((max - origin) / t.cell_size).floor().min(n as f64 - 1.0);
        (lo <= hi).then_some((lo as usize, hi as usize))
    };
    let empty = TerrainPatch {
        origin: GeoPoint::xy(bbox.min_x, bbox.min_y),
        spacing: t.cell_size,
        n_cols: 0,
        n_rows: 0,
        elevations: Vec::new(),
    };
    let (Some((c0, c1)), Some((r0, r1))) =
        (range(bbox.min_x, bbox.max_x, t.origin.x, t.n_cols), range(bbox.min_y, bbox.max_y, t.origin.y, t.n_rows))
    else {
        return empty;
    };
    let span = (c1 - c0).max(r1 - r0);
    let stride = span.div_ceil(PATCH_SAMPLES - 1).max(1);
    let cols: Vec<usize> = (c0..=c1).step_by(stride).collect();
    let rows: Vec<usize> = (r0..=r1).step_by(stride).collect();
    let elevations = rows.iter().flat_map(|&r| cols.iter().map(move |&c| t.node(c, r))).collect();
    TerrainPatch {
        origin: GeoPoint::new(t.origin.x + c0 as f64 * t.cell_size, t.origin.y + r0 as f64 * t.cell_size, 0.0),
        spacing: t.cell_size * stride as f64,
        n_cols: cols.len(),
        n_rows: rows.len(),
        elevations,
    }
}
