//! Deterministic synthetic cities for tests, demos and benchmarks.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use chrono::{DateTime, TimeDelta, TimeZone, Utc};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::community::{Bin, CommunityRecord};
use crate::deformation::{MetroLine, MonitoringPoint, Reading};
use crate::error::{Error, Result};
use crate::forecast::FlowSeries;
use crate::geometry::{GeoPoint, LatLong, Polygon, Polyline};
use crate::ingest::scene_file::{default_layer_tree, save_scene};
use crate::ingest::tables::{
    write_communities, write_flows, write_monitoring, write_traffic, AGE_LABELS, EDUCATION_LABELS,
};
use crate::scene::{Building, CityScene, Room, SceneParts};
use crate::terrain::TerrainGrid;
use crate::traffic::{RoadSegment, TrafficObservation};

/// File names written by [`write_to_dir`].
pub const SCENE_FILE: &str = "scene.json";
pub const TRAFFIC_FILE: &str = "traffic.csv";
pub const FLOWS_FILE: &str = "flows.csv";
pub const MONITORING_FILE: &str = "monitoring.csv";
pub const COMMUNITIES_FILE: &str = "communities.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub building_count: usize,
    /// Number of north-south and east-west roads.
    pub road_grid_dims: (usize, usize),
    pub metro_point_count: usize,
    pub community_grid_dims: (usize, usize),
    /// Side of the square city in meters.
    pub extent: f64,
    pub station_count: usize,
    /// Days of traffic history and weeks of hourly station flows.
    pub traffic_days: u32,
    pub flow_weeks: u32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            building_count: 400,
            road_grid_dims: (6, 6),
            metro_point_count: 120,
            community_grid_dims: (4, 4),
            extent: 2000.0,
            station_count: 6,
            traffic_days: 1,
            flow_weeks: 4,
        }
    }
}

impl SynthSpec {
    fn check(&self) -> Result<()> {
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::InvalidArgument(format!("extent must be > 0, got {}", self.extent)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCity {
    pub scene: CityScene,
    pub observations: Vec<TrafficObservation>,
    pub flows: Vec<FlowSeries>,
    pub monitoring: Vec<MonitoringPoint>,
}

/// Monday 2024-06-03 00:00 UTC; every generated time series starts here.
pub fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 6, 3, 0, 0, 0).unwrap()
}

/// Layer ids of every synthetic scene, in tree pre-order.
pub fn layer_manifest(_spec: &SynthSpec) -> Vec<String> {
    default_layer_tree().ids()
}

pub fn synth_city(spec: &SynthSpec) -> Result<SynthCity> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let e = spec.extent;

    let terrain = make_terrain(e, &mut rng);
    let roads = make_roads(spec, &mut rng);
    let buildings = make_buildings(spec, &terrain, &mut rng);
    let metro = MetroLine {
        id: "M1".into(),
        name: "Metro Line 1".into(),
        path: Polyline::new(vec![
            GeoPoint::xy(0.05 * e, 0.05 * e),
            GeoPoint::xy(0.5 * e, 0.45 * e),
            GeoPoint::xy(0.95 * e, 0.95 * e),
        ])?,
    };
    let monitoring = make_monitoring(spec, &metro, &mut rng);
    let communities = make_communities(spec, &mut rng);
    let observations = make_traffic(spec, &roads, &mut rng);
    let flows = make_flows(spec, &mut rng);

    let scene = CityScene::new(SceneParts {
        terrain,
        buildings,
        roads,
        metro_lines: vec![metro],
        communities,
        layer_root: default_layer_tree(),
        geo_anchor: LatLong::new(22.54, 114.06)?,
    })?;
    Ok(SynthCity { scene, observations, flows, monitoring })
}

fn make_terrain(e: f64, rng: &mut ChaCha8Rng) -> TerrainGrid {
    let n = 65;
    let cell = e / (n - 1) as f64;
    let (p1, p2) = (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU));
    let k = std::f64::consts::TAU / e;
    TerrainGrid::from_fn(GeoPoint::xy(0.0, 0.0), cell, n, n, |x, y| {
        6.0 + 4.0 * (k * x + p1).sin() * (k * y + p2).cos() + 2.0 * (2.0 * k * (x + y)).sin()
    })
    .expect("grid parameters are valid")
}

/// Road centerline coordinates along one axis.
fn road_lines(count: usize, e: f64) -> Vec<f64> {
    (0..count).map(|i| e * (i as f64 + 0.5) / count as f64).collect()
}

fn make_roads(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<RoadSegment> {
    let e = spec.extent;
    let (nx, ny) = spec.road_grid_dims;
    let xs = road_lines(nx, e);
    let ys = road_lines(ny, e);
    let mut roads = Vec::new();
    let mut push = |id: String, a: GeoPoint, b: GeoPoint, rng: &mut ChaCha8Rng| {
        let lanes = rng.gen_range(1..=4);
        roads.push(RoadSegment {
            id,
            path: Polyline::new(vec![a, b]).expect("distinct endpoints"),
            lanes,
            free_flow_speed_kmh: [40.0, 50.0, 60.0, 80.0][lanes as usize - 1],
        });
    };
    let breaks = |cross: &[f64]| {
        let mut v = vec![0.0];
        v.extend_from_slice(cross);
        v.push(e);
        v
    };
    for (i, &x) in xs.iter().enumerate() {
        for (k, w) in breaks(&ys).windows(2).enumerate() {
            push(format!("r-ns-{i:03}-{k:03}"), GeoPoint::xy(x, w[0]), GeoPoint::xy(x, w[1]), rng);
        }
    }
    for (j, &y) in ys.iter().enumerate() {
        for (k, w) in breaks(&xs).windows(2).enumerate() {
            push(format!("r-ew-{j:03}-{k:03}"), GeoPoint::xy(w[0], y), GeoPoint::xy(w[1], y), rng);
        }
    }
    roads
}

fn make_buildings(spec: &SynthSpec, terrain: &TerrainGrid, rng: &mut ChaCha8Rng) -> Vec<Building> {
    let e = spec.extent;
    let (nx, ny) = spec.road_grid_dims;
    let block_edges = |n: usize| {
        let lines = road_lines(n, e);
        let mut v = vec![0.0];
        v.extend(lines);
        v.push(e);
        v
    };
    let (bx, by) = (block_edges(nx), block_edges(ny));
    // Keep clear of road carriageways (up to 4 lanes) and the city edge.
    let margin = 9.0;
    let width = spec.building_count.to_string().len();
    (0..spec.building_count)
        .map(|i| {
            let c = rng.gen_range(0..bx.len() - 1);
            let r = rng.gen_range(0..by.len() - 1);
            let (x0, x1) = (bx[c] + margin, bx[c + 1] - margin);
            let (y0, y1) = (by[r] + margin, by[r + 1] - margin);
            let (w, d) =
                (rng.gen_range(8.0..40.0f64).min(x1 - x0).max(2.0), rng.gen_range(8.0..40.0f64).min(y1 - y0).max(2.0));
            let fx = x0 + rng.gen::<f64>() * (x1 - x0 - w).max(0.0);
            let fy = y0 + rng.gen::<f64>() * (y1 - y0 - d).max(0.0);
            let footprint = Polygon::rect(fx, fy, fx + w, fy + d).expect("positive size");
            let centroid = footprint.centroid();
            let base = terrain.sample(centroid.x, centroid.y);
            let u: f64 = rng.gen();
            let height = 6.0 + 140.0 * u * u * u;
            let rooms = if i % 10 == 0 { make_rooms(fx, fy, w, d, base, height) } else { Vec::new() };
            Building { id: format!("b-{i:0width$}"), footprint, base_elevation: base, height, rooms }
        })
        .collect()
}

/// Two rooms per floor on the lowest three floors, inset 1 m from the walls.
fn make_rooms(x: f64, y: f64, w: f64, d: f64, base: f64, height: f64) -> Vec<Room> {
    let floors = ((height / 3.0).floor() as usize).min(3);
    let mid = x + w / 2.0;
    let mut rooms = Vec::new();
    for f in 0..floors {
        let (z0, z1) = (base + 3.0 * f as f64, base + 3.0 * (f + 1) as f64);
        rooms.push(Room {
            id: format!("f{f}-a"),
            min: GeoPoint::new(x + 1.0, y + 1.0, z0),
            max: GeoPoint::new(mid, y + d - 1.0, z1),
        });
        rooms.push(Room {
            id: format!("f{f}-b"),
            min: GeoPoint::new(mid, y + 1.0, z0),
            max: GeoPoint::new(x + w - 1.0, y + d - 1.0, z1),
        });
    }
    rooms
}

fn make_monitoring(spec: &SynthSpec, line: &MetroLine, rng: &mut ChaCha8Rng) -> Vec<MonitoringPoint> {
    let e = spec.extent;
    let len = line.path.length();
    let width = spec.metro_point_count.to_string().len();
    (0..spec.metro_point_count)
        .map(|i| {
            let s = rng.gen_range(0.0..len);
            let on = line.path.point_at(s);
            let (ahead, behind) = (line.path.point_at((s + 1.0).min(len)), line.path.point_at((s - 1.0).max(0.0)));
            let (dx, dy) = (ahead.x - behind.x, ahead.y - behind.y);
            let l = dx.hypot(dy);
            let off = rng.gen_range(-150.0..150.0);
            let pos = GeoPoint::xy((on.x - dy / l * off).clamp(0.0, e), (on.y + dx / l * off).clamp(0.0, e));
            // Alternate lifting and sinking so both glyph directions occur.
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let rate = sign * rng.gen_range(0.0..1.5);
            let history = (0..12)
                .map(|m| Reading {
                    timestamp: epoch() - TimeDelta::days(30 * (12 - m)),
                    deformation_mm: rate * m as f64 + rng.gen_range(-0.3..0.3),
                })
                .collect();
            MonitoringPoint { id: format!("p-{i:0width$}"), position: pos, history }
        })
        .collect()
}

/// Splits `total` into integer parts proportional to random weights.
fn split_counts(total: u64, parts: usize, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let weights: Vec<f64> = (0..parts).map(|_| rng.gen_range(0.2..1.0)).collect();
    let sum: f64 = weights.iter().sum();
    let mut out: Vec<u64> = weights.iter().map(|w| (total as f64 * w / sum).floor() as u64).collect();
    let assigned: u64 = out.iter().sum();
    out[0] += total - assigned;
    out
}

fn make_communities(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<CommunityRecord> {
    let e = spec.extent;
    let (cx, cy) = spec.community_grid_dims;
    let mut out = Vec::with_capacity(cx * cy);
    for j in 0..cy {
        for i in 0..cx {
            let (x0, x1) = (e * i as f64 / cx as f64, e * (i + 1) as f64 / cx as f64);
            let (y0, y1) = (e * j as f64 / cy as f64, e * (j + 1) as f64 / cy as f64);
            let population = rng.gen_range(500..20_000);
            let bins = |labels: &[&str], rng: &mut ChaCha8Rng| {
                labels.iter().zip(split_counts(population, labels.len(), rng)).map(|(l, c)| Bin::new(*l, c)).collect()
            };
            out.push(CommunityRecord {
                id: format!("c-{j:02}-{i:02}"),
                name: format!("Community {}-{}", j + 1, i + 1),
                boundary: Polygon::rect(x0, y0, x1, y1).expect("positive size"),
                population,
                age_bins: bins(&AGE_LABELS, rng),
                education_bins: bins(&EDUCATION_LABELS, rng),
            });
        }
    }
    out
}

/// Morning and evening rush-hour dip in speed, 0 (free) to 1 (peak).
fn rush(hour: f64) -> f64 {
    let bump = |c: f64| (-((hour - c) / 1.2).powi(2)).exp();
    (bump(8.5) + bump(18.0)).min(1.0)
}

fn make_traffic(spec: &SynthSpec, roads: &[RoadSegment], rng: &mut ChaCha8Rng) -> Vec<TrafficObservation> {
    let steps = spec.traffic_days as i64 * 24 * 4;
    let mut out = Vec::with_capacity(roads.len() * steps as usize);
    for step in 0..steps {
        let t = epoch() + TimeDelta::minutes(15 * step);
        let hour = (step % 96) as f64 / 4.0;
        for r in roads {
            let drop = 0.75 * rush(hour) * rng.gen_range(0.3..1.0);
            let speed = r.free_flow_speed_kmh * (1.0 - drop) * rng.gen_range(0.9..1.05);
            out.push(TrafficObservation {
                segment_id: r.id.clone(),
                timestamp: t,
                mean_speed_kmh: (speed * 10.0).round() / 10.0,
            });
        }
    }
    out
}

fn make_flows(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<FlowSeries> {
    let hours = spec.flow_weeks as usize * 7 * 24;
    (0..spec.station_count)
        .map(|s| {
            let base = rng.gen_range(200.0..2000.0);
            let counts = (0..hours)
                .map(|h| {
                    let hour = (h % 24) as f64;
                    let weekend = (h / 24) % 7 >= 5;
                    let day = if hour < 5.0 { 0.05 } else { 0.3 + rush(hour) };
                    let level = base * day * if weekend { 0.6 } else { 1.0 };
                    (level * rng.gen_range(0.9..1.1)).round()
                })
                .collect();
            FlowSeries {
                station_id: format!("st-{s:02}"),
                start: epoch() - TimeDelta::hours(hours as i64),
                interval_seconds: 3600,
                counts,
            }
        })
        .collect()
}

/// Writes the scene and the four CSV streams into `dir`, creating it if needed.
pub fn write_to_dir(city: &SynthCity, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_scene(&city.scene, dir.join(SCENE_FILE))?;
    let create = |name: &str| {
        let path = dir.join(name);
        File::create(&path).map(BufWriter::new).map_err(|e| Error::io(path, e))
    };
    write_traffic(create(TRAFFIC_FILE)?, &city.observations)?;
    write_flows(create(FLOWS_FILE)?, &city.flows)?;
    write_monitoring(create(MONITORING_FILE)?, &city.monitoring)?;
    write_communities(create(COMMUNITIES_FILE)?, city.scene.communities())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::scene_file::scene_to_string;

    fn small() -> SynthSpec {
        SynthSpec { building_count: 50, metro_point_count: 20, ..SynthSpec::default() }
    }

    #[test]
    fn deterministic() {
        let a = synth_city(&small()).unwrap();
        let b = synth_city(&small()).unwrap();
        assert_eq!(scene_to_string(&a.scene), scene_to_string(&b.scene));
        assert_eq!(a.observations, b.observations);
        let c = synth_city(&SynthSpec { seed: 8, ..small() }).unwrap();
        assert_ne!(scene_to_string(&a.scene), scene_to_string(&c.scene));
    }

    #[test]
    fn empty_city_is_valid() {
        let spec = SynthSpec {
            building_count: 0,
            road_grid_dims: (0, 0),
            metro_point_count: 0,
            community_grid_dims: (0, 0),
            station_count: 0,
            ..SynthSpec::default()
        };
        let city = synth_city(&spec).unwrap();
        assert!(city.scene.buildings().is_empty());
        assert!(city.observations.is_empty());
    }

    #[test]
    fn mixed_deformation_signs() {
        let city = synth_city(&small()).unwrap();
        let latest: Vec<f64> = city.monitoring.iter().map(|p| p.latest().unwrap().deformation_mm).collect();
        assert!(latest.iter().any(|&d| d > 0.0));
        assert!(latest.iter().any(|&d| d < 0.0));
    }
}
