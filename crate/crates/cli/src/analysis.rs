//! Request and response shapes shared by the HTTP API and the `analyze`
//! subcommands. Each function is a thin call into `urbanlens_core`.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use urbanlens_core::community::{Share, SAMPLES_PER_COMMUNITY};
use urbanlens_core::deformation::{analyze_line, point_index, DeformationReport, DEFAULT_SCALE_M_PER_MM};
use urbanlens_core::ingest::{load_scene, read_flows, read_monitoring, read_traffic};
use urbanlens_core::{
    composition, forecast, line_of_sight, population_density, sunshine_hours, CityScene, Dimension, Error, FlowSeries,
    Forecast, ForecastParams, GeoPoint, LineOfSight, MonitoringPoint, Polygon, PopulationSampler, Result, SpatialIndex,
    SunlightReport, TrafficObservation,
};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io { path: path.to_path_buf(), source: e }
}

pub fn load_traffic(path: &Path) -> Result<Vec<TrafficObservation>> {
    read_traffic(File::open(path).map_err(io_err(path))?)
}

pub fn load_flows(path: &Path) -> Result<BTreeMap<String, FlowSeries>> {
    let series = read_flows(File::open(path).map_err(io_err(path))?)?;
    Ok(series.into_iter().map(|s| (s.station_id.clone(), s)).collect())
}

pub fn load_monitoring(path: &Path) -> Result<Vec<MonitoringPoint>> {
    read_monitoring(File::open(path).map_err(io_err(path))?)
}

/// Everything the analyses read: the scene plus the tabular streams.
pub struct Datasets {
    pub scene: CityScene,
    pub flows: BTreeMap<String, FlowSeries>,
    pub monitoring: Vec<MonitoringPoint>,
    pub monitoring_index: SpatialIndex<usize>,
    pub population: PopulationSampler,
}

impl Datasets {
    pub fn new(scene: CityScene, flows: BTreeMap<String, FlowSeries>, monitoring: Vec<MonitoringPoint>) -> Self {
        let monitoring_index = point_index(&monitoring);
        let population = PopulationSampler::new(scene.communities());
        Self { scene, flows, monitoring, monitoring_index, population }
    }

    pub fn load(scene: &Path, flows: Option<&Path>, monitoring: Option<&Path>) -> Result<Self> {
        let scene = load_scene(scene)?;
        let flows = flows.map(load_flows).transpose()?.unwrap_or_default();
        let monitoring = monitoring.map(load_monitoring).transpose()?.unwrap_or_default();
        Ok(Self::new(scene, flows, monitoring))
    }
}

/// `[x, y]` sits on the terrain surface; `[x, y, z]` is taken as given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Position(pub Vec<f64>);

impl Position {
    pub fn resolve(&self, scene: &CityScene) -> Result<GeoPoint> {
        match self.0[..] {
            [x, y] => {
                let p = GeoPoint::xy(x, y);
                Ok(p.with_z(scene.terrain().elevation_at(&p)?))
            }
            [x, y, z] => Ok(GeoPoint::new(x, y, z)),
            _ => Err(Error::InvalidArgument(format!("position needs 2 or 3 coordinates, got {}", self.0.len()))),
        }
    }
}

fn default_step() -> u32 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SunlightRequest {
    pub point: Position,
    pub date: NaiveDate,
    /// Minutes between samples.
    #[serde(default = "default_step")]
    pub step: u32,
}

pub fn sunlight(data: &Datasets, req: &SunlightRequest) -> Result<SunlightReport> {
    let pt = req.point.resolve(&data.scene)?;
    sunshine_hours(&data.scene, &pt, data.scene.geo_anchor(), req.date, req.step)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformationRequest {
    pub line_id: String,
    pub buffer_m: f64,
    /// Meters of glyph per millimeter of deformation.
    #[serde(default)]
    pub scale: Option<f64>,
}

pub fn deformation(data: &Datasets, req: &DeformationRequest) -> Result<DeformationReport> {
    let line = data.scene.metro_line(&req.line_id)?;
    analyze_line(
        line,
        &data.monitoring,
        &data.monitoring_index,
        req.buffer_m,
        req.scale.unwrap_or(DEFAULT_SCALE_M_PER_MM),
        data.scene.terrain(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LosRequest {
    pub a: Position,
    pub b: Position,
}

pub fn los(data: &Datasets, req: &LosRequest) -> Result<LineOfSight> {
    line_of_sight(&data.scene, &req.a.resolve(&data.scene)?, &req.b.resolve(&data.scene)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationRequest {
    pub polygon: Polygon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationEstimate {
    pub estimate: f64,
    pub samples_per_community: usize,
}

pub fn population(data: &Datasets, req: &PopulationRequest) -> PopulationEstimate {
    PopulationEstimate {
        estimate: data.population.population_in_area(&req.polygon),
        samples_per_community: SAMPLES_PER_COMMUNITY,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionResponse {
    pub community_id: String,
    pub dimension: Dimension,
    pub population: u64,
    pub shares: Vec<Share>,
}

pub fn community_composition(data: &Datasets, id: &str, dimension: Dimension) -> Result<CompositionResponse> {
    let r = data.scene.community(id)?;
    Ok(CompositionResponse {
        community_id: r.id.clone(),
        dimension,
        population: r.population,
        shares: composition(r, dimension)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub community_id: String,
    pub population: u64,
    pub area_m2: f64,
    pub density_per_km2: f64,
}

pub fn densities(scene: &CityScene) -> Result<Vec<DensityRow>> {
    scene
        .communities()
        .iter()
        .map(|c| {
            Ok(DensityRow {
                community_id: c.id.clone(),
                population: c.population,
                area_m2: c.boundary.area(),
                density_per_km2: population_density(c)?,
            })
        })
        .collect()
}

/// Forecast options; anything left out takes the series-derived default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastQuery {
    pub horizon: Option<usize>,
    pub period: Option<usize>,
    pub alpha: Option<f64>,
    pub k: Option<usize>,
}

pub const DEFAULT_HORIZON: usize = 24;

pub fn station_forecast(flows: &BTreeMap<String, FlowSeries>, station_id: &str, q: &ForecastQuery) -> Result<Forecast> {
    let series =
        flows.get(station_id).ok_or_else(|| Error::NotFound { kind: "station", id: station_id.to_string() })?;
    let defaults = ForecastParams::for_series(series);
    let period = q.period.unwrap_or(defaults.period);
    let params = ForecastParams {
        period,
        alpha: q.alpha.unwrap_or(defaults.alpha),
        // The moving-average window follows an overridden period unless set itself.
        k: q.k.unwrap_or(period),
    };
    forecast(series, q.horizon.unwrap_or(DEFAULT_HORIZON), &params)
}
