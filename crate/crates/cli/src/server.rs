//! JSON HTTP API over a loaded scene and its data streams.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};
use urbanlens_core::layers::effective_visibility;
use urbanlens_core::tiles::{DEFAULT_DETAIL_ZOOM, MAX_ZOOM};
use urbanlens_core::traffic::{
    condition_snapshot, current_conditions, ClassThresholds, ConditionGeometry, RenderMode, SegmentCondition,
};
use urbanlens_core::{
    condition_geometry, extrude_building, set_layer_visibility, Building, Dimension, Error, LayerNode, Mesh, SceneTile,
    TileKey, TileService, TrafficObservation, TrafficStore, Violation,
};

use crate::analysis::{self, Datasets, ForecastQuery};

/// Snapshot window used when `/traffic/at` is called without `window`.
pub const DEFAULT_WINDOW_SECONDS: i64 = 900;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerConfig {
    pub detail_zoom: u8,
    pub thresholds: ClassThresholds,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { detail_zoom: DEFAULT_DETAIL_ZOOM, thresholds: ClassThresholds::default() }
    }
}

/// Shared service state. The scene and indices are immutable; only the
/// traffic store and the layer tree change, each behind its own lock.
pub struct AppState {
    pub data: Datasets,
    pub tiles: TileService,
    pub layers: RwLock<LayerNode>,
    pub traffic: RwLock<TrafficStore>,
    pub config: ServerConfig,
}

impl AppState {
    pub fn new(data: Datasets, observations: Vec<TrafficObservation>, config: ServerConfig) -> Result<Self, Error> {
        let mut store = TrafficStore::for_scene(&data.scene);
        store.ingest_all(observations)?;
        Ok(Self {
            tiles: TileService::new(&data.scene, config.detail_zoom),
            layers: RwLock::new(data.scene.layer_root().clone()),
            traffic: RwLock::new(store),
            data,
            config,
        })
    }
}

/// Error body: a stable code, a human message and the HTTP status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub code: String,
    pub message: String,
    pub status: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation_id: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

pub struct ApiError(StatusCode, Problem);

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        let problem = Problem {
            code: code.to_string(),
            message: message.into(),
            status: status.as_u16(),
            correlation_id: None,
            violations: Vec::new(),
        };
        Self(status, problem)
    }
}

fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::NotFound { .. } => StatusCode::NOT_FOUND,
        Error::Conflict { .. } => StatusCode::CONFLICT,
        Error::InvalidGeometry(_)
        | Error::InvalidArgument(_)
        | Error::OutOfBounds(_)
        | Error::Syntax { .. }
        | Error::Validation(_) => StatusCode::BAD_REQUEST,
        Error::InsufficientData(_) | Error::EmptyPopulation(_) | Error::InconsistentRecord { .. } => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = status_for(&e);
        let mut err = ApiError::new(status, e.code(), e.to_string());
        if let Error::Validation(report) = e {
            err.1.violations = report.violations;
        }
        if status.is_server_error() {
            let id = uuid::Uuid::new_v4().to_string();
            tracing::error!(correlation_id = %id, error = %err.1.message, "request failed");
            err.1.message = "internal error".into();
            err.1.correlation_id = Some(id);
        }
        err
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(r.status(), "malformed-request", r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid-argument", r.body_text())
    }
}

impl From<PathRejection> for ApiError {
    fn from(r: PathRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid-argument", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/layers", get(get_layers))
        .route("/layers/{id}", patch(patch_layer))
        .route("/tiles/{z}/{x}/{y}", get(get_tile))
        .route("/traffic/current", get(traffic_current))
        .route("/traffic/at", get(traffic_at))
        .route("/traffic/observations", post(post_observations))
        .route("/stations/{id}/forecast", get(station_forecast))
        .route("/analysis/sunlight", post(analysis_sunlight))
        .route("/analysis/deformation", post(analysis_deformation))
        .route("/analysis/los", post(analysis_los))
        .route("/analysis/population", post(analysis_population))
        .route("/communities/{id}/composition", get(community_composition))
        .route("/buildings/{id}", get(get_building))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not-found", "no such route") })
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayersResponse {
    pub root: LayerNode,
    /// Own flag AND every ancestor's flag, per layer id.
    pub effective: BTreeMap<String, bool>,
}

fn layers_response(root: &LayerNode) -> LayersResponse {
    LayersResponse { root: root.clone(), effective: effective_visibility(root) }
}

async fn get_layers(State(s): Shared) -> ApiResult<LayersResponse> {
    let root = s.layers.read().expect("layer lock poisoned");
    Ok(Json(layers_response(&root)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisibilityPatch {
    pub visible: bool,
}

async fn patch_layer(
    State(s): Shared,
    id: Result<Path<String>, PathRejection>,
    body: Result<Json<VisibilityPatch>, JsonRejection>,
) -> ApiResult<LayersResponse> {
    let Path(id) = id?;
    let Json(body) = body?;
    let mut root = s.layers.write().expect("layer lock poisoned");
    *root = set_layer_visibility(&root, &id, body.visible)?;
    Ok(Json(layers_response(&root)))
}

async fn get_tile(State(s): Shared, key: Result<Path<(u32, u32, u32)>, PathRejection>) -> ApiResult<SceneTile> {
    let Path((z, x, y)) = key?;
    let zoom = u8::try_from(z)
        .ok()
        .filter(|z| *z <= MAX_ZOOM)
        .ok_or_else(|| Error::NotFound { kind: "tile", id: format!("{z}/{x}/{y}") })?;
    Ok(Json(s.tiles.get_tile(&s.data.scene, TileKey::new(zoom, x, y))?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionItem {
    #[serde(flatten)]
    pub condition: SegmentCondition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<ConditionGeometry>,
}

fn with_geometry(
    s: &AppState,
    conds: Vec<SegmentCondition>,
    mode: Option<RenderMode>,
) -> ApiResult<Vec<ConditionItem>> {
    let items = conds
        .into_iter()
        .map(|c| {
            let geometry = match mode {
                Some(m) => Some(condition_geometry(s.data.scene.road(&c.segment_id)?, c.class, m)?),
                None => None,
            };
            Ok(ConditionItem { condition: c, geometry })
        })
        .collect::<Result<_, Error>>()?;
    Ok(Json(items))
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurrentQuery {
    mode: Option<RenderMode>,
}

async fn traffic_current(
    State(s): Shared,
    q: Result<Query<CurrentQuery>, QueryRejection>,
) -> ApiResult<Vec<ConditionItem>> {
    let Query(q) = q?;
    let conds = {
        let store = s.traffic.read().expect("traffic lock poisoned");
        current_conditions(&store, &s.data.scene, &s.config.thresholds)
    };
    with_geometry(&s, conds, q.mode)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtQuery {
    t: DateTime<Utc>,
    /// Seconds.
    window: Option<i64>,
    mode: Option<RenderMode>,
}

async fn traffic_at(State(s): Shared, q: Result<Query<AtQuery>, QueryRejection>) -> ApiResult<Vec<ConditionItem>> {
    let Query(q) = q?;
    let window = TimeDelta::try_seconds(q.window.unwrap_or(DEFAULT_WINDOW_SECONDS))
        .ok_or_else(|| Error::InvalidArgument("window out of range".into()))?;
    let conds = {
        let store = s.traffic.read().expect("traffic lock poisoned");
        condition_snapshot(&store, &s.data.scene, q.t, window, &s.config.thresholds)?
    };
    with_geometry(&s, conds, q.mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub accepted: usize,
    pub cache_updated: usize,
}

/// Accepts a JSON array of observations. The batch is checked up front and
/// applied under one write lock, so it lands entirely or not at all.
async fn post_observations(
    State(s): Shared,
    body: Result<Json<Vec<TrafficObservation>>, JsonRejection>,
) -> ApiResult<IngestSummary> {
    let Json(batch) = body?;
    let mut store = s.traffic.write().expect("traffic lock poisoned");
    for obs in &batch {
        store.check(obs)?;
    }
    let accepted = batch.len();
    let mut cache_updated = 0;
    for obs in batch {
        cache_updated += usize::from(store.ingest(obs)?.cache_updated);
    }
    Ok(Json(IngestSummary { accepted, cache_updated }))
}

async fn station_forecast(
    State(s): Shared,
    id: Result<Path<String>, PathRejection>,
    q: Result<Query<ForecastQuery>, QueryRejection>,
) -> ApiResult<urbanlens_core::Forecast> {
    let (Path(id), Query(q)) = (id?, q?);
    Ok(Json(analysis::station_forecast(&s.data.flows, &id, &q)?))
}

async fn analysis_sunlight(
    State(s): Shared,
    body: Result<Json<analysis::SunlightRequest>, JsonRejection>,
) -> ApiResult<urbanlens_core::SunlightReport> {
    let Json(req) = body?;
    Ok(Json(analysis::sunlight(&s.data, &req)?))
}

async fn analysis_deformation(
    State(s): Shared,
    body: Result<Json<analysis::DeformationRequest>, JsonRejection>,
) -> ApiResult<urbanlens_core::deformation::DeformationReport> {
    let Json(req) = body?;
    Ok(Json(analysis::deformation(&s.data, &req)?))
}

async fn analysis_los(
    State(s): Shared,
    body: Result<Json<analysis::LosRequest>, JsonRejection>,
) -> ApiResult<urbanlens_core::LineOfSight> {
    let Json(req) = body?;
    Ok(Json(analysis::los(&s.data, &req)?))
}

async fn analysis_population(
    State(s): Shared,
    body: Result<Json<analysis::PopulationRequest>, JsonRejection>,
) -> ApiResult<analysis::PopulationEstimate> {
    let Json(req) = body?;
    Ok(Json(analysis::population(&s.data, &req)))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompositionQuery {
    dimension: Dimension,
}

async fn community_composition(
    State(s): Shared,
    id: Result<Path<String>, PathRejection>,
    q: Result<Query<CompositionQuery>, QueryRejection>,
) -> ApiResult<analysis::CompositionResponse> {
    let (Path(id), Query(q)) = (id?, q?);
    Ok(Json(analysis::community_composition(&s.data, &id, q.dimension)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingResponse {
    #[serde(flatten)]
    pub building: Building,
    pub mesh: Mesh,
}

async fn get_building(State(s): Shared, id: Result<Path<String>, PathRejection>) -> ApiResult<BuildingResponse> {
    let Path(id) = id?;
    let b = s.data.scene.building(&id)?;
    Ok(Json(BuildingResponse { building: b.clone(), mesh: extrude_building(b)? }))
}
