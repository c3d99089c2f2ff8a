//! Urban digital-twin engine: city scene model, spatial index and the
//! terrain, sunlight, traffic, flow, deformation and community analyses.

pub mod community;
pub mod deformation;
pub mod edit;
pub mod error;
pub mod forecast;
pub mod geometry;
pub mod index;
pub mod ingest;
pub mod layers;
pub mod occlusion;
pub mod scene;
pub mod sunlight;
pub mod terrain;
pub mod tiles;
pub mod traffic;

pub use community::{
    composition, population_density, population_in_area, Bin, CommunityRecord, Dimension, PopulationSampler,
};
pub use deformation::{make_glyphs, select_points, trend, CylinderGlyph, MetroLine, MonitoringPoint, Reading, Trend};
pub use edit::{apply_edit, Edit, EditSession};
pub use error::{Error, Result, ValidationReport, Violation};
pub use forecast::{backtest, forecast, FlowSeries, Forecast, ForecastParams};
pub use geometry::{
    point_in_polygon, point_polyline_distance, polygon_area, Aabb, GeoPoint, LatLong, Mesh, Polygon, Polyline,
};
pub use index::SpatialIndex;
pub use layers::{effective_visibility, set_layer_visibility, LayerKind, LayerNode};
pub use occlusion::{Blocker, Occluders};
pub use scene::{extrude_building, Building, CityScene, Room, SceneParts};
pub use sunlight::{shadow_test, sun_position, sunshine_hours, ShadowState, SunPosition, SunlightReport};
pub use terrain::{line_of_sight, LineOfSight, TerrainGrid};
pub use tiles::{SceneTile, TileKey, TileService};
pub use traffic::{
    classify, condition_geometry, condition_snapshot, CongestionClass, RoadSegment, TrafficObservation, TrafficStore,
};
