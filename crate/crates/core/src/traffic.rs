//! Road condition store, congestion classification and line/plane geometry.

use std::collections::BTreeMap;
use std::str::FromStr;

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::geometry::{GeoPoint, Polygon, Polyline};
use crate::scene::CityScene;

/// Design lane width used when buffering a segment into a plane.
pub const LANE_WIDTH_M: f64 = 3.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment {
    pub id: String,
    pub path: Polyline,
    pub lanes: u32,
    pub free_flow_speed_kmh: f64,
}

impl RoadSegment {
    pub fn violations(&self) -> Vec<Violation> {
        let object = format!("road:{}", self.id);
        let mut out = Vec::new();
        if self.lanes < 1 {
            out.push(Violation::new(&object, "lanes >= 1", format!("lanes = {}", self.lanes)));
        }
        if !(self.free_flow_speed_kmh > 0.0 && self.free_flow_speed_kmh.is_finite()) {
            out.push(Violation::new(
                &object,
                "free_flow_speed > 0",
                format!("free_flow_speed_kmh = {}", self.free_flow_speed_kmh),
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficObservation {
    pub segment_id: String,
    pub timestamp: DateTime<Utc>,
    pub mean_speed_kmh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CongestionClass {
    Free,
    Slow,
    Congested,
    Unknown,
}

/// Speed-ratio cut points: `ratio >= free` is free flow, `ratio >= slow` is slow,
/// anything lower is congested.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholds {
    pub free: f64,
    pub slow: f64,
}

impl Default for ClassThresholds {
    fn default() -> Self {
        Self { free: 0.7, slow: 0.4 }
    }
}

impl ClassThresholds {
    pub fn new(free: f64, slow: f64) -> Result<Self> {
        if !(slow > 0.0 && slow <= free && free.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "thresholds must satisfy 0 < slow <= free, got free={free} slow={slow}"
            )));
        }
        Ok(Self { free, slow })
    }
}

impl FromStr for ClassThresholds {
    type Err = Error;

    /// Parses `"free,slow"`, e.g. `"0.7,0.4"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("expected `free,slow` thresholds, got `{s}`"));
        let (a, b) = s.split_once(',').ok_or_else(bad)?;
        let free = a.trim().parse().map_err(|_| bad())?;
        let slow = b.trim().parse().map_err(|_| bad())?;
        Self::new(free, slow)
    }
}

pub fn classify(seg: &RoadSegment, window_mean_speed_kmh: f64) -> CongestionClass {
    classify_with(seg, window_mean_speed_kmh, &ClassThresholds::default())
}

pub fn classify_with(seg: &RoadSegment, speed_kmh: f64, t: &ClassThresholds) -> CongestionClass {
    let r = speed_kmh / seg.free_flow_speed_kmh;
    if r >= t.free {
        CongestionClass::Free
    } else if r >= t.slow {
        CongestionClass::Slow
    } else {
        CongestionClass::Congested
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedObservation {
    pub timestamp: DateTime<Utc>,
    pub mean_speed_kmh: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct SegmentLog {
    /// Sorted by timestamp; equal timestamps keep arrival order.
    log: Vec<LoggedObservation>,
    latest: Option<LoggedObservation>,
}

/// Observation log per road segment with a latest-value cache.
///
/// Late (older) observations are merged into the log in timestamp order but
/// never displace the cached latest value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrafficStore {
    segments: BTreeMap<String, SegmentLog>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IngestOutcome {
    pub cache_updated: bool,
}

impl TrafficStore {
    pub fn new<I, S>(segment_ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { segments: segment_ids.into_iter().map(|id| (id.into(), SegmentLog::default())).collect() }
    }

    pub fn for_scene(scene: &CityScene) -> Self {
        Self::new(scene.roads().iter().map(|r| r.id.clone()))
    }

    /// Would [`TrafficStore::ingest`] accept `obs`?
    pub fn check(&self, obs: &TrafficObservation) -> Result<()> {
        if !(obs.mean_speed_kmh >= 0.0 && obs.mean_speed_kmh.is_finite()) {
            return Err(Error::InvalidArgument(format!("speed must be finite and >= 0, got {}", obs.mean_speed_kmh)));
        }
        if !self.segments.contains_key(&obs.segment_id) {
            return Err(Error::not_found("road segment", &obs.segment_id));
        }
        Ok(())
    }

    pub fn ingest(&mut self, obs: TrafficObservation) -> Result<IngestOutcome> {
        self.check(&obs)?;
        let seg =
            self.segments.get_mut(&obs.segment_id).ok_or_else(|| Error::not_found("road segment", &obs.segment_id))?;
        let entry = LoggedObservation { timestamp: obs.timestamp, mean_speed_kmh: obs.mean_speed_kmh };
        let at = seg.log.partition_point(|o| o.timestamp <= entry.timestamp);
        seg.log.insert(at, entry.clone());
        let newest = seg.latest.as_ref().is_none_or(|l| entry.timestamp >= l.timestamp);
        if newest {
            seg.latest = Some(entry);
        }
        Ok(IngestOutcome { cache_updated: newest })
    }

    pub fn ingest_all(&mut self, obs: impl IntoIterator<Item = TrafficObservation>) -> Result<()> {
        for o in obs {
            self.ingest(o)?;
        }
        Ok(())
    }

    pub fn latest(&self, segment_id: &str) -> Option<&LoggedObservation> {
        self.segments.get(segment_id)?.latest.as_ref()
    }

    pub fn log(&self, segment_id: &str) -> Option<&[LoggedObservation]> {
        self.segments.get(segment_id).map(|s| s.log.as_slice())
    }

    pub fn segment_ids(&self) -> impl Iterator<Item = &str> {
        self.segments.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.segments.values().map(|s| s.log.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mean speed over observations with timestamps in `(at - window, at]`.
    pub fn window_mean(&self, segment_id: &str, at: DateTime<Utc>, window: TimeDelta) -> Option<(f64, usize)> {
        let log = &self.segments.get(segment_id)?.log;
        let start = at - window;
        let lo = log.partition_point(|o| o.timestamp <= start);
        let hi = log.partition_point(|o| o.timestamp <= at);
        if hi <= lo {
            return None;
        }
        let sum: f64 = log[lo..hi].iter().map(|o| o.mean_speed_kmh).sum();
        Some((sum / (hi - lo) as f64, hi - lo))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentCondition {
    pub segment_id: String,
    pub class: CongestionClass,
    pub mean_speed_kmh: Option<f64>,
    pub samples: usize,
}

/// Classifies every road of the scene from its window-mean speed.
pub fn condition_snapshot(
    store: &TrafficStore,
    scene: &CityScene,
    at: DateTime<Utc>,
    window: TimeDelta,
    thresholds: &ClassThresholds,
) -> Result<Vec<SegmentCondition>> {
    if window <= TimeDelta::zero() {
        return Err(Error::InvalidArgument("window must be > 0".into()));
    }
    Ok(scene
        .roads()
        .iter()
        .map(|road| match store.window_mean(&road.id, at, window) {
            Some((mean, n)) => SegmentCondition {
                segment_id: road.id.clone(),
                class: classify_with(road, mean, thresholds),
                mean_speed_kmh: Some(mean),
                samples: n,
            },
            None => SegmentCondition {
                segment_id: road.id.clone(),
                class: CongestionClass::Unknown,
                mean_speed_kmh: None,
                samples: 0,
            },
        })
        .collect())
}

/// Classifies every road from its most recent observation.
pub fn current_conditions(
    store: &TrafficStore,
    scene: &CityScene,
    thresholds: &ClassThresholds,
) -> Vec<SegmentCondition> {
    scene
        .roads()
        .iter()
        .map(|road| match store.latest(&road.id) {
            Some(l) => SegmentCondition {
                segment_id: road.id.clone(),
                class: classify_with(road, l.mean_speed_kmh, thresholds),
                mean_speed_kmh: Some(l.mean_speed_kmh),
                samples: 1,
            },
            None => SegmentCondition {
                segment_id: road.id.clone(),
                class: CongestionClass::Unknown,
                mean_speed_kmh: None,
                samples: 0,
            },
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    Line,
    Plane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ConditionGeometry {
    Line { segment_id: String, class: CongestionClass, geometry: Polyline },
    Plane { segment_id: String, class: CongestionClass, geometry: Polygon },
}

/// Line mode passes the path through; plane mode buffers it to
/// `lanes * 3.5 m` wide with flat caps and mitered joins.
pub fn condition_geometry(seg: &RoadSegment, class: CongestionClass, mode: RenderMode) -> Result<ConditionGeometry> {
    Ok(match mode {
        RenderMode::Line => ConditionGeometry::Line { segment_id: seg.id.clone(), class, geometry: seg.path.clone() },
        RenderMode::Plane => ConditionGeometry::Plane {
            segment_id: seg.id.clone(),
            class,
            geometry: buffer_path(&seg.path, seg.lanes as f64 * LANE_WIDTH_M)?,
        },
    })
}

// Beyond this miter length (in half-widths) the join is beveled instead.
const MITER_LIMIT: f64 = 4.0;

/// Flat-capped, miter-joined buffer of total width `width`.
pub fn buffer_path(path: &Polyline, width: f64) -> Result<Polygon> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::InvalidArgument(format!("buffer width must be > 0, got {width}")));
    }
    let v = path.vertices();
    let hw = 0.5 * width;
    let dirs: Vec<(f64, f64)> = v
        .windows(2)
        .map(|w| {
            let (dx, dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
            let l = dx.hypot(dy);
            (dx / l, dy / l)
        })
        .collect();
    let left_normal = |d: (f64, f64)| (-d.1, d.0);

    // side = +1 for the left offset, -1 for the right.
    let offset = |side: f64| -> Vec<GeoPoint> {
        let mut out = Vec::with_capacity(v.len() + 2);
        let n0 = left_normal(dirs[0]);
        out.push(GeoPoint::xy(v[0].x + side * hw * n0.0, v[0].y + side * hw * n0.1));
        for i in 1..v.len() - 1 {
            let (a, b) = (left_normal(dirs[i - 1]), left_normal(dirs[i]));
            let (mx, my) = (a.0 + b.0, a.1 + b.1);
            let ml = mx.hypot(my);
            let cos_half = if ml > 0.0 { (mx * a.0 + my * a.1) / ml } else { 0.0 };
            if cos_half > 1.0 / MITER_LIMIT {
                let scale = side * hw / (cos_half * ml);
                out.push(GeoPoint::xy(v[i].x + mx * scale, v[i].y + my * scale));
            } else {
                out.push(GeoPoint::xy(v[i].x + side * hw * a.0, v[i].y + side * hw * a.1));
                out.push(GeoPoint::xy(v[i].x + side * hw * b.0, v[i].y + side * hw * b.1));
            }
        }
        let nl = left_normal(*dirs.last().expect("at least one segment"));
        let last = v.last().expect("at least two vertices");
        out.push(GeoPoint::xy(last.x + side * hw * nl.0, last.y + side * hw * nl.1));
        out
    };

    let mut ring = offset(-1.0);
    let mut left = offset(1.0);
    left.reverse();
    ring.extend(left);
    ring.dedup_by(|a, b| a.same_xy(b));
    Polygon::new_normalized(ring)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn seg(points: &[(f64, f64)], lanes: u32) -> RoadSegment {
        RoadSegment {
            id: "r".into(),
            path: Polyline::new(points.iter().map(|&(x, y)| GeoPoint::xy(x, y)).collect()).unwrap(),
            lanes,
            free_flow_speed_kmh: 60.0,
        }
    }

    #[test]
    fn classes() {
        let s = seg(&[(0.0, 0.0), (1.0, 0.0)], 1);
        assert_eq!(classify(&s, 60.0), CongestionClass::Free);
        assert_eq!(classify(&s, 42.0), CongestionClass::Free);
        assert_eq!(classify(&s, 30.0), CongestionClass::Slow);
        assert_eq!(classify(&s, 24.0), CongestionClass::Slow);
        assert_eq!(classify(&s, 6.0), CongestionClass::Congested);
        assert_eq!(classify(&s, 0.0), CongestionClass::Congested);
    }

    #[test]
    fn threshold_parsing() {
        let t: ClassThresholds = "0.8, 0.5".parse().unwrap();
        assert_eq!(t, ClassThresholds { free: 0.8, slow: 0.5 });
        assert!("0.3,0.5".parse::<ClassThresholds>().is_err());
        assert!("nope".parse::<ClassThresholds>().is_err());
    }

    #[test]
    fn backfill_keeps_cache() {
        let mut store = TrafficStore::new(["r"]);
        let t0 = Utc.with_ymd_and_hms(2024, 6, 3, 8, 0, 0).unwrap();
        let obs =
            |t: DateTime<Utc>, v: f64| TrafficObservation { segment_id: "r".into(), timestamp: t, mean_speed_kmh: v };
        assert!(store.ingest(obs(t0, 40.0)).unwrap().cache_updated);
        assert_eq!(store.latest("r").unwrap().mean_speed_kmh, 40.0);
        let older = t0 - TimeDelta::minutes(5);
        assert!(!store.ingest(obs(older, 10.0)).unwrap().cache_updated);
        assert_eq!(store.latest("r").unwrap().mean_speed_kmh, 40.0);
        assert_eq!(store.log("r").unwrap()[0].timestamp, older);
        assert!(matches!(
            store.ingest(TrafficObservation { segment_id: "zz".into(), timestamp: t0, mean_speed_kmh: 1.0 }),
            Err(Error::NotFound { .. })
        ));
        assert!(store.ingest(obs(t0, -1.0)).is_err());
    }

    #[test]
    fn straight_plane_area() {
        let s = seg(&[(0.0, 0.0), (100.0, 0.0)], 2);
        let ConditionGeometry::Plane { geometry, .. } =
            condition_geometry(&s, CongestionClass::Slow, RenderMode::Plane).unwrap()
        else {
            panic!("expected plane");
        };
        assert!((geometry.area() - 700.0).abs() < 7.0);
        let ConditionGeometry::Line { geometry, .. } =
            condition_geometry(&s, CongestionClass::Slow, RenderMode::Line).unwrap()
        else {
            panic!("expected line");
        };
        assert_eq!(geometry, s.path);
    }

    #[test]
    fn mitered_corner_area_is_exact() {
        let s = seg(&[(0.0, 0.0), (100.0, 0.0), (100.0, 50.0)], 2);
        let poly = buffer_path(&s.path, 7.0).unwrap();
        assert!((poly.area() - 150.0 * 7.0).abs() < 1e-9);
    }
}
