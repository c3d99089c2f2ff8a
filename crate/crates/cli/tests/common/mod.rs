#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use serde_json::Value;
use tower::ServiceExt;
use urbanlens_cli::analysis::Datasets;
use urbanlens_cli::server::{router, AppState, ServerConfig};
use urbanlens_core::ingest::{synth_city, SynthCity, SynthSpec};

pub fn small_city(seed: u64) -> SynthCity {
    synth_city(&SynthSpec {
        seed,
        building_count: 150,
        metro_point_count: 60,
        extent: 1_200.0,
        station_count: 3,
        flow_weeks: 3,
        ..SynthSpec::default()
    })
    .unwrap()
}

pub fn datasets(city: &SynthCity) -> Datasets {
    let flows: BTreeMap<_, _> = city.flows.iter().map(|s| (s.station_id.clone(), s.clone())).collect();
    Datasets::new(city.scene.clone(), flows, city.monitoring.clone())
}

pub fn app(city: &SynthCity, config: ServerConfig) -> Router {
    let state = AppState::new(datasets(city), city.observations.clone(), config).unwrap();
    router(Arc::new(state))
}

/// One request through the router; returns the status and the JSON body.
pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(serde_json::to_vec(&v).unwrap())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let json = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, json)
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None).await
}

pub async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(body)).await
}

/// A request, and the value the direct library call produces for the same inputs.
pub struct Case {
    pub method: Method,
    pub uri: String,
    pub body: Option<Value>,
    pub expected: Value,
}

/// Scripted corpus over every analysis endpoint. Expected bodies come
/// straight from `urbanlens_core`, never through the server's helpers.
pub fn analysis_corpus(city: &SynthCity, seed: u64) -> Vec<Case> {
    use chrono::{NaiveDate, TimeDelta};
    use rand::{Rng, SeedableRng};
    use serde_json::json;
    use urbanlens_core::deformation::{analyze_line, point_index, DEFAULT_SCALE_M_PER_MM};
    use urbanlens_core::traffic::{condition_snapshot, ClassThresholds};
    use urbanlens_core::{
        composition, extrude_building, forecast, line_of_sight, sunshine_hours, Dimension, ForecastParams, GeoPoint,
        Polygon, PopulationSampler, TrafficStore,
    };

    let scene = &city.scene;
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let ext = scene.terrain().extent();
    let pick = |r: &mut rand_chacha::ChaCha8Rng| {
        GeoPoint::xy(
            r.gen_range(ext.min_x + 0.05 * ext.width()..ext.max_x - 0.05 * ext.width()),
            r.gen_range(ext.min_y + 0.05 * ext.height()..ext.max_y - 0.05 * ext.height()),
        )
    };
    let on_ground = |p: GeoPoint, above: f64| p.with_z(scene.terrain().elevation_at(&p).unwrap() + above);
    let mut cases = Vec::new();

    for day in [NaiveDate::from_ymd_opt(2024, 6, 21).unwrap(), NaiveDate::from_ymd_opt(2024, 12, 21).unwrap()] {
        let p = pick(&mut r);
        let step = r.gen_range(5..=30);
        let want = sunshine_hours(scene, &on_ground(p, 0.0), scene.geo_anchor(), day, step).unwrap();
        cases.push(Case {
            method: Method::POST,
            uri: "/analysis/sunlight".into(),
            body: Some(json!({"point": [p.x, p.y], "date": day, "step": step})),
            expected: value(&want),
        });
    }

    let monitoring_index = point_index(&city.monitoring);
    for line in scene.metro_lines() {
        for (buffer, scale) in [(50.0, None), (100.0, None), (75.0, Some(2.5))] {
            let want = analyze_line(
                line,
                &city.monitoring,
                &monitoring_index,
                buffer,
                scale.unwrap_or(DEFAULT_SCALE_M_PER_MM),
                scene.terrain(),
            )
            .unwrap();
            let body = match scale {
                Some(s) => json!({"line_id": line.id, "buffer_m": buffer, "scale": s}),
                None => json!({"line_id": line.id, "buffer_m": buffer}),
            };
            cases.push(Case {
                method: Method::POST,
                uri: "/analysis/deformation".into(),
                body: Some(body),
                expected: value(&want),
            });
        }
    }

    for _ in 0..6 {
        let (a, b) = (pick(&mut r), pick(&mut r));
        let (za, zb) = (r.gen_range(1.5..40.0), r.gen_range(1.5..40.0));
        let (a3, b3) = (on_ground(a, za), on_ground(b, zb));
        cases.push(Case {
            method: Method::POST,
            uri: "/analysis/los".into(),
            body: Some(json!({"a": [a3.x, a3.y, a3.z], "b": [b3.x, b3.y, b3.z]})),
            expected: value(&line_of_sight(scene, &a3, &b3).unwrap()),
        });
    }
    let (a, b) = (pick(&mut r), pick(&mut r));
    cases.push(Case {
        method: Method::POST,
        uri: "/analysis/los".into(),
        body: Some(json!({"a": [a.x, a.y], "b": [b.x, b.y]})),
        expected: value(&line_of_sight(scene, &on_ground(a, 0.0), &on_ground(b, 0.0)).unwrap()),
    });

    let sampler = PopulationSampler::new(scene.communities());
    for _ in 0..4 {
        let (p, w, h) = (pick(&mut r), r.gen_range(50.0..600.0), r.gen_range(50.0..600.0));
        let poly = Polygon::rect(p.x - w / 2.0, p.y - h / 2.0, p.x + w / 2.0, p.y + h / 2.0).unwrap();
        let est = sampler.population_in_area(&poly);
        cases.push(Case {
            method: Method::POST,
            uri: "/analysis/population".into(),
            body: Some(json!({ "polygon": poly })),
            expected: json!({"estimate": est, "samples_per_community": urbanlens_core::community::SAMPLES_PER_COMMUNITY}),
        });
    }

    for c in scene.communities().iter().take(3) {
        for (dim, name) in [(Dimension::Age, "age"), (Dimension::Education, "education")] {
            cases.push(Case {
                method: Method::GET,
                uri: format!("/communities/{}/composition?dimension={name}", c.id),
                body: None,
                expected: json!({
                    "community_id": c.id,
                    "dimension": name,
                    "population": c.population,
                    "shares": value(&composition(c, dim).unwrap()),
                }),
            });
        }
    }

    for s in &city.flows {
        let params = ForecastParams::for_series(s);
        cases.push(Case {
            method: Method::GET,
            uri: format!("/stations/{}/forecast", s.station_id),
            body: None,
            expected: value(&forecast(s, 24, &params).unwrap()),
        });
        let custom = ForecastParams { period: 24, alpha: 0.5, k: 24 };
        cases.push(Case {
            method: Method::GET,
            uri: format!("/stations/{}/forecast?horizon=48&period=24&alpha=0.5", s.station_id),
            body: None,
            expected: value(&forecast(s, 48, &custom).unwrap()),
        });
    }

    for b in scene.buildings().iter().step_by(37) {
        let mut want = value(b);
        want["mesh"] = value(&extrude_building(b).unwrap());
        if b.rooms.is_empty() {
            want.as_object_mut().unwrap().remove("rooms");
        }
        cases.push(Case { method: Method::GET, uri: format!("/buildings/{}", b.id), body: None, expected: want });
    }

    let mut store = TrafficStore::for_scene(scene);
    store.ingest_all(city.observations.clone()).unwrap();
    let first = city.observations.iter().map(|o| o.timestamp).min().unwrap();
    for _ in 0..4 {
        let at = first + TimeDelta::minutes(r.gen_range(0..26 * 60));
        let window = r.gen_range(60..7_200);
        let conds =
            condition_snapshot(&store, scene, at, TimeDelta::seconds(window), &ClassThresholds::default()).unwrap();
        cases.push(Case {
            method: Method::GET,
            uri: format!("/traffic/at?t={}&window={window}", at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
            body: None,
            expected: value(&conds),
        });
    }
    cases
}

pub fn value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap()
}
