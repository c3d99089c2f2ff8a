//! CSV streams: traffic observations, station flows, monitoring readings and
//! community attributes.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::community::{Bin, CommunityRecord};
use crate::deformation::{MonitoringPoint, Reading};
use crate::error::{Error, Result, ValidationReport};
use crate::forecast::FlowSeries;
use crate::geometry::GeoPoint;
use crate::traffic::TrafficObservation;

pub const TRAFFIC_HEADER: [&str; 3] = ["segment_id", "timestamp_iso8601", "mean_speed_kmh"];
pub const FLOW_HEADER_PREFIX: [&str; 3] = ["station_id", "start_iso8601", "interval_seconds"];
pub const MONITORING_HEADER: [&str; 5] = ["point_id", "x", "y", "timestamp_iso8601", "deformation_mm"];
pub const COMMUNITY_HEADER: [&str; 10] = [
    "id",
    "name",
    "population",
    "age_0_14",
    "age_15_64",
    "age_65_plus",
    "edu_primary",
    "edu_secondary",
    "edu_tertiary",
    "edu_none",
];
pub const AGE_LABELS: [&str; 3] = ["0-14", "15-64", "65+"];
pub const EDUCATION_LABELS: [&str; 4] = ["primary", "secondary", "tertiary", "none"];

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    let column = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.field().map_or(0, |f| f as usize + 1),
        _ => 0,
    };
    Error::Syntax { line, column, message: e.to_string() }
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str], exact: bool) -> Result<()> {
    let header = reader.headers().map_err(csv_error)?;
    let fields: Vec<&str> = header.iter().map(str::trim).collect();
    let ok = if exact {
        fields == expected
    } else {
        fields.len() >= expected.len() && fields[..expected.len()] == *expected
    };
    if !ok {
        return Err(Error::Syntax {
            line: 1,
            column: 1,
            message: format!("expected header `{}`, found `{}`", expected.join(","), fields.join(",")),
        });
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct TrafficRow {
    segment_id: String,
    timestamp_iso8601: DateTime<Utc>,
    mean_speed_kmh: f64,
}

pub fn read_traffic(input: impl Read) -> Result<Vec<TrafficObservation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    check_header(&mut rdr, &TRAFFIC_HEADER, true)?;
    rdr.deserialize::<TrafficRow>()
        .map(|row| {
            let row = row.map_err(csv_error)?;
            Ok(TrafficObservation {
                segment_id: row.segment_id,
                timestamp: row.timestamp_iso8601,
                mean_speed_kmh: row.mean_speed_kmh,
            })
        })
        .collect()
}

pub fn write_traffic(out: impl Write, obs: &[TrafficObservation]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for o in obs {
        w.serialize(TrafficRow {
            segment_id: o.segment_id.clone(),
            timestamp_iso8601: o.timestamp,
            mean_speed_kmh: o.mean_speed_kmh,
        })
        .map_err(csv_error)?;
    }
    flush(w)
}

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(|e| Error::io("<csv output>", e))
}

/// One row per station: id, start, interval, then the counts.
pub fn read_flows(input: impl Read) -> Result<Vec<FlowSeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(input);
    check_header(&mut rdr, &FLOW_HEADER_PREFIX, false)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| -> Result<&str> {
            rec.get(i).ok_or_else(|| Error::Syntax { line, column: i + 1, message: "missing field".into() })
        };
        let bad = |i: usize, what: &str| Error::Syntax { line, column: i + 1, message: format!("invalid {what}") };
        let start = DateTime::parse_from_rfc3339(field(1)?).map_err(|_| bad(1, "timestamp"))?.with_timezone(&Utc);
        let interval_seconds = field(2)?.parse().map_err(|_| bad(2, "interval"))?;
        let counts =
            (3..rec.len()).map(|i| rec[i].parse::<f64>().map_err(|_| bad(i, "count"))).collect::<Result<Vec<_>>>()?;
        let series = FlowSeries { station_id: field(0)?.to_string(), start, interval_seconds, counts };
        ValidationReport { violations: series.violations() }.into_result()?;
        out.push(series);
    }
    Ok(out)
}

pub fn write_flows(out: impl Write, series: &[FlowSeries]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let longest = series.iter().map(|s| s.counts.len()).max().unwrap_or(0);
    let mut header: Vec<String> = FLOW_HEADER_PREFIX.iter().map(|s| s.to_string()).collect();
    header.extend((1..=longest).map(|i| format!("count_{i}")));
    w.write_record(&header).map_err(csv_error)?;
    for s in series {
        let mut rec = vec![
            s.station_id.clone(),
            s.start.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true),
            s.interval_seconds.to_string(),
        ];
        rec.extend(s.counts.iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_error)?;
    }
    flush(w)
}

#[derive(Debug, Serialize, Deserialize)]
struct MonitoringRow {
    point_id: String,
    x: f64,
    y: f64,
    timestamp_iso8601: DateTime<Utc>,
    deformation_mm: f64,
}

/// Groups readings by point; histories come back sorted by time and points by id.
pub fn read_monitoring(input: impl Read) -> Result<Vec<MonitoringPoint>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    check_header(&mut rdr, &MONITORING_HEADER, true)?;
    let mut points: BTreeMap<String, MonitoringPoint> = BTreeMap::new();
    for row in rdr.deserialize::<MonitoringRow>() {
        let row = row.map_err(csv_error)?;
        let pos = GeoPoint::xy(row.x, row.y);
        let p = points.entry(row.point_id.clone()).or_insert_with(|| MonitoringPoint {
            id: row.point_id.clone(),
            position: pos,
            history: Vec::new(),
        });
        if !p.position.same_xy(&pos) {
            return Err(Error::InconsistentRecord {
                id: row.point_id,
                detail: "position differs between readings".into(),
            });
        }
        p.history.push(Reading { timestamp: row.timestamp_iso8601, deformation_mm: row.deformation_mm });
    }
    let mut report = ValidationReport::default();
    let out: Vec<MonitoringPoint> = points
        .into_values()
        .map(|mut p| {
            p.history.sort_by_key(|r| r.timestamp);
            report.violations.extend(p.violations());
            p
        })
        .collect();
    report.into_result()?;
    Ok(out)
}

pub fn write_monitoring(out: impl Write, points: &[MonitoringPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        for r in &p.history {
            w.serialize(MonitoringRow {
                point_id: p.id.clone(),
                x: p.position.x,
                y: p.position.y,
                timestamp_iso8601: r.timestamp,
                deformation_mm: r.deformation_mm,
            })
            .map_err(csv_error)?;
        }
    }
    flush(w)
}

/// Attribute row of the community table; boundaries live in the scene file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunityRow {
    pub id: String,
    pub name: String,
    pub population: u64,
    pub age_0_14: u64,
    pub age_15_64: u64,
    pub age_65_plus: u64,
    pub edu_primary: u64,
    pub edu_secondary: u64,
    pub edu_tertiary: u64,
    pub edu_none: u64,
}

impl CommunityRow {
    pub fn from_record(r: &CommunityRecord) -> Self {
        let count = |bins: &[Bin], label: &str| bins.iter().find(|b| b.label == label).map_or(0, |b| b.count);
        Self {
            id: r.id.clone(),
            name: r.name.clone(),
            population: r.population,
            age_0_14: count(&r.age_bins, AGE_LABELS[0]),
            age_15_64: count(&r.age_bins, AGE_LABELS[1]),
            age_65_plus: count(&r.age_bins, AGE_LABELS[2]),
            edu_primary: count(&r.education_bins, EDUCATION_LABELS[0]),
            edu_secondary: count(&r.education_bins, EDUCATION_LABELS[1]),
            edu_tertiary: count(&r.education_bins, EDUCATION_LABELS[2]),
            edu_none: count(&r.education_bins, EDUCATION_LABELS[3]),
        }
    }

    /// Overwrites name, population and bins of `r`.
    pub fn apply_to(&self, r: &mut CommunityRecord) {
        r.name = self.name.clone();
        r.population = self.population;
        r.age_bins = AGE_LABELS
            .iter()
            .zip([self.age_0_14, self.age_15_64, self.age_65_plus])
            .map(|(l, c)| Bin::new(*l, c))
            .collect();
        r.education_bins = EDUCATION_LABELS
            .iter()
            .zip([self.edu_primary, self.edu_secondary, self.edu_tertiary, self.edu_none])
            .map(|(l, c)| Bin::new(*l, c))
            .collect();
    }
}

pub fn read_communities(input: impl Read) -> Result<Vec<CommunityRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    check_header(&mut rdr, &COMMUNITY_HEADER, true)?;
    rdr.deserialize().map(|r| r.map_err(csv_error)).collect()
}

pub fn write_communities(out: impl Write, records: &[CommunityRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CommunityRow::from_record(r)).map_err(csv_error)?;
    }
    flush(w)
}
