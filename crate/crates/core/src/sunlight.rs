//! Solar position, shadow tests and daily sunshine hours.

use chrono::{DateTime, Datelike, NaiveDate, TimeDelta, Timelike, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GeoPoint, LatLong};
use crate::occlusion::{Blocker, Occluders};
use crate::scene::CityScene;

pub const MIN_YEAR: i32 = 1950;
pub const MAX_YEAR: i32 = 2050;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SunPosition {
    /// Degrees clockwise from north, in `[0, 360)`.
    pub azimuth: f64,
    /// Degrees above the horizon, in `[-90, 90]`. No refraction correction.
    pub elevation: f64,
}

/// Solar position by the NOAA solar-calculator series (Julian centuries
/// from J2000, low-order Meeus terms). Geometric, no refraction.
pub fn sun_position(loc: LatLong, t: DateTime<Utc>) -> Result<SunPosition> {
    loc.check()?;
    if !(MIN_YEAR..=MAX_YEAR).contains(&t.year()) {
        return Err(Error::InvalidArgument(format!("timestamp {t} outside supported years {MIN_YEAR}-{MAX_YEAR}")));
    }
    let unix_days = t.timestamp() as f64 / 86_400.0 + t.timestamp_subsec_nanos() as f64 * 1e-9 / 86_400.0;
    let jc = (unix_days + 2_440_587.5 - 2_451_545.0) / 36_525.0;

    let l0 = (280.46646 + jc * (36000.76983 + jc * 0.0003032)).rem_euclid(360.0);
    let m = 357.52911 + jc * (35999.05029 - 0.0001537 * jc);
    let e = 0.016708634 - jc * (0.000042037 + 0.0000001267 * jc);
    let mr = m.to_radians();
    let center = mr.sin() * (1.914602 - jc * (0.004817 + 0.000014 * jc))
        + (2.0 * mr).sin() * (0.019993 - 0.000101 * jc)
        + (3.0 * mr).sin() * 0.000289;
    let omega = (125.04 - 1934.136 * jc).to_radians();
    let apparent_long = (l0 + center - 0.00569 - 0.00478 * omega.sin()).to_radians();
    let mean_obliq = 23.0 + (26.0 + (21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))) / 60.0) / 60.0;
    let obliq = (mean_obliq + 0.00256 * omega.cos()).to_radians();
    let decl = (obliq.sin() * apparent_long.sin()).asin();

    let y = (obliq / 2.0).tan().powi(2);
    let l0r = l0.to_radians();
    let eqtime = 4.0
        * (y * (2.0 * l0r).sin() - 2.0 * e * mr.sin() + 4.0 * e * y * mr.sin() * (2.0 * l0r).cos()
            - 0.5 * y * y * (4.0 * l0r).sin()
            - 1.25 * e * e * (2.0 * mr).sin())
        .to_degrees();

    let minutes =
        t.hour() as f64 * 60.0 + t.minute() as f64 + (t.second() as f64 + t.nanosecond() as f64 * 1e-9) / 60.0;
    let true_solar_minutes = (minutes + eqtime + 4.0 * loc.lon).rem_euclid(1440.0);
    let ha = (true_solar_minutes / 4.0 - 180.0).to_radians();
    let lat = loc.lat.to_radians();

    let cos_zenith = (lat.sin() * decl.sin() + lat.cos() * decl.cos() * ha.cos()).clamp(-1.0, 1.0);
    let elevation = 90.0 - cos_zenith.acos().to_degrees();
    let az = ha.sin().atan2(ha.cos() * lat.sin() - decl.tan() * lat.cos()).to_degrees() + 180.0;
    let azimuth = az.rem_euclid(360.0);
    Ok(SunPosition { azimuth: if azimuth >= 360.0 { 0.0 } else { azimuth }, elevation })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum ShadowState {
    Lit,
    Shadowed { blocker: Blocker },
    Night,
}

impl ShadowState {
    pub fn is_lit(&self) -> bool {
        matches!(self, ShadowState::Lit)
    }
}

/// Single shadow test. Builds a building index; use [`Occluders`] directly
/// for repeated tests on one scene.
pub fn shadow_test(scene: &CityScene, pt: &GeoPoint, sun: SunPosition) -> Result<ShadowState> {
    Occluders::new(scene).shadow_test(pt, sun)
}

impl Occluders<'_> {
    pub fn shadow_test(&self, pt: &GeoPoint, sun: SunPosition) -> Result<ShadowState> {
        if !self.scene().terrain().contains(pt) || !pt.is_finite() {
            return Err(Error::OutOfBounds(format!("({}, {}) outside terrain extent", pt.x, pt.y)));
        }
        if sun.elevation <= 0.0 {
            return Ok(ShadowState::Night);
        }
        Ok(match self.sun_ray_blocker(pt, sun.azimuth, sun.elevation) {
            Some(blocker) => ShadowState::Shadowed { blocker },
            None => ShadowState::Lit,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LitInterval {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SunlightReport {
    pub point: GeoPoint,
    pub date: NaiveDate,
    pub step_minutes: u32,
    /// Offset of the sampled day from UTC, `round(lon / 15)` hours.
    pub utc_offset_hours: i32,
    pub lit_intervals: Vec<LitInterval>,
    pub sunshine_hours: f64,
}

/// Civil-day start for `date` at the nominal time zone of `lon`.
pub fn local_midnight_utc(date: NaiveDate, lon: f64) -> (DateTime<Utc>, i32) {
    let offset = (lon / 15.0).round() as i32;
    let midnight = date.and_hms_opt(0, 0, 0).expect("valid time").and_utc();
    (midnight - TimeDelta::hours(offset as i64), offset)
}

/// Samples the day every `step` minutes; a sample that is lit counts for
/// one full step.
pub fn sunshine_hours(
    scene: &CityScene,
    pt: &GeoPoint,
    loc: LatLong,
    date: NaiveDate,
    step: u32,
) -> Result<SunlightReport> {
    Occluders::new(scene).sunshine_hours(pt, loc, date, step)
}

impl Occluders<'_> {
    pub fn sunshine_hours(&self, pt: &GeoPoint, loc: LatLong, date: NaiveDate, step: u32) -> Result<SunlightReport> {
        if !(1..=60).contains(&step) {
            return Err(Error::InvalidArgument(format!("step must be 1..=60 minutes, got {step}")));
        }
        let (start, offset) = local_midnight_utc(date, loc.lon);
        let n = (24 * 60_u32).div_ceil(step);
        let step_td = TimeDelta::minutes(step as i64);
        let times: Vec<DateTime<Utc>> = (0..n).map(|i| start + step_td * i as i32).collect();
        let lit: Vec<bool> = times
            .par_iter()
            .map(|&t| Ok(self.shadow_test(pt, sun_position(loc, t)?)?.is_lit()))
            .collect::<Result<_>>()?;

        let mut intervals: Vec<LitInterval> = Vec::new();
        let mut open: Option<DateTime<Utc>> = None;
        for (i, &l) in lit.iter().enumerate() {
            match (l, open) {
                (true, None) => open = Some(times[i]),
                (false, Some(s)) => {
                    intervals.push(LitInterval { start: s, end: times[i] });
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(s) = open {
            intervals.push(LitInterval { start: s, end: times[times.len() - 1] + step_td });
        }
        let count = lit.iter().filter(|&&l| l).count();
        Ok(SunlightReport {
            point: *pt,
            date,
            step_minutes: step,
            utc_offset_hours: offset,
            lit_intervals: intervals,
            sunshine_hours: count as f64 * step as f64 / 60.0,
        })
    }
}
