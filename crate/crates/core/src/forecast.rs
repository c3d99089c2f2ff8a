//! Station passenger-flow forecasting with a seasonal-naive / moving-average blend.

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

pub const METHOD_TAG: &str = "seasonal-naive-ma-blend";
pub const DEFAULT_ALPHA: f64 = 0.3;
const WEEK_SECONDS: i64 = 7 * 24 * 3600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSeries {
    pub station_id: String,
    pub start: DateTime<Utc>,
    pub interval_seconds: i64,
    pub counts: Vec<f64>,
}

impl FlowSeries {
    pub fn violations(&self) -> Vec<Violation> {
        let object = format!("station:{}", self.station_id);
        let mut out = Vec::new();
        if self.interval_seconds <= 0 {
            out.push(Violation::new(&object, "interval > 0", format!("interval_seconds = {}", self.interval_seconds)));
        }
        if let Some((i, c)) = self.counts.iter().enumerate().find(|(_, c)| !(c.is_finite() && **c >= 0.0)) {
            out.push(Violation::new(&object, "counts finite and >= 0", format!("count[{i}] = {c}")));
        }
        out
    }

    pub fn interval(&self) -> TimeDelta {
        TimeDelta::seconds(self.interval_seconds)
    }

    /// Timestamp of step `i` (0 is `start`).
    pub fn time_at(&self, i: usize) -> DateTime<Utc> {
        self.start + self.interval() * i as i32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastParams {
    /// Seasonal period in steps.
    pub period: usize,
    pub alpha: f64,
    /// Moving-average window in steps.
    pub k: usize,
}

impl ForecastParams {
    /// One week of steps for the series' interval, alpha 0.3, k equal to the period.
    pub fn for_series(series: &FlowSeries) -> Self {
        let period = (WEEK_SECONDS / series.interval_seconds.max(1)).max(1) as usize;
        Self { period, alpha: DEFAULT_ALPHA, k: period }
    }

    fn check(&self) -> Result<()> {
        if self.period == 0 {
            return Err(Error::InvalidArgument("period must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!("alpha must be in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub station_id: String,
    pub horizon: usize,
    /// Time of the first forecast step.
    pub start: DateTime<Utc>,
    pub interval_seconds: i64,
    pub predicted: Vec<f64>,
    pub method_tag: String,
}

/// `y[n-1+h] = (1-alpha) * y[n-1+h-P] + alpha * mean(last k observed)` for
/// `h = 1..=horizon`, reusing earlier forecasts when the lag lands past the
/// data. Series shorter than `P` use the moving average alone.
pub fn forecast(series: &FlowSeries, horizon: usize, params: &ForecastParams) -> Result<Forecast> {
    params.check()?;
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    let predicted = blend(&series.counts, horizon, params)?;
    Ok(Forecast {
        station_id: series.station_id.clone(),
        horizon,
        start: series.time_at(series.counts.len()),
        interval_seconds: series.interval_seconds,
        predicted,
        method_tag: METHOD_TAG.to_string(),
    })
}

fn blend(observed: &[f64], horizon: usize, p: &ForecastParams) -> Result<Vec<f64>> {
    let n = observed.len();
    if n == 0 {
        return Err(Error::InvalidArgument("series is empty".into()));
    }
    let alpha = if n < p.period { 1.0 } else { p.alpha };
    let tail = &observed[n - p.k.min(n)..];
    let mean = if tail.iter().all(|v| *v == tail[0]) { tail[0] } else { tail.iter().sum::<f64>() / tail.len() as f64 };

    let mut y = observed.to_vec();
    y.reserve(horizon);
    for _ in 0..horizon {
        let v = if alpha == 1.0 {
            mean
        } else {
            let seasonal = y[y.len() - p.period];
            if seasonal == mean || alpha == 0.0 {
                seasonal
            } else {
                (1.0 - alpha) * seasonal + alpha * mean
            }
        };
        y.push(v.max(0.0));
    }
    Ok(y.split_off(n))
}

/// Trains on all but the last `holdout` steps, forecasts them, and returns
/// the mean absolute error.
pub fn backtest(series: &FlowSeries, params: &ForecastParams, holdout: usize) -> Result<f64> {
    params.check()?;
    let n = series.counts.len();
    if holdout == 0 || holdout >= n {
        return Err(Error::InvalidArgument(format!("holdout must be in [1, {}), got {holdout}", n)));
    }
    let (train, test) = series.counts.split_at(n - holdout);
    let predicted = blend(train, holdout, params)?;
    Ok(predicted.iter().zip(test).map(|(p, a)| (p - a).abs()).sum::<f64>() / holdout as f64)
}
