//! Uniformly sampled time series, plant records and the unit transforms
//! shared by every other module.

use chrono::{DateTime, Datelike, TimeDelta, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sampling step (quarter-hourly), in seconds.
pub const QUARTER_HOUR_SECS: i64 = 15 * 60;
/// Samples per day at the default step.
pub const SAMPLES_PER_DAY: usize = 96;

/// A contiguous, timestamp-indexed scalar series. Sample `k` sits at
/// `start + k * step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    start: DateTime<Utc>,
    step_secs: i64,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(start: DateTime<Utc>, step: TimeDelta, values: Vec<f64>) -> Result<Self> {
        let step_secs = step.num_seconds();
        if step_secs <= 0 || step.subsec_nanos() != 0 {
            return Err(Error::InvalidSeries(format!(
                "step must be a positive whole number of seconds, got {step}"
            )));
        }
        Ok(Self { start, step_secs, values })
    }

    /// Quarter-hourly series.
    pub fn quarter_hourly(start: DateTime<Utc>, values: Vec<f64>) -> Self {
        Self { start, step_secs: QUARTER_HOUR_SECS, values }
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn step(&self) -> TimeDelta {
        TimeDelta::seconds(self.step_secs)
    }

    pub fn step_secs(&self) -> i64 {
        self.step_secs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, k: usize) -> DateTime<Utc> {
        self.start + TimeDelta::seconds(self.step_secs * k as i64)
    }

    /// One past the last sample's timestamp.
    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp(self.len())
    }

    pub fn timestamps(&self) -> impl Iterator<Item = DateTime<Utc>> + '_ {
        (0..self.len()).map(|k| self.timestamp(k))
    }

    /// Samples per day at this step; errors if a day is not a whole multiple.
    pub fn samples_per_day(&self) -> Result<usize> {
        if 86_400 % self.step_secs != 0 {
            return Err(Error::InvalidSeries(format!(
                "step of {} s does not divide a day",
                self.step_secs
            )));
        }
        Ok((86_400 / self.step_secs) as usize)
    }

    /// Same start and step, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        Self { start: self.start, step_secs: self.step_secs, values }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    /// Sub-series over sample indices `[from, to)`.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if from > to || to > self.len() {
            return Err(Error::InvalidSeries(format!(
                "slice [{from}, {to}) out of range for length {}",
                self.len()
            )));
        }
        Ok(Self {
            start: self.timestamp(from),
            step_secs: self.step_secs,
            values: self.values[from..to].to_vec(),
        })
    }

    /// Index of the sample at `ts`, clamped into `[0, len]`. Errors when `ts`
    /// is not on the sampling grid.
    pub fn index_of(&self, ts: DateTime<Utc>) -> Result<usize> {
        let offset = (ts - self.start).num_seconds();
        if offset % self.step_secs != 0 {
            return Err(Error::InvalidSeries(format!("{ts} is not on the sampling grid")));
        }
        Ok((offset / self.step_secs).clamp(0, self.len() as i64) as usize)
    }

    /// Sub-series covering `[from, to)` in time (clamped to the series).
    pub fn slice_time(&self, from: DateTime<Utc>, to: DateTime<Utc>) -> Result<Self> {
        let a = self.index_of(from)?;
        let b = self.index_of(to)?.max(a);
        self.slice(a, b)
    }

    /// Errors unless both series share start, step and length.
    pub fn check_aligned(&self, other: &TimeSeries) -> Result<()> {
        if self.step_secs != other.step_secs {
            return Err(Error::InvalidSeries(format!(
                "step mismatch: {} s vs {} s",
                self.step_secs, other.step_secs
            )));
        }
        if self.start != other.start {
            return Err(Error::InvalidSeries(format!(
                "start mismatch: {} vs {}",
                self.start, other.start
            )));
        }
        if self.len() != other.len() {
            return Err(Error::InvalidSeries(format!(
                "length mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }
}

/// Convert per-interval energy (kWh) to mean power (kW) over each interval.
pub fn energy_to_mean_power(energy: &TimeSeries) -> Result<TimeSeries> {
    if energy.step_secs <= 0 {
        return Err(Error::InvalidSeries("non-positive step".into()));
    }
    if let Some(v) = energy.values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidSeries(format!("energy must be finite and >= 0, got {v}")));
    }
    let hours = energy.step_secs as f64 / 3600.0;
    Ok(energy.map(|e| e / hours))
}

fn check_peak(p_n: f64) -> Result<()> {
    if !(p_n > 0.0 && p_n.is_finite()) {
        return Err(Error::InvalidPlant(format!("peak power rating must be > 0, got {p_n}")));
    }
    Ok(())
}

/// Divide by the peak power rating. No clipping: values above 1 are kept.
pub fn scale_by_peak(power: &TimeSeries, p_n: f64) -> Result<TimeSeries> {
    check_peak(p_n)?;
    Ok(power.map(|y| y / p_n))
}

/// Inverse of [`scale_by_peak`].
pub fn rescale_by_peak(scaled: &TimeSeries, p_n_new: f64) -> Result<TimeSeries> {
    check_peak(p_n_new)?;
    Ok(scaled.map(|y| y * p_n_new))
}

/// Calendar fields feeding the cyclic encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CalendarFields {
    /// 1..=12
    pub month: u32,
    /// 0..=1439
    pub minute_of_day: u32,
}

pub fn calendar_fields(ts: DateTime<Utc>) -> CalendarFields {
    CalendarFields { month: ts.month(), minute_of_day: 60 * ts.hour() + ts.minute() }
}

/// Panel orientation. Azimuth is measured clockwise from north (180 = south).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mounting {
    pub inclination: f64,
    pub azimuth: f64,
}

impl Mounting {
    pub fn new(inclination: f64, azimuth: f64) -> Result<Self> {
        let m = Self { inclination, azimuth };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=90.0).contains(&self.inclination) {
            return Err(Error::InvalidPlant(format!(
                "inclination must be in [0, 90], got {}",
                self.inclination
            )));
        }
        if !(0.0..360.0).contains(&self.azimuth) {
            return Err(Error::InvalidPlant(format!(
                "azimuth must be in [0, 360), got {}",
                self.azimuth
            )));
        }
        Ok(())
    }
}

/// Day-ahead weather forecast: global horizontal radiation (W/m²) and air
/// temperature (°C).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherForecast {
    pub g_hat: TimeSeries,
    pub t_hat: TimeSeries,
}

impl WeatherForecast {
    pub fn new(g_hat: TimeSeries, t_hat: TimeSeries) -> Result<Self> {
        g_hat.check_aligned(&t_hat)?;
        Ok(Self { g_hat, t_hat })
    }

    pub fn len(&self) -> usize {
        self.g_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g_hat.is_empty()
    }

    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        Ok(Self { g_hat: self.g_hat.slice(from, to)?, t_hat: self.t_hat.slice(from, to)? })
    }

    pub fn slice_time(&self, from: DateTime<Utc>, to: DateTime<Utc>) -> Result<Self> {
        Ok(Self {
            g_hat: self.g_hat.slice_time(from, to)?,
            t_hat: self.t_hat.slice_time(from, to)?,
        })
    }
}

/// Measurements and metadata of one plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantRecord {
    pub id: String,
    pub p_n: f64,
    pub mounting: Option<Mounting>,
    pub power: TimeSeries,
    pub weather: WeatherForecast,
}

impl PlantRecord {
    pub fn new(
        id: impl Into<String>,
        p_n: f64,
        mounting: Option<Mounting>,
        power: TimeSeries,
        weather: WeatherForecast,
    ) -> Result<Self> {
        let rec = Self { id: id.into(), p_n, mounting, power, weather };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        check_peak(self.p_n)?;
        if let Some(m) = &self.mounting {
            m.validate()?;
        }
        self.power.check_aligned(&self.weather.g_hat)?;
        self.power.check_aligned(&self.weather.t_hat)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    /// Record restricted to `[from, to)` in time.
    pub fn slice_time(&self, from: DateTime<Utc>, to: DateTime<Utc>) -> Result<Self> {
        Ok(Self {
            id: self.id.clone(),
            p_n: self.p_n,
            mounting: self.mounting,
            power: self.power.slice_time(from, to)?,
            weather: self.weather.slice_time(from, to)?,
        })
    }

    /// Record restricted to sample indices `[from, to)`.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        Ok(Self {
            id: self.id.clone(),
            p_n: self.p_n,
            mounting: self.mounting,
            power: self.power.slice(from, to)?,
            weather: self.weather.slice(from, to)?,
        })
    }
}
