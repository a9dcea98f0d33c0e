//! CSV ingestion and export of plant series.
//!
//! Plant files carry `timestamp,power_kw,ghat_wm2,that_c`. The split layout
//! (`timestamp,power_kw` plus `timestamp,ghat_wm2,that_c`) is read by
//! [`read_power_csv`] and [`read_weather_csv`]. Timestamps are ISO-8601 UTC and
//! must be contiguous; gapped files are rejected.

use std::path::Path;

use chrono::{DateTime, TimeDelta, Utc};

use crate::error::{Error, Result};
use crate::timeseries::{Mounting, PlantRecord, TimeSeries, WeatherForecast, QUARTER_HOUR_SECS};

fn parse_ts(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::InvalidSeries(format!("bad timestamp {s:?}: {e}")))
}

pub fn format_ts(ts: DateTime<Utc>) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn parse_f64(s: &str, column: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|e| Error::InvalidData(format!("column {column}: cannot parse {s:?}: {e}")))?;
    if !v.is_finite() {
        return Err(Error::InvalidData(format!("column {column}: non-finite value {s:?}")));
    }
    Ok(v)
}

/// Reads the named columns, returning the shared index (start, step) and the
/// column values.
fn read_columns(path: &Path, wanted: &[&str]) -> Result<(DateTime<Utc>, i64, Vec<Vec<f64>>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let ts_col = headers
        .iter()
        .position(|h| h.trim() == "timestamp")
        .ok_or_else(|| Error::InvalidSeries(format!("{}: missing timestamp column", path.display())))?;
    let cols: Vec<usize> = wanted
        .iter()
        .map(|w| {
            headers.iter().position(|h| h.trim() == *w).ok_or_else(|| {
                Error::InvalidSeries(format!("{}: missing column {w}", path.display()))
            })
        })
        .collect::<Result<_>>()?;

    let mut out = vec![Vec::new(); wanted.len()];
    let mut start = None;
    let mut prev: Option<DateTime<Utc>> = None;
    let mut step: Option<i64> = None;
    for row in reader.records() {
        let row = row?;
        let ts = parse_ts(&row[ts_col])?;
        match (prev, step) {
            (None, _) => start = Some(ts),
            (Some(p), None) => {
                let d = (ts - p).num_seconds();
                if d <= 0 {
                    return Err(Error::InvalidSeries(format!(
                        "{}: timestamps not increasing at {ts}",
                        path.display()
                    )));
                }
                step = Some(d);
            }
            (Some(p), Some(s)) => {
                if (ts - p).num_seconds() != s {
                    return Err(Error::InvalidSeries(format!(
                        "{}: gap or irregular step at {ts}",
                        path.display()
                    )));
                }
            }
        }
        prev = Some(ts);
        for (slot, &c) in out.iter_mut().zip(&cols) {
            slot.push(parse_f64(&row[c], &headers[c])?);
        }
    }
    let start =
        start.ok_or_else(|| Error::InvalidSeries(format!("{}: no data rows", path.display())))?;
    Ok((start, step.unwrap_or(QUARTER_HOUR_SECS), out))
}

fn series(start: DateTime<Utc>, step: i64, values: Vec<f64>) -> Result<TimeSeries> {
    TimeSeries::new(start, TimeDelta::seconds(step), values)
}

pub fn read_power_csv(path: &Path) -> Result<TimeSeries> {
    let (start, step, mut cols) = read_columns(path, &["power_kw"])?;
    series(start, step, cols.remove(0))
}

pub fn read_weather_csv(path: &Path) -> Result<WeatherForecast> {
    let (start, step, mut cols) = read_columns(path, &["ghat_wm2", "that_c"])?;
    let t = cols.remove(1);
    let g = cols.remove(0);
    WeatherForecast::new(series(start, step, g)?, series(start, step, t)?)
}

/// Read a combined plant file.
pub fn read_plant_csv(
    path: &Path,
    id: &str,
    p_n: f64,
    mounting: Option<Mounting>,
) -> Result<PlantRecord> {
    let (start, step, mut cols) = read_columns(path, &["power_kw", "ghat_wm2", "that_c"])?;
    let t = cols.remove(2);
    let g = cols.remove(1);
    let p = cols.remove(0);
    PlantRecord::new(
        id,
        p_n,
        mounting,
        series(start, step, p)?,
        WeatherForecast::new(series(start, step, g)?, series(start, step, t)?)?,
    )
}

/// Write a combined plant file. Values use the shortest round-trip decimal
/// form, so reading back is bit-exact.
pub fn write_plant_csv(path: &Path, rec: &PlantRecord) -> Result<()> {
    rec.validate()?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["timestamp", "power_kw", "ghat_wm2", "that_c"])?;
    let (p, g, t) = (rec.power.values(), rec.weather.g_hat.values(), rec.weather.t_hat.values());
    for k in 0..rec.len() {
        w.write_record([
            format_ts(rec.power.timestamp(k)),
            p[k].to_string(),
            g[k].to_string(),
            t[k].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_power_csv(path: &Path, power: &TimeSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["timestamp", "power_kw"])?;
    for (k, v) in power.values().iter().enumerate() {
        w.write_record([format_ts(power.timestamp(k)), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_weather_csv(path: &Path, weather: &WeatherForecast) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["timestamp", "ghat_wm2", "that_c"])?;
    let (g, t) = (weather.g_hat.values(), weather.t_hat.values());
    for k in 0..weather.len() {
        w.write_record([format_ts(weather.g_hat.timestamp(k)), g[k].to_string(), t[k].to_string()])?;
    }
    w.flush()?;
    Ok(())
}
