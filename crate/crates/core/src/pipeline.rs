//! Per-plant pipeline: peak-power scaling, feature construction, night-row
//! removal, estimator search, and the prediction rules (zero at night, no
//! negative output).

use std::path::Path;

use chrono::{DateTime, Utc};
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::cash::{run_cash, CashConfig, Dataset, SearchState};
use crate::error::{Error, Result};
use crate::features::{build_features, standardize, ColumnStats};
use crate::regressors::{fit, EstimatorSpec, TrainedEstimator};
use crate::timeseries::{scale_by_peak, PlantRecord, TimeSeries, WeatherForecast};

/// Version tag written into persisted model bundles.
pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub cash: CashConfig,
    /// Trailing share of daytime rows held out for validation.
    pub validation_fraction: f64,
    /// Evenly strided subsample of the training rows when set.
    #[serde(default)]
    pub max_train_rows: Option<usize>,
    /// Minimum history required by [`train_plant_model`].
    pub min_days: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cash: CashConfig::default(),
            validation_fraction: 0.2,
            max_train_rows: None,
            min_days: 60,
        }
    }
}

/// Time span of the measurements a model was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingWindow {
    pub from: DateTime<Utc>,
    pub to: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPlantModel {
    pub plant_id: String,
    pub p_n: f64,
    pub estimator: TrainedEstimator,
    /// Daytime column statistics of the training features.
    pub feature_stats: ColumnStats,
    pub training_window: TrainingWindow,
}

/// Daytime feature rows and scaled targets of one plant, in time order.
pub struct TrainingRows {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub stats: ColumnStats,
    pub window: TrainingWindow,
}

impl TrainingRows {
    pub fn from_record(rec: &PlantRecord) -> Result<Self> {
        rec.validate()?;
        let target = scale_by_peak(&rec.power, rec.p_n)?;
        let fm = build_features(&rec.weather.g_hat, &rec.weather.t_hat)?;
        let day = fm.daytime_indices();
        if day.is_empty() {
            return Err(Error::InsufficientData(format!("{}: no daytime samples", rec.id)));
        }
        let (_, stats) = standardize(&fm, None)?;
        let x = fm.values().select(Axis(0), &day);
        let y: Vec<f64> = day.iter().map(|&k| target.values()[k]).collect();
        if y.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidData(format!("{}: negative or non-finite power", rec.id)));
        }
        Ok(Self {
            x,
            y,
            stats,
            window: TrainingWindow { from: rec.power.start(), to: rec.power.end() },
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// `m` evenly spaced indices out of `0..n` (all of them when `m >= n`).
pub fn strided_indices(n: usize, m: Option<usize>) -> Vec<usize> {
    match m {
        Some(m) if m < n => (0..m).map(|i| i * n / m).collect(),
        _ => (0..n).collect(),
    }
}

fn split_rows(rows: &TrainingRows, cfg: &PipelineConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = rows.len();
    let n_val = (n as f64 * cfg.validation_fraction).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::InsufficientData(format!("{n} daytime rows cannot be split")));
    }
    let cut = n - n_val;
    let train: Vec<usize> = strided_indices(cut, cfg.max_train_rows);
    let val: Vec<usize> = (cut..n).collect();
    Ok((train, val))
}

/// Full pipeline training with the minimum-history check.
pub fn train_plant_model(
    rec: &PlantRecord,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<(TrainedPlantModel, SearchState)> {
    let per_day = rec.power.samples_per_day()?;
    if rec.len() < cfg.min_days * per_day {
        return Err(Error::InsufficientData(format!(
            "{}: {} samples, need at least {} days",
            rec.id,
            rec.len(),
            cfg.min_days
        )));
    }
    search_plant_model(rec, seed, cfg)
}

/// Pipeline training without the minimum-history check (used for models
/// trained on short operational windows).
pub fn search_plant_model(
    rec: &PlantRecord,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<(TrainedPlantModel, SearchState)> {
    let rows = TrainingRows::from_record(rec)?;
    let (train, val) = split_rows(&rows, cfg)?;
    let xt = rows.x.select(Axis(0), &train);
    let yt: Vec<f64> = train.iter().map(|&i| rows.y[i]).collect();
    let xv = rows.x.select(Axis(0), &val);
    let yv: Vec<f64> = val.iter().map(|&i| rows.y[i]).collect();
    let (estimator, state) = run_cash(
        &Dataset { x: xt.view(), y: &yt },
        &Dataset { x: xv.view(), y: &yv },
        seed,
        &cfg.cash,
    )?;
    Ok((
        TrainedPlantModel {
            plant_id: rec.id.clone(),
            p_n: rec.p_n,
            estimator,
            feature_stats: rows.stats,
            training_window: rows.window,
        },
        state,
    ))
}

/// Fit a fixed estimator configuration on every daytime row of `rec`.
pub fn fit_plant_model(
    rec: &PlantRecord,
    spec: &EstimatorSpec,
    max_train_rows: Option<usize>,
) -> Result<TrainedPlantModel> {
    let rows = TrainingRows::from_record(rec)?;
    let idx = strided_indices(rows.len(), max_train_rows);
    let x = rows.x.select(Axis(0), &idx);
    let y: Vec<f64> = idx.iter().map(|&i| rows.y[i]).collect();
    let estimator = fit(spec, x.view(), &y)?;
    Ok(TrainedPlantModel {
        plant_id: rec.id.clone(),
        p_n: rec.p_n,
        estimator,
        feature_stats: rows.stats,
        training_window: rows.window,
    })
}

/// Clip raw estimator output: zero where `Ĝ <= 0` or the output is negative.
pub fn apply_output_rules(g_hat: &[f64], raw: &[f64]) -> Vec<f64> {
    g_hat
        .iter()
        .zip(raw)
        .map(|(&g, &y)| if g > 0.0 && y > 0.0 { y } else { 0.0 })
        .collect()
}

impl TrainedPlantModel {
    /// Scaled forecast for the given weather forecast.
    pub fn predict_scaled(&self, weather: &WeatherForecast) -> Result<TimeSeries> {
        let fm = build_features(&weather.g_hat, &weather.t_hat)?;
        let day = fm.daytime_indices();
        let mut out = vec![0.0; fm.nrows()];
        if !day.is_empty() {
            let x = fm.values().select(Axis(0), &day);
            let raw = self.estimator.predict(x.view())?;
            for (&k, y) in day.iter().zip(raw) {
                if y > 0.0 {
                    out[k] = y;
                }
            }
        }
        Ok(weather.g_hat.with_values(out))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bundle = BundleRef { format_version: BUNDLE_FORMAT_VERSION, model: self };
        std::fs::write(path, serde_json::to_string(&bundle)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingBundle(path.display().to_string()));
        }
        let bundle: Bundle = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if bundle.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "{}: bundle version {} unsupported (expected {BUNDLE_FORMAT_VERSION})",
                path.display(),
                bundle.format_version
            )));
        }
        Ok(bundle.model)
    }
}

#[derive(Serialize)]
struct BundleRef<'a> {
    format_version: u32,
    model: &'a TrainedPlantModel,
}

#[derive(Deserialize)]
struct Bundle {
    format_version: u32,
    model: TrainedPlantModel,
}
