//! Convex combination of a pool of pre-trained plant models, with the weights
//! re-fitted by bounded least squares on the most recent measurements.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bvls::solve_box_qp;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::pipeline::TrainedPlantModel;
use crate::timeseries::{TimeSeries, WeatherForecast, SAMPLES_PER_DAY};

pub const DEFAULT_CYCLE_DAYS: usize = 28;
pub const DEFAULT_WINDOW_SAMPLES: usize = DEFAULT_CYCLE_DAYS * SAMPLES_PER_DAY;
/// Ridge term on the weights, relative to the mean diagonal of `AᵀA`.
pub const TIKHONOV: f64 = 1e-10;
/// Box solutions summing to less than this cannot be normalized.
pub const DEGENERATE_SUM: f64 = 1e-9;
const SIMPLEX_TOL: f64 = 1e-9;

/// Weights in `[0, 1]` summing to one, ordered like the pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidPool("empty weight vector".into()));
        }
        if let Some(v) = w.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("weight {v} outside [0, 1]")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Domain(format!("weights sum to {sum}")));
        }
        Ok(Self(w))
    }

    pub fn equal(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidPool("empty pool".into()));
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    pub fn one_hot(n: usize, j: usize) -> Result<Self> {
        if j >= n {
            return Err(Error::Domain(format!("index {j} outside pool of {n}")));
        }
        let mut w = vec![0.0; n];
        w[j] = 1.0;
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;
    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

/// `p_n · Σₙ wₙ·fₙ[k]` for every sample.
pub fn combine(forecasts: &[&[f64]], weights: &WeightVector, p_n: f64) -> Result<Vec<f64>> {
    check_forecasts(forecasts, weights.len())?;
    let k = forecasts[0].len();
    Ok((0..k)
        .map(|i| {
            let s: f64 = forecasts.iter().zip(weights.as_slice()).map(|(f, w)| w * f[i]).sum();
            p_n * s
        })
        .collect())
}

fn check_forecasts(forecasts: &[&[f64]], n: usize) -> Result<()> {
    if forecasts.len() != n {
        return Err(Error::Shape { expected: n, actual: forecasts.len() });
    }
    let k = forecasts[0].len();
    if let Some(f) = forecasts.iter().find(|f| f.len() != k) {
        return Err(Error::InvalidSeries(format!("forecast lengths {} and {k} differ", f.len())));
    }
    Ok(())
}

/// Mean squared error of the weighted combination over the window.
pub fn windowed_mse(forecasts: &[&[f64]], target: &[f64], w: &[f64]) -> f64 {
    let k = target.len();
    (0..k)
        .map(|i| {
            let p: f64 = forecasts.iter().zip(w).map(|(f, w)| w * f[i]).sum();
            (p - target[i]).powi(2)
        })
        .sum::<f64>()
        / k as f64
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightOutcome {
    Updated {
        weights: WeightVector,
        /// Bounded solution before normalization.
        box_solution: Vec<f64>,
        windowed_mse: f64,
    },
    /// Every forecast is zero, or the box solution is; weights stay as they were.
    Degenerate,
}

/// Bounded least squares on `[0, 1]ⁿ` followed by L1 normalization.
pub fn optimize_weights(
    forecasts: &[&[f64]],
    target: &[f64],
    prev: &WeightVector,
) -> Result<WeightOutcome> {
    let n = prev.len();
    check_forecasts(forecasts, n)?;
    let k = target.len();
    if forecasts[0].len() != k {
        return Err(Error::InvalidSeries(format!(
            "window of {} forecasts vs {k} measurements",
            forecasts[0].len()
        )));
    }
    if k < n {
        return Err(Error::InsufficientData(format!("window of {k} samples for {n} weights")));
    }
    if target.iter().chain(forecasts.iter().flat_map(|f| f.iter())).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite value in weighting window".into()));
    }
    if forecasts.iter().all(|f| f.iter().all(|&v| v == 0.0)) {
        return Ok(WeightOutcome::Degenerate);
    }

    // Unnormalized normal equations: zero rows leave every sum bit-identical.
    let mut h = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    for a in 0..n {
        c[a] = forecasts[a].iter().zip(target).map(|(f, y)| f * y).sum();
        for b in a..n {
            let v: f64 = forecasts[a].iter().zip(forecasts[b]).map(|(x, y)| x * y).sum();
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    let ridge = TIKHONOV * (h.trace() / n as f64);
    for a in 0..n {
        h[(a, a)] += ridge;
    }

    let solution = solve_box_qp(&h, &c, 0.0, 1.0)?.w;
    let sum: f64 = solution.iter().sum();
    if sum < DEGENERATE_SUM {
        return Ok(WeightOutcome::Degenerate);
    }
    let normalized: Vec<f64> = solution.iter().map(|w| (w / sum).clamp(0.0, 1.0)).collect();
    let mse = windowed_mse(forecasts, target, &normalized);
    Ok(WeightOutcome::Updated { weights: WeightVector::new(normalized)?, box_solution: solution, windowed_mse: mse })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptationKind {
    Updated,
    Degenerate,
    NotYet,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdaptationOutcome {
    /// Fewer than K samples of history.
    NotYet,
    Degenerate,
    Updated { box_solution: Vec<f64>, windowed_mse: f64 },
}

impl AdaptationOutcome {
    pub fn kind(&self) -> AdaptationKind {
        match self {
            Self::NotYet => AdaptationKind::NotYet,
            Self::Degenerate => AdaptationKind::Degenerate,
            Self::Updated { .. } => AdaptationKind::Updated,
        }
    }

    pub fn windowed_mse(&self) -> Option<f64> {
        match self {
            Self::Updated { windowed_mse, .. } => Some(*windowed_mse),
            _ => None,
        }
    }
}

fn validate_setup(n: usize, p_n_new: f64, cycle_days: usize, window_samples: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidPool(format!("pool of {n} models, at least 2 required")));
    }
    if !(p_n_new > 0.0 && p_n_new.is_finite()) {
        return Err(Error::InvalidPlant(format!("p_n must be > 0, got {p_n_new}")));
    }
    if cycle_days == 0 {
        return Err(Error::InvalidConfig("adaptation cycle must be at least one day".into()));
    }
    if window_samples < n {
        return Err(Error::InvalidConfig(format!(
            "window of {window_samples} samples cannot determine {n} weights"
        )));
    }
    Ok(())
}

/// Adaptive ensemble for one target plant. The pool is shared read-only.
#[derive(Debug, Clone)]
pub struct EnsembleState {
    pub pool: Arc<Vec<TrainedPlantModel>>,
    pub weights: WeightVector,
    pub p_n_new: f64,
    pub cycle_days: usize,
    pub window_samples: usize,
    pub last_adaptation: Option<DateTime<Utc>>,
}

impl EnsembleState {
    /// Cold start: every pool member weighted `1/N`.
    pub fn init_equal(
        pool: Arc<Vec<TrainedPlantModel>>,
        p_n_new: f64,
        cycle_days: usize,
        window_samples: usize,
    ) -> Result<Self> {
        validate_setup(pool.len(), p_n_new, cycle_days, window_samples)?;
        Ok(Self {
            weights: WeightVector::equal(pool.len())?,
            pool,
            p_n_new,
            cycle_days,
            window_samples,
            last_adaptation: None,
        })
    }

    /// Scaled forecast of every pool member.
    pub fn pool_forecasts(&self, weather: &WeatherForecast, execution: Execution) -> Result<Vec<TimeSeries>> {
        pool_forecasts(&self.pool, weather, execution)
    }

    pub fn predict(&self, weather: &WeatherForecast, execution: Execution) -> Result<TimeSeries> {
        let f = self.pool_forecasts(weather, execution)?;
        let views: Vec<&[f64]> = f.iter().map(|s| s.values()).collect();
        Ok(weather.g_hat.with_values(combine(&views, &self.weights, self.p_n_new)?))
    }

    /// Re-fit the weights on the last K samples of `measured` (kW).
    pub fn adaptation_step(
        &mut self,
        measured: &TimeSeries,
        pool_history: &[TimeSeries],
    ) -> Result<AdaptationOutcome> {
        if pool_history.len() != self.pool.len() {
            return Err(Error::Shape { expected: self.pool.len(), actual: pool_history.len() });
        }
        pool_history.iter().try_for_each(|f| f.check_aligned(measured))?;
        let k = self.window_samples;
        if measured.len() < k {
            return Ok(AdaptationOutcome::NotYet);
        }
        let from = measured.len() - k;
        let target: Vec<f64> = measured.values()[from..].iter().map(|v| v / self.p_n_new).collect();
        let views: Vec<&[f64]> = pool_history.iter().map(|f| &f.values()[from..]).collect();
        let outcome = optimize_weights(&views, &target, &self.weights)?;
        self.last_adaptation = Some(measured.end());
        Ok(match outcome {
            WeightOutcome::Updated { weights, box_solution, windowed_mse } => {
                self.weights = weights;
                AdaptationOutcome::Updated { box_solution, windowed_mse }
            }
            WeightOutcome::Degenerate => AdaptationOutcome::Degenerate,
        })
    }
}

pub fn pool_forecasts(
    pool: &[TrainedPlantModel],
    weather: &WeatherForecast,
    execution: Execution,
) -> Result<Vec<TimeSeries>> {
    execution.map_slice(pool, |m| m.predict_scaled(weather)).into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightLogEntry {
    /// First instant the weights apply to.
    pub timestamp: DateTime<Utc>,
    pub weights: Vec<f64>,
    pub windowed_mse: Option<f64>,
    pub outcome: AdaptationKind,
}

/// Append entries as JSON lines, creating the file if needed.
pub fn append_weight_log(path: &Path, entries: &[WeightLogEntry]) -> Result<()> {
    let f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut f = std::io::BufWriter::new(f);
    for e in entries {
        serde_json::to_writer(&mut f, e)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_weight_log(path: &Path) -> Result<Vec<WeightLogEntry>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub cycle_days: usize,
    pub window_samples: usize,
    /// When false the equal weights are kept throughout.
    pub adapt: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { cycle_days: DEFAULT_CYCLE_DAYS, window_samples: DEFAULT_WINDOW_SAMPLES, adapt: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    /// Forecast in kW over the measured span.
    pub forecast: TimeSeries,
    /// One entry per completed cycle.
    pub weight_log: Vec<WeightLogEntry>,
}

/// Replay operation over `measured`: forecasts between cycle boundaries use
/// the weights fixed at the previous boundary, and each boundary re-fits the
/// weights on the K samples before it.
pub fn simulate_online(
    pool_forecasts: &[TimeSeries],
    measured: &TimeSeries,
    p_n_new: f64,
    cfg: &SimulationConfig,
) -> Result<SimulationResult> {
    let n_models = pool_forecasts.len();
    validate_setup(n_models, p_n_new, cfg.cycle_days, cfg.window_samples)?;
    let n = measured.len();
    let mut history = Vec::with_capacity(n_models);
    for f in pool_forecasts {
        if f.start() != measured.start() || f.step_secs() != measured.step_secs() || f.len() < n {
            return Err(Error::InvalidSeries(format!(
                "pool forecast ({} samples from {}) does not cover measurements ({n} from {})",
                f.len(),
                f.start(),
                measured.start()
            )));
        }
        history.push(f.slice(0, n)?);
    }
    let cycle = cfg.cycle_days * measured.samples_per_day()?;
    let mut weights = WeightVector::equal(n_models)?;
    let mut out = Vec::with_capacity(n);
    let mut log = Vec::new();
    let mut b = 0;
    while b < n {
        let next = (b + cycle).min(n);
        let views: Vec<&[f64]> = history.iter().map(|f| &f.values()[b..next]).collect();
        out.extend(combine(&views, &weights, p_n_new)?);
        if next - b == cycle && cfg.adapt {
            let (outcome, new_weights) =
                adapt_at(&history, measured, next, &weights, p_n_new, cfg.window_samples)?;
            weights = new_weights;
            log.push(WeightLogEntry {
                timestamp: measured.start() + measured.step() * next as i32,
                weights: weights.as_slice().to_vec(),
                windowed_mse: outcome.windowed_mse(),
                outcome: outcome.kind(),
            });
        }
        b = next;
    }
    Ok(SimulationResult { forecast: measured.with_values(out), weight_log: log })
}

fn adapt_at(
    history: &[TimeSeries],
    measured: &TimeSeries,
    boundary: usize,
    weights: &WeightVector,
    p_n_new: f64,
    k: usize,
) -> Result<(AdaptationOutcome, WeightVector)> {
    if boundary < k {
        return Ok((AdaptationOutcome::NotYet, weights.clone()));
    }
    let from = boundary - k;
    let target: Vec<f64> = measured.values()[from..boundary].iter().map(|v| v / p_n_new).collect();
    let views: Vec<&[f64]> = history.iter().map(|f| &f.values()[from..boundary]).collect();
    Ok(match optimize_weights(&views, &target, weights)? {
        WeightOutcome::Updated { weights, box_solution, windowed_mse } => {
            (AdaptationOutcome::Updated { box_solution, windowed_mse }, weights)
        }
        WeightOutcome::Degenerate => (AdaptationOutcome::Degenerate, weights.clone()),
    })
}
