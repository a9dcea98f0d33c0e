//! Error metric and the leave-one-out experiment comparing the adaptive
//! ensemble with equal weighting and two individual-model baselines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ensemble::{simulate_online, SimulationConfig, WeightLogEntry, DEFAULT_CYCLE_DAYS, DEFAULT_WINDOW_SAMPLES};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::pipeline::{
    fit_plant_model, search_plant_model, train_plant_model, PipelineConfig, TrainedPlantModel,
    TrainingWindow,
};
use crate::cash::SearchState;
use crate::regressors::EstimatorSpec;
use crate::timeseries::{PlantRecord, TimeSeries, WeatherForecast};

/// Σ|ŷ − y| / Σy over aligned slices.
pub fn nmae_values(forecast: &[f64], actual: &[f64]) -> Result<f64> {
    if forecast.len() != actual.len() {
        return Err(Error::InvalidSeries(format!(
            "forecast has {} samples, actual {}",
            forecast.len(),
            actual.len()
        )));
    }
    let total: f64 = actual.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::UndefinedMetric(format!("total actual generation is {total}")));
    }
    let err: f64 = forecast.iter().zip(actual).map(|(f, y)| (f - y).abs()).sum();
    Ok(err / total)
}

pub fn nmae(forecast: &TimeSeries, actual: &TimeSeries) -> Result<f64> {
    forecast.check_aligned(actual)?;
    nmae_values(forecast.values(), actual.values())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "IM-HDA")]
    ImHda,
    #[serde(rename = "IM-IT")]
    ImIt,
    Averaging,
    AutoPV,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::ImHda, Method::ImIt, Method::Averaging, Method::AutoPV];

    pub fn label(self) -> &'static str {
        match self {
            Method::ImHda => "IM-HDA",
            Method::ImIt => "IM-IT",
            Method::Averaging => "Averaging",
            Method::AutoPV => "AutoPV",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub pipeline: PipelineConfig,
    /// First instant of the test period; everything before is pre-training data.
    pub test_start: DateTime<Utc>,
    pub cycle_days: usize,
    pub window_samples: usize,
    pub seed: u64,
    /// Run the incrementally retrained baseline (the slowest method).
    pub im_it: bool,
    pub execution: Execution,
}

impl EvaluationConfig {
    pub fn new(test_start: DateTime<Utc>) -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            test_start,
            cycle_days: DEFAULT_CYCLE_DAYS,
            window_samples: DEFAULT_WINDOW_SAMPLES,
            seed: 0,
            im_it: true,
            execution: Execution::default(),
        }
    }

    fn simulation(&self, adapt: bool) -> SimulationConfig {
        SimulationConfig { cycle_days: self.cycle_days, window_samples: self.window_samples, adapt }
    }
}

/// Seed for plant `index` derived from a run seed.
pub fn plant_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn split(rec: &PlantRecord, at: DateTime<Utc>) -> Result<(PlantRecord, PlantRecord)> {
    if at <= rec.power.start() || at >= rec.power.end() {
        return Err(Error::InvalidConfig(format!(
            "{}: split {at} outside data span {} .. {}",
            rec.id,
            rec.power.start(),
            rec.power.end()
        )));
    }
    Ok((rec.slice_time(rec.power.start(), at)?, rec.slice_time(at, rec.power.end())?))
}

/// Train one model per plant on the data before the test period.
pub fn pretrain_pool(
    fleet: &[PlantRecord],
    cfg: &EvaluationConfig,
) -> Result<Vec<(TrainedPlantModel, SearchState)>> {
    cfg.execution
        .map_range(fleet.len(), |i| {
            let (pre, _) = split(&fleet[i], cfg.test_start)?;
            train_plant_model(&pre, plant_seed(cfg.seed, i), &cfg.pipeline)
        })
        .into_iter()
        .collect()
}

/// Which data each method's models were fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub im_hda: TrainingWindow,
    pub im_it: Vec<TrainingWindow>,
    pub pool: Vec<(String, TrainingWindow)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantScores {
    pub plant_id: String,
    pub scores: BTreeMap<Method, f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub run_seed: u64,
    pub fleet_seed: Option<u64>,
    pub cycle_days: usize,
    pub window_samples: usize,
    pub test_start: DateTime<Utc>,
    pub test_end: DateTime<Utc>,
    pub plants: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyResult {
    pub plant_id: String,
    /// Position of the plant's own model in the pool.
    pub own_index: usize,
    pub weight_log: Vec<WeightLogEntry>,
    /// Mean weight of the own model over all successful adaptations.
    pub mean_own_weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub metadata: RunMetadata,
    pub plants: Vec<PlantScores>,
    pub mean: BTreeMap<Method, f64>,
    pub weight_logs: BTreeMap<String, Vec<WeightLogEntry>>,
    #[serde(default)]
    pub consistency: Option<Vec<ConsistencyResult>>,
}

impl EvaluationReport {
    pub fn methods(&self) -> Vec<Method> {
        Method::ALL.into_iter().filter(|m| self.mean.contains_key(m)).collect()
    }

    /// Fixed-width table, one row per plant plus the mean row.
    pub fn to_table(&self) -> String {
        let methods = self.methods();
        let mut s = String::new();
        let _ = write!(s, "{:<10}", "plant");
        for m in &methods {
            let _ = write!(s, "{:>11}", m.label());
        }
        s.push('\n');
        let row = |s: &mut String, name: &str, scores: &BTreeMap<Method, f64>| {
            let _ = write!(s, "{name:<10}");
            for m in &methods {
                match scores.get(m) {
                    Some(v) => {
                        let _ = write!(s, "{v:>11.4}");
                    }
                    None => {
                        let _ = write!(s, "{:>11}", "-");
                    }
                }
            }
            s.push('\n');
        };
        for p in &self.plants {
            row(&mut s, &p.plant_id, &p.scores);
        }
        row(&mut s, "mean", &self.mean);
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Arithmetic mean per method across plant rows.
pub fn mean_scores(plants: &[PlantScores]) -> BTreeMap<Method, f64> {
    let mut out = BTreeMap::new();
    for m in Method::ALL {
        let v: Vec<f64> = plants.iter().filter_map(|p| p.scores.get(&m).copied()).collect();
        if !v.is_empty() && v.len() == plants.len() {
            out.insert(m, v.iter().sum::<f64>() / v.len() as f64);
        }
    }
    out
}

/// Forecasts (kW) of every method for one held-out plant.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldForecasts {
    pub plant_id: String,
    pub actual: TimeSeries,
    pub forecasts: BTreeMap<Method, TimeSeries>,
}

#[derive(Debug, Clone)]
pub struct LeaveOneOut {
    pub report: EvaluationReport,
    pub folds: Vec<FoldForecasts>,
}

/// Scaled forecasts of every model for every test plant; plants with equal
/// weather share one computation.
struct ForecastTable {
    weather_of: Vec<usize>,
    by_weather: Vec<Vec<TimeSeries>>,
}

impl ForecastTable {
    fn build(tests: &[PlantRecord], models: &[TrainedPlantModel], execution: Execution) -> Result<Self> {
        let mut unique: Vec<&WeatherForecast> = Vec::new();
        let mut weather_of = Vec::with_capacity(tests.len());
        for t in tests {
            match unique.iter().position(|w| **w == t.weather) {
                Some(p) => weather_of.push(p),
                None => {
                    weather_of.push(unique.len());
                    unique.push(&t.weather);
                }
            }
        }
        let jobs: Vec<(usize, usize)> =
            (0..unique.len()).flat_map(|w| (0..models.len()).map(move |m| (w, m))).collect();
        let flat: Vec<TimeSeries> = execution
            .map_slice(&jobs, |&(w, m)| models[m].predict_scaled(unique[w]))
            .into_iter()
            .collect::<Result<_>>()?;
        let by_weather = flat.chunks(models.len()).map(|c| c.to_vec()).collect();
        Ok(Self { weather_of, by_weather })
    }

    fn get(&self, plant: usize, model: usize) -> &TimeSeries {
        &self.by_weather[self.weather_of[plant]][model]
    }
}

fn check_fleet(fleet: &[PlantRecord], models: &[TrainedPlantModel], min: usize) -> Result<()> {
    if fleet.len() < min {
        return Err(Error::InvalidPool(format!("fleet of {}, at least {min} plants required", fleet.len())));
    }
    if models.len() != fleet.len() {
        return Err(Error::Shape { expected: fleet.len(), actual: models.len() });
    }
    for (r, m) in fleet.iter().zip(models) {
        if r.id != m.plant_id {
            return Err(Error::InvalidPool(format!("model {} does not belong to plant {}", m.plant_id, r.id)));
        }
    }
    Ok(())
}

fn test_records(fleet: &[PlantRecord], cfg: &EvaluationConfig) -> Result<Vec<PlantRecord>> {
    fleet.iter().map(|r| split(r, cfg.test_start).map(|(_, t)| t)).collect()
}

fn check_pretrained(m: &TrainedPlantModel, test_start: DateTime<Utc>) -> Result<()> {
    if m.training_window.to > test_start {
        return Err(Error::InvalidData(format!(
            "model {} was trained on data up to {}, after the test start {test_start}",
            m.plant_id, m.training_window.to
        )));
    }
    Ok(())
}

/// Individual model refitted every cycle on all test data seen so far. The
/// estimator configuration is searched once, at the first boundary.
pub fn incremental_baseline(
    test: &PlantRecord,
    cfg: &EvaluationConfig,
    seed: u64,
) -> Result<(TimeSeries, Vec<TrainingWindow>)> {
    let n = test.len();
    let cycle = cfg.cycle_days * test.power.samples_per_day()?;
    let mut out = vec![0.0; n];
    let mut spec: Option<EstimatorSpec> = None;
    let mut model: Option<TrainedPlantModel> = None;
    let mut windows = Vec::new();
    let mut b = 0;
    while b < n {
        let next = (b + cycle).min(n);
        if let Some(m) = &model {
            let f = m.predict_scaled(&test.weather.slice(b, next)?)?;
            for (o, v) in out[b..next].iter_mut().zip(f.values()) {
                *o = test.p_n * v;
            }
        }
        if next - b == cycle && next < n {
            let seen = test.slice(0, next)?;
            if spec.is_none() {
                match search_plant_model(&seen, seed, &cfg.pipeline) {
                    Ok((m, _)) => spec = Some(m.estimator.spec.clone()),
                    Err(e) if retry_later(&e) => {}
                    Err(e) => return Err(e),
                }
            }
            if let Some(s) = &spec {
                match fit_plant_model(&seen, s, cfg.pipeline.max_train_rows) {
                    Ok(m) => {
                        windows.push(m.training_window);
                        model = Some(m);
                    }
                    Err(e) if retry_later(&e) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        b = next;
    }
    Ok((test.power.with_values(out), windows))
}

fn retry_later(e: &Error) -> bool {
    matches!(e, Error::InsufficientData(_) | Error::DegenerateData(_) | Error::SearchFailed { .. })
}

/// Evaluate every plant against a pool of all other plants' models.
pub fn run_leave_one_out(
    fleet: &[PlantRecord],
    models: &[TrainedPlantModel],
    cfg: &EvaluationConfig,
) -> Result<EvaluationReport> {
    Ok(run_leave_one_out_detailed(fleet, models, cfg)?.report)
}

pub fn run_leave_one_out_detailed(
    fleet: &[PlantRecord],
    models: &[TrainedPlantModel],
    cfg: &EvaluationConfig,
) -> Result<LeaveOneOut> {
    check_fleet(fleet, models, 3)?;
    models.iter().try_for_each(|m| check_pretrained(m, cfg.test_start))?;
    let tests = test_records(fleet, cfg)?;
    let table = ForecastTable::build(&tests, models, cfg.execution)?;

    let folds: Vec<(PlantScores, Vec<WeightLogEntry>, FoldForecasts)> = cfg
        .execution
        .map_range(fleet.len(), |i| {
            let test = &tests[i];
            let pool: Vec<TimeSeries> =
                (0..models.len()).filter(|&j| j != i).map(|j| table.get(i, j).clone()).collect();
            let adaptive = simulate_online(&pool, &test.power, test.p_n, &cfg.simulation(true))?;
            let averaging = simulate_online(&pool, &test.power, test.p_n, &cfg.simulation(false))?;
            let own = table.get(i, i).map(|v| test.p_n * v);

            let mut forecasts = BTreeMap::new();
            forecasts.insert(Method::ImHda, own);
            forecasts.insert(Method::Averaging, averaging.forecast);
            forecasts.insert(Method::AutoPV, adaptive.forecast);
            let mut im_it_windows = Vec::new();
            if cfg.im_it {
                let (f, w) = incremental_baseline(test, cfg, plant_seed(cfg.seed ^ 0x17, i))?;
                if let Some(bad) = w.iter().find(|w| w.from < cfg.test_start) {
                    return Err(Error::InvalidData(format!(
                        "{}: incremental model saw data from {}",
                        test.id, bad.from
                    )));
                }
                forecasts.insert(Method::ImIt, f);
                im_it_windows = w;
            }
            let scores = forecasts
                .iter()
                .map(|(m, f)| nmae(f, &test.power).map(|v| (*m, v)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            let provenance = Provenance {
                im_hda: models[i].training_window,
                im_it: im_it_windows,
                pool: (0..models.len())
                    .filter(|&j| j != i)
                    .map(|j| (models[j].plant_id.clone(), models[j].training_window))
                    .collect(),
            };
            Ok((
                PlantScores { plant_id: test.id.clone(), scores, provenance },
                adaptive.weight_log,
                FoldForecasts { plant_id: test.id.clone(), actual: test.power.clone(), forecasts },
            ))
        })
        .into_iter()
        .collect::<Result<_>>()?;

    let mut plants = Vec::with_capacity(folds.len());
    let mut weight_logs = BTreeMap::new();
    let mut fold_forecasts = Vec::with_capacity(folds.len());
    for (scores, log, f) in folds {
        weight_logs.insert(scores.plant_id.clone(), log);
        plants.push(scores);
        fold_forecasts.push(f);
    }
    let report = EvaluationReport {
        metadata: metadata(&tests, cfg),
        mean: mean_scores(&plants),
        plants,
        weight_logs,
        consistency: None,
    };
    Ok(LeaveOneOut { report, folds: fold_forecasts })
}

fn metadata(tests: &[PlantRecord], cfg: &EvaluationConfig) -> RunMetadata {
    RunMetadata {
        run_seed: cfg.seed,
        fleet_seed: None,
        cycle_days: cfg.cycle_days,
        window_samples: cfg.window_samples,
        test_start: cfg.test_start,
        test_end: tests.iter().map(|t| t.power.end()).max().unwrap_or(cfg.test_start),
        plants: tests.len(),
    }
}

/// Same protocol with every plant's own model kept in the pool.
pub fn run_consistency(
    fleet: &[PlantRecord],
    models: &[TrainedPlantModel],
    cfg: &EvaluationConfig,
) -> Result<Vec<ConsistencyResult>> {
    check_fleet(fleet, models, 2)?;
    models.iter().try_for_each(|m| check_pretrained(m, cfg.test_start))?;
    let tests = test_records(fleet, cfg)?;
    let table = ForecastTable::build(&tests, models, cfg.execution)?;
    cfg.execution
        .map_range(fleet.len(), |i| {
            let test = &tests[i];
            let pool: Vec<TimeSeries> = (0..models.len()).map(|j| table.get(i, j).clone()).collect();
            let sim = simulate_online(&pool, &test.power, test.p_n, &cfg.simulation(true))?;
            let own: Vec<f64> = sim
                .weight_log
                .iter()
                .filter(|e| e.outcome == crate::ensemble::AdaptationKind::Updated)
                .map(|e| e.weights[i])
                .collect();
            let mean_own_weight = (!own.is_empty()).then(|| own.iter().sum::<f64>() / own.len() as f64);
            Ok(ConsistencyResult {
                plant_id: test.id.clone(),
                own_index: i,
                weight_log: sim.weight_log,
                mean_own_weight,
            })
        })
        .into_iter()
        .collect()
}

/// Pre-train the pool and run the leave-one-out comparison.
pub fn evaluate_fleet(
    fleet: &[PlantRecord],
    cfg: &EvaluationConfig,
) -> Result<(Arc<Vec<TrainedPlantModel>>, EvaluationReport)> {
    let models: Vec<TrainedPlantModel> = pretrain_pool(fleet, cfg)?.into_iter().map(|(m, _)| m).collect();
    let report = run_leave_one_out(fleet, &models, cfg)?;
    Ok((Arc::new(models), report))
}
