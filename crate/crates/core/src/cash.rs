//! Combined algorithm selection and hyperparameter search.
//!
//! Trials are sampled from a seeded sampler, fitted on the training split and
//! scored by hold-out MSE after clipping negative predictions. The search
//! stops once the top-10 validation MSEs have plateaued or the trial budget is
//! exhausted. Trials may be evaluated in parallel batches; the stopping rule is
//! always replayed on the index-ordered log, so the outcome does not depend on
//! the execution mode.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::regressors::{
    fit, Activation, EstimatorKind, EstimatorSpec, Hyperparameters, TrainedEstimator, ALPHA_RANGE,
    HIDDEN_LAYERS_RANGE, HIDDEN_WIDTH_RANGE, LEARNING_RATE_RANGE, MAX_DEPTH_RANGE,
    N_ESTIMATORS_RANGE,
};

/// Rows and scaled targets.
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a> {
    pub x: ArrayView2<'a, f64>,
    pub y: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub spec: EstimatorSpec,
    /// Hold-out MSE; absent when the fit failed.
    pub validation_mse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchState {
    pub trials: Vec<TrialRecord>,
    /// Position in `trials` of the minimal validation MSE (lowest index wins ties).
    pub best: Option<usize>,
    pub rng_seed: u64,
    pub patience_counter: usize,
}

impl SearchState {
    pub fn best_trial(&self) -> Option<&TrialRecord> {
        self.best.map(|i| &self.trials[i])
    }

    /// Best validation MSE after each trial.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.trials
            .iter()
            .map(|t| {
                if let Some(m) = t.validation_mse {
                    best = best.min(m);
                }
                best
            })
            .collect()
    }

    /// One JSON record per trial.
    pub fn write_trial_log(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for t in &self.trials {
            serde_json::to_writer(&mut f, t)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn read_trial_log(path: &Path) -> Result<Vec<TrialRecord>> {
        std::fs::read_to_string(path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect()
    }
}

/// Stop once the spread of the `top` best validation errors has stayed under
/// `std_threshold` for more than `patience` consecutive trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauRule {
    pub top: usize,
    pub std_threshold: f64,
    pub patience: usize,
}

impl Default for PlateauRule {
    fn default() -> Self {
        Self { top: 10, std_threshold: 1e-3, patience: 15 }
    }
}

/// Incremental state of the plateau rule.
#[derive(Debug, Clone)]
pub struct PlateauTracker {
    rule: PlateauRule,
    top: Vec<f64>,
    counter: usize,
}

impl PlateauTracker {
    pub fn new(rule: PlateauRule) -> Self {
        Self { rule, top: Vec::with_capacity(rule.top + 1), counter: 0 }
    }

    /// Population standard deviation of the current top-k values.
    pub fn top_std(&self) -> Option<f64> {
        (self.top.len() == self.rule.top).then(|| population_std(&self.top))
    }

    /// Feed one completed trial; failed trials (`None`) do not count.
    pub fn push(&mut self, mse: Option<f64>) {
        let Some(m) = mse else { return };
        let pos = self.top.partition_point(|&v| v <= m);
        self.top.insert(pos, m);
        self.top.truncate(self.rule.top);
        match self.top_std() {
            Some(s) if s < self.rule.std_threshold => self.counter += 1,
            _ => self.counter = 0,
        }
    }

    /// Consecutive completions (including the one that first reached the
    /// plateau) for which the condition has held.
    pub fn counter(&self) -> usize {
        self.counter
    }

    /// Fires once the plateau has held for `patience` completions after the
    /// completion that reached it.
    pub fn should_stop(&self) -> bool {
        self.counter > self.rule.patience
    }
}

pub fn population_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
}

impl PlateauRule {
    /// Replay the rule over an index-ordered trial list.
    pub fn replay(&self, trials: &[TrialRecord]) -> PlateauTracker {
        let mut t = PlateauTracker::new(*self);
        for r in trials {
            t.push(r.validation_mse);
        }
        t
    }

    pub fn should_stop(&self, trials: &[TrialRecord]) -> bool {
        self.replay(trials).should_stop()
    }
}

/// The default plateau rule applied to a trial list.
pub fn plateau_stop(trials: &[TrialRecord]) -> bool {
    PlateauRule::default().should_stop(trials)
}

/// Source of candidate configurations.
pub trait SpecSampler {
    fn sample(&mut self, rng: &mut ChaCha8Rng) -> Hyperparameters;

    /// Configuration fitted as trial 0, before any sampling.
    fn baseline(&self) -> Option<Hyperparameters> {
        None
    }
}

/// Penalty of the ridge baseline that opens every family search.
pub const BASELINE_ALPHA: f64 = 1.0;

/// Configuration space explored by the random sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SearchSpace {
    /// Uniform over the listed families, then over each family's ranges.
    Families { families: Vec<EstimatorKind> },
    /// A single fixed configuration.
    Fixed { hyperparameters: Hyperparameters },
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace::Families {
            families: vec![
                EstimatorKind::Ridge,
                EstimatorKind::Mlp,
                EstimatorKind::GradientBoosting,
                EstimatorKind::RandomForest,
            ],
        }
    }
}

fn log_uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp().clamp(lo, hi)
}

fn int_uniform(rng: &mut impl Rng, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi)
}

/// Draw one configuration of the given family.
pub fn sample_family(kind: EstimatorKind, rng: &mut impl Rng) -> Hyperparameters {
    match kind {
        EstimatorKind::Ridge => Hyperparameters::Ridge { alpha: log_uniform(rng, ALPHA_RANGE) },
        EstimatorKind::Mlp => {
            let activation = Activation::ALL[rng.random_range(0..Activation::ALL.len())];
            let layers = int_uniform(rng, HIDDEN_LAYERS_RANGE);
            let hidden_layer_sizes =
                (0..layers).map(|_| int_uniform(rng, HIDDEN_WIDTH_RANGE)).collect();
            Hyperparameters::Mlp { activation, hidden_layer_sizes }
        }
        EstimatorKind::GradientBoosting => Hyperparameters::GradientBoosting {
            learning_rate: log_uniform(rng, LEARNING_RATE_RANGE),
            n_estimators: int_uniform(rng, N_ESTIMATORS_RANGE),
            max_depth: int_uniform(rng, MAX_DEPTH_RANGE),
        },
        EstimatorKind::RandomForest => Hyperparameters::RandomForest {
            n_estimators: int_uniform(rng, N_ESTIMATORS_RANGE),
            max_depth: int_uniform(rng, MAX_DEPTH_RANGE),
            bootstrap: true,
        },
    }
}

impl SpecSampler for SearchSpace {
    fn sample(&mut self, rng: &mut ChaCha8Rng) -> Hyperparameters {
        match self {
            SearchSpace::Fixed { hyperparameters } => hyperparameters.clone(),
            SearchSpace::Families { families } => {
                let kind = families[rng.random_range(0..families.len())];
                sample_family(kind, rng)
            }
        }
    }

    /// Default ridge whenever ridge is part of the space.
    fn baseline(&self) -> Option<Hyperparameters> {
        match self {
            SearchSpace::Families { families } if families.contains(&EstimatorKind::Ridge) => {
                Some(Hyperparameters::Ridge { alpha: BASELINE_ALPHA })
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CashConfig {
    pub max_trials: usize,
    pub plateau: PlateauRule,
    pub space: SearchSpace,
    /// Trials fitted concurrently per batch; `None` uses the worker count.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for CashConfig {
    fn default() -> Self {
        Self {
            max_trials: 200,
            plateau: PlateauRule::default(),
            space: SearchSpace::default(),
            batch_size: None,
            execution: Execution::default(),
        }
    }
}

/// Per-trial fitting seed derived from the search seed.
fn trial_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hold-out MSE with negative predictions clipped to zero.
pub fn validation_mse(est: &TrainedEstimator, val: &Dataset<'_>) -> Result<f64> {
    let pred = est.predict(val.x)?;
    Ok(pred
        .iter()
        .zip(val.y)
        .map(|(p, y)| {
            let d = p.max(0.0) - y;
            d * d
        })
        .sum::<f64>()
        / val.y.len() as f64)
}

/// Run the search with the configured sampler.
pub fn run_cash(
    train: &Dataset<'_>,
    val: &Dataset<'_>,
    seed: u64,
    cfg: &CashConfig,
) -> Result<(TrainedEstimator, SearchState)> {
    let mut sampler = cfg.space.clone();
    run_cash_with(train, val, seed, cfg, &mut sampler)
}

pub fn run_cash_with(
    train: &Dataset<'_>,
    val: &Dataset<'_>,
    seed: u64,
    cfg: &CashConfig,
    sampler: &mut dyn SpecSampler,
) -> Result<(TrainedEstimator, SearchState)> {
    if val.y.is_empty() {
        return Err(Error::InsufficientData("empty validation split".into()));
    }
    if cfg.max_trials == 0 {
        return Err(Error::InvalidConfig("max_trials must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = cfg.batch_size.unwrap_or_else(|| cfg.execution.workers()).max(1);
    let mut tracker = PlateauTracker::new(cfg.plateau);
    let mut trials: Vec<TrialRecord> = Vec::new();
    let mut best: Option<(usize, f64, TrainedEstimator)> = None;

    'search: while trials.len() < cfg.max_trials {
        let start = trials.len();
        let n = batch.min(cfg.max_trials - start);
        let specs: Vec<EstimatorSpec> = (0..n)
            .map(|i| {
                let h = match sampler.baseline() {
                    Some(b) if start + i == 0 => b,
                    _ => sampler.sample(&mut rng),
                };
                EstimatorSpec::new(h, trial_seed(seed, start + i))
            })
            .collect();
        let results = cfg.execution.map_slice(&specs, |spec| {
            let t0 = Instant::now();
            let out = fit(spec, train.x, train.y)
                .and_then(|est| validation_mse(&est, val).map(|m| (est, m)));
            (out, t0.elapsed().as_secs_f64())
        });
        for (spec, (out, wall_time)) in specs.into_iter().zip(results) {
            let index = trials.len();
            let (validation_mse, error) = match out {
                Ok((est, m)) => {
                    if best.as_ref().is_none_or(|(_, b, _)| m < *b) {
                        best = Some((index, m, est));
                    }
                    (Some(m), None)
                }
                Err(e) => (None, Some(e.to_string())),
            };
            trials.push(TrialRecord { index, spec, validation_mse, error, wall_time });
            tracker.push(validation_mse);
            if tracker.should_stop() {
                break 'search;
            }
        }
    }

    match best {
        Some((index, _, est)) => Ok((
            est,
            SearchState {
                trials,
                best: Some(index),
                rng_seed: seed,
                patience_counter: tracker.counter(),
            },
        )),
        None => Err(Error::SearchFailed {
            causes: trials.into_iter().filter_map(|t| t.error).collect(),
        }),
    }
}
