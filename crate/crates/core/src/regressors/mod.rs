//! Regression estimators behind a uniform fit/predict interface.
//!
//! Every estimator minimizes squared error. Fitting is single-threaded and
//! bit-reproducible for a given seed; prediction is pure.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::NUM_FEATURES;

pub mod boosting;
pub mod forest;
pub mod mlp;
pub mod ridge;
pub mod tree;

pub use mlp::Activation;

/// Minimum number of training rows accepted by [`fit`].
pub const MIN_TRAIN_ROWS: usize = 20;

// Configuration-space bounds.
pub const ALPHA_RANGE: (f64, f64) = (0.05, 1.0);
pub const LEARNING_RATE_RANGE: (f64, f64) = (0.01, 1.0);
pub const N_ESTIMATORS_RANGE: (usize, usize) = (10, 300);
pub const MAX_DEPTH_RANGE: (usize, usize) = (1, 10);
pub const HIDDEN_WIDTH_RANGE: (usize, usize) = (10, 100);
pub const HIDDEN_LAYERS_RANGE: (usize, usize) = (1, 3);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Ridge,
    Mlp,
    GradientBoosting,
    RandomForest,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorKind::Ridge => "Ridge",
            EstimatorKind::Mlp => "MLP",
            EstimatorKind::GradientBoosting => "GradientBoosting",
            EstimatorKind::RandomForest => "RandomForest",
        })
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparameters {
    Ridge {
        alpha: f64,
    },
    Mlp {
        activation: Activation,
        hidden_layer_sizes: Vec<usize>,
    },
    GradientBoosting {
        learning_rate: f64,
        n_estimators: usize,
        max_depth: usize,
    },
    RandomForest {
        n_estimators: usize,
        max_depth: usize,
        #[serde(default = "default_true")]
        bootstrap: bool,
    },
}

impl Hyperparameters {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            Hyperparameters::Ridge { .. } => EstimatorKind::Ridge,
            Hyperparameters::Mlp { .. } => EstimatorKind::Mlp,
            Hyperparameters::GradientBoosting { .. } => EstimatorKind::GradientBoosting,
            Hyperparameters::RandomForest { .. } => EstimatorKind::RandomForest,
        }
    }

    /// Structural validity required to fit: positive sizes, `max_depth >= 1`,
    /// positive penalty and rate, 1 to 3 hidden layers. Looser than
    /// [`Self::validate`] so degenerate ensembles (one tree) can be built.
    pub fn validate_structure(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        match self {
            Hyperparameters::Ridge { alpha } if !(*alpha > 0.0 && alpha.is_finite()) => {
                bad(format!("alpha must be > 0, got {alpha}"))
            }
            Hyperparameters::Mlp { hidden_layer_sizes, .. }
                if !(HIDDEN_LAYERS_RANGE.0..=HIDDEN_LAYERS_RANGE.1)
                    .contains(&hidden_layer_sizes.len())
                    || hidden_layer_sizes.contains(&0) =>
            {
                bad(format!("invalid hidden layers {hidden_layer_sizes:?}"))
            }
            Hyperparameters::GradientBoosting { learning_rate, .. }
                if !(*learning_rate > 0.0 && *learning_rate <= 1.0) =>
            {
                bad(format!("learning_rate must be in (0, 1], got {learning_rate}"))
            }
            Hyperparameters::GradientBoosting { n_estimators, max_depth, .. }
            | Hyperparameters::RandomForest { n_estimators, max_depth, .. }
                if *n_estimators == 0 || *max_depth < MAX_DEPTH_RANGE.0 =>
            {
                bad(format!("need n_estimators >= 1 and max_depth >= 1, got {n_estimators}, {max_depth}"))
            }
            _ => Ok(()),
        }
    }

    /// Check every value against the configuration-space bounds.
    pub fn validate(&self) -> Result<()> {
        fn in_f(name: &str, v: f64, (lo, hi): (f64, f64)) -> Result<()> {
            if !(lo..=hi).contains(&v) {
                return Err(Error::InvalidSpec(format!("{name}={v} outside [{lo}, {hi}]")));
            }
            Ok(())
        }
        fn in_u(name: &str, v: usize, (lo, hi): (usize, usize)) -> Result<()> {
            if !(lo..=hi).contains(&v) {
                return Err(Error::InvalidSpec(format!("{name}={v} outside [{lo}, {hi}]")));
            }
            Ok(())
        }
        match self {
            Hyperparameters::Ridge { alpha } => in_f("alpha", *alpha, ALPHA_RANGE),
            Hyperparameters::Mlp { hidden_layer_sizes, .. } => {
                in_u("hidden layer count", hidden_layer_sizes.len(), HIDDEN_LAYERS_RANGE)?;
                hidden_layer_sizes
                    .iter()
                    .try_for_each(|&w| in_u("hidden layer width", w, HIDDEN_WIDTH_RANGE))
            }
            Hyperparameters::GradientBoosting { learning_rate, n_estimators, max_depth } => {
                in_f("learning_rate", *learning_rate, LEARNING_RATE_RANGE)?;
                in_u("n_estimators", *n_estimators, N_ESTIMATORS_RANGE)?;
                in_u("max_depth", *max_depth, MAX_DEPTH_RANGE)
            }
            Hyperparameters::RandomForest { n_estimators, max_depth, .. } => {
                in_u("n_estimators", *n_estimators, N_ESTIMATORS_RANGE)?;
                in_u("max_depth", *max_depth, MAX_DEPTH_RANGE)
            }
        }
    }
}

/// An estimator family, its hyperparameters and the seed used to fit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
}

impl EstimatorSpec {
    pub fn new(hyperparameters: Hyperparameters, seed: u64) -> Self {
        Self { hyperparameters, seed }
    }

    pub fn ridge(alpha: f64) -> Self {
        Self::new(Hyperparameters::Ridge { alpha }, 0)
    }

    pub fn kind(&self) -> EstimatorKind {
        self.hyperparameters.kind()
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparameters.validate()
    }

    pub fn validate_structure(&self) -> Result<()> {
        self.hyperparameters.validate_structure()
    }
}

impl std::fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.hyperparameters {
            Hyperparameters::Ridge { alpha } => write!(f, "Ridge(alpha={alpha:.4})"),
            Hyperparameters::Mlp { activation, hidden_layer_sizes } => {
                write!(f, "MLP({activation:?}, {hidden_layer_sizes:?})")
            }
            Hyperparameters::GradientBoosting { learning_rate, n_estimators, max_depth } => write!(
                f,
                "GradientBoosting(lr={learning_rate:.4}, n={n_estimators}, depth={max_depth})"
            ),
            Hyperparameters::RandomForest { n_estimators, max_depth, bootstrap } => write!(
                f,
                "RandomForest(n={n_estimators}, depth={max_depth}, bootstrap={bootstrap})"
            ),
        }
    }
}

/// Learned parameters, per family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Ridge(ridge::RidgeModel),
    Mlp(mlp::MlpModel),
    GradientBoosting(boosting::GradientBoostingModel),
    RandomForest(forest::RandomForestModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    /// Epochs run (MLP), trees built (ensembles), or 1 (ridge).
    pub iterations: usize,
    pub final_training_loss: f64,
    /// Training MSE after each epoch or boosting stage.
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedEstimator {
    pub spec: EstimatorSpec,
    pub model: Model,
    pub meta: TrainingMeta,
}

fn check_inputs(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<()> {
    if x.ncols() != NUM_FEATURES {
        return Err(Error::Shape { expected: NUM_FEATURES, actual: x.ncols() });
    }
    if x.nrows() != y.len() {
        return Err(Error::InvalidData(format!("{} rows but {} targets", x.nrows(), y.len())));
    }
    if x.nrows() < MIN_TRAIN_ROWS {
        return Err(Error::InsufficientData(format!(
            "{} training rows, at least {MIN_TRAIN_ROWS} required",
            x.nrows()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite value in training data".into()));
    }
    Ok(())
}

/// Fit `spec` on daytime rows `x` with scaled-power targets `y`.
pub fn fit(spec: &EstimatorSpec, x: ArrayView2<'_, f64>, y: &[f64]) -> Result<TrainedEstimator> {
    spec.validate_structure()?;
    check_inputs(x, y)?;
    let (model, meta) = match &spec.hyperparameters {
        Hyperparameters::Ridge { alpha } => {
            let (m, meta) = ridge::RidgeModel::fit(x, y, *alpha)?;
            (Model::Ridge(m), meta)
        }
        Hyperparameters::Mlp { activation, hidden_layer_sizes } => {
            let cfg = mlp::MlpConfig::default();
            let (m, meta) =
                mlp::MlpModel::fit(x, y, *activation, hidden_layer_sizes, &cfg, spec.seed)?;
            (Model::Mlp(m), meta)
        }
        Hyperparameters::GradientBoosting { learning_rate, n_estimators, max_depth } => {
            let (m, meta) = boosting::GradientBoostingModel::fit(
                x,
                y,
                *learning_rate,
                *n_estimators,
                *max_depth,
            )?;
            (Model::GradientBoosting(m), meta)
        }
        Hyperparameters::RandomForest { n_estimators, max_depth, bootstrap } => {
            let (m, meta) = forest::RandomForestModel::fit(
                x,
                y,
                *n_estimators,
                *max_depth,
                *bootstrap,
                spec.seed,
            )?;
            (Model::RandomForest(m), meta)
        }
    };
    if !meta.final_training_loss.is_finite() {
        return Err(Error::InvalidData(format!("{spec} diverged during training")));
    }
    Ok(TrainedEstimator { spec: spec.clone(), model, meta })
}

impl TrainedEstimator {
    /// One prediction per row. Values may be negative or exceed 1.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if x.ncols() != NUM_FEATURES {
            return Err(Error::Shape { expected: NUM_FEATURES, actual: x.ncols() });
        }
        Ok(match &self.model {
            Model::Ridge(m) => m.predict(x),
            Model::Mlp(m) => m.predict(x),
            Model::GradientBoosting(m) => m.predict(x),
            Model::RandomForest(m) => m.predict(x),
        })
    }
}

pub(crate) fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len().max(1) as f64
}
