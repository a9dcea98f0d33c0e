use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::tree::{fit_weighted, Presorted, RegressionTree, TreeParams};
use super::TrainingMeta;
use crate::error::Result;

/// Least-squares gradient boosting: a constant initial prediction plus
/// shrunken regression trees fitted to the running residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoostingModel {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
}

impl GradientBoostingModel {
    pub(super) fn fit(
        x: ArrayView2<'_, f64>,
        y: &[f64],
        learning_rate: f64,
        n_estimators: usize,
        max_depth: usize,
    ) -> Result<(Self, TrainingMeta)> {
        let n = y.len();
        let init = y.iter().sum::<f64>() / n as f64;
        let data = Presorted::new(x);
        let weights = vec![1u32; n];
        let params = TreeParams { max_depth, max_features: None };
        let mut current = vec![init; n];
        let mut residual = vec![0.0; n];
        let mut trees = Vec::with_capacity(n_estimators);
        let mut history = Vec::with_capacity(n_estimators);
        let mut row = vec![0.0; x.ncols()];
        for _ in 0..n_estimators {
            for i in 0..n {
                residual[i] = y[i] - current[i];
            }
            let tree = fit_weighted::<rand_chacha::ChaCha8Rng>(&data, &residual, &weights, params, None);
            for (i, r) in x.rows().into_iter().enumerate() {
                row.iter_mut().zip(r.iter()).for_each(|(b, v)| *b = *v);
                current[i] += learning_rate * tree.predict_row(&row);
            }
            history.push(super::mse(&current, y));
            trees.push(tree);
        }
        let loss = history.last().copied().unwrap_or_else(|| super::mse(&current, y));
        Ok((
            Self { init, learning_rate, trees },
            TrainingMeta { iterations: n_estimators, final_training_loss: loss, loss_history: history },
        ))
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut row = vec![0.0; x.ncols()];
        x.rows()
            .into_iter()
            .map(|r| {
                row.iter_mut().zip(r.iter()).for_each(|(b, v)| *b = *v);
                self.init
                    + self.trees.iter().map(|t| self.learning_rate * t.predict_row(&row)).sum::<f64>()
            })
            .collect()
    }
}
