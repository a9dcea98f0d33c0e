use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_weighted, Presorted, RegressionTree, TreeParams};
use super::TrainingMeta;
use crate::error::Result;
use crate::features::NUM_FEATURES;

/// Candidate features per split: ⌈9 / 3⌉.
pub const FOREST_MAX_FEATURES: usize = NUM_FEATURES.div_ceil(3);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub trees: Vec<RegressionTree>,
}

impl RandomForestModel {
    pub(super) fn fit(
        x: ArrayView2<'_, f64>,
        y: &[f64],
        n_estimators: usize,
        max_depth: usize,
        bootstrap: bool,
        seed: u64,
    ) -> Result<(Self, TrainingMeta)> {
        let n = y.len();
        let data = Presorted::new(x);
        let params = TreeParams { max_depth, max_features: Some(FOREST_MAX_FEATURES) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = vec![0u32; n];
        let trees: Vec<RegressionTree> = (0..n_estimators)
            .map(|_| {
                if bootstrap {
                    weights.iter_mut().for_each(|w| *w = 0);
                    for _ in 0..n {
                        weights[rng.random_range(0..n)] += 1;
                    }
                } else {
                    weights.iter_mut().for_each(|w| *w = 1);
                }
                fit_weighted(&data, y, &weights, params, Some(&mut rng))
            })
            .collect();
        let model = Self { trees };
        let loss = super::mse(&model.predict(x), y);
        Ok((
            model,
            TrainingMeta { iterations: n_estimators, final_training_loss: loss, loss_history: vec![loss] },
        ))
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut row = vec![0.0; x.ncols()];
        let n = self.trees.len() as f64;
        x.rows()
            .into_iter()
            .map(|r| {
                row.iter_mut().zip(r.iter()).for_each(|(b, v)| *b = *v);
                self.trees.iter().map(|t| t.predict_row(&row)).sum::<f64>() / n
            })
            .collect()
    }
}
