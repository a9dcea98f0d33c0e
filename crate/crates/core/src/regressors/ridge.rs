use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::TrainingMeta;
use crate::error::{Error, Result};
use crate::features::ColumnStats;

/// Ridge regression on standardized columns with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub stats: ColumnStats,
    /// Coefficients on the standardized columns.
    pub coef: Vec<f64>,
    pub intercept: f64,
}

/// Solve `(ZᵀZ + alpha·I) β = Zᵀy` by Cholesky factorization.
pub fn solve_normal_equations(z: ArrayView2<'_, f64>, y: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let (gram, rhs) = normal_system(z, y, alpha);
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::DegenerateData("ridge normal matrix is not positive definite".into()))?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// `(ZᵀZ + alpha·I, Zᵀy)`.
pub fn normal_system(z: ArrayView2<'_, f64>, y: &[f64], alpha: f64) -> (DMatrix<f64>, DVector<f64>) {
    let p = z.ncols();
    let zt = z.t();
    let gram = zt.dot(&z) + Array2::<f64>::eye(p) * alpha;
    let rhs = zt.dot(&ndarray::ArrayView1::from(y));
    (
        DMatrix::from_fn(p, p, |i, j| gram[[i, j]]),
        DVector::from_iterator(p, rhs.iter().copied()),
    )
}

impl RidgeModel {
    pub(super) fn fit(x: ArrayView2<'_, f64>, y: &[f64], alpha: f64) -> Result<(Self, TrainingMeta)> {
        let stats = ColumnStats::fit(x)?;
        let z = stats.apply(x)?;
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let coef = solve_normal_equations(z.view(), &yc, alpha)?;
        let model = Self { stats, coef, intercept: y_mean };
        let loss = super::mse(&model.predict(x), y);
        Ok((model, TrainingMeta { iterations: 1, final_training_loss: loss, loss_history: vec![loss] }))
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, v)| (v - self.stats.mean[j]) / self.stats.std[j] * self.coef[j])
                    .sum::<f64>()
                    + self.intercept
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressors::{fit, test_data, EstimatorSpec};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_in_ghat(n: usize) -> (Array2<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((n, 9), |(_, j)| match j {
            1 => rng.random_range(0.0..1.0),
            _ => rng.random_range(-1.0..1.0),
        });
        let y = x.column(1).iter().map(|g| 2.0 * g).collect();
        (x, y)
    }

    #[test]
    fn realizable_linear_target() {
        let (x, y) = linear_in_ghat(2000);
        let est = fit(&EstimatorSpec::ridge(0.05), x.view(), &y).unwrap();
        assert!(est.meta.final_training_loss <= 1e-6, "{}", est.meta.final_training_loss);
        let pred = est.predict(x.view()).unwrap();
        let rms = (super::super::mse(&pred, &y)).sqrt();
        assert!(rms <= 1e-3);
    }

    #[test]
    fn satisfies_normal_equations() {
        let (x, y) = test_data::smooth_problem(500, 9);
        let stats = ColumnStats::fit(x.view()).unwrap();
        let z = stats.apply(x.view()).unwrap();
        let m = y.iter().sum::<f64>() / y.len() as f64;
        let yc: Vec<f64> = y.iter().map(|v| v - m).collect();
        let beta = solve_normal_equations(z.view(), &yc, 0.7).unwrap();
        let (a, b) = normal_system(z.view(), &yc, 0.7);
        let r = a * DVector::from_vec(beta) - b;
        assert!(r.norm() <= 1e-8, "residual {}", r.norm());
    }

    #[test]
    fn intercept_is_unpenalized() {
        let x = Array2::from_shape_fn((40, 9), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
        let y = vec![3.5; 40];
        let est = fit(&EstimatorSpec::ridge(1.0), x.view(), &y).unwrap();
        let pred = est.predict(x.view()).unwrap();
        assert!(pred.iter().all(|p| (p - 3.5).abs() < 1e-12));
    }
}
