//! Estimator inputs: polynomial weather terms plus sin/cos calendar encodings.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{calendar_fields, TimeSeries};

pub const NUM_FEATURES: usize = 9;

/// Column names in their fixed order. Persisted models depend on this order.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "ghat_sq", "ghat", "ghat_that", "that", "that_sq", "x_s12", "x_c12", "x_s1440", "x_c1440",
];

/// Columns whose standard deviation falls below this are only centered
/// (scale 1), so unseen values of a column constant in training stay finite.
pub const MIN_STD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CyclicFeatures {
    pub x_s12: f64,
    pub x_c12: f64,
    pub x_s1440: f64,
    pub x_c1440: f64,
}

pub fn encode_cyclic(month: u32, minute_of_day: u32) -> Result<CyclicFeatures> {
    if !(1..=12).contains(&month) {
        return Err(Error::Domain(format!("month must be in 1..=12, got {month}")));
    }
    if minute_of_day >= 1440 {
        return Err(Error::Domain(format!("minute of day must be in 0..1440, got {minute_of_day}")));
    }
    let (s12, c12) = (2.0 * PI * month as f64 / 12.0).sin_cos();
    let (s1440, c1440) = (2.0 * PI * minute_of_day as f64 / 1440.0).sin_cos();
    Ok(CyclicFeatures { x_s12: s12, x_c12: c12, x_s1440: s1440, x_c1440: c1440 })
}

/// Row-per-sample input matrix with the night mask attached.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Array2<f64>,
    night_mask: Vec<bool>,
}

impl FeatureMatrix {
    pub fn from_parts(values: Array2<f64>, night_mask: Vec<bool>) -> Result<Self> {
        if values.ncols() != NUM_FEATURES {
            return Err(Error::Shape { expected: NUM_FEATURES, actual: values.ncols() });
        }
        if values.nrows() != night_mask.len() {
            return Err(Error::InvalidData(format!(
                "{} rows but {} mask entries",
                values.nrows(),
                night_mask.len()
            )));
        }
        Ok(Self { values, night_mask })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn night_mask(&self) -> &[bool] {
        &self.night_mask
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    /// Indices of rows with positive forecast radiation.
    pub fn daytime_indices(&self) -> Vec<usize> {
        self.night_mask.iter().enumerate().filter(|(_, &n)| !n).map(|(i, _)| i).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(0), rows),
            night_mask: rows.iter().map(|&r| self.night_mask[r]).collect(),
        }
    }
}

/// Build the feature matrix for aligned radiation and temperature forecasts.
pub fn build_features(g_hat: &TimeSeries, t_hat: &TimeSeries) -> Result<FeatureMatrix> {
    g_hat.check_aligned(t_hat)?;
    let n = g_hat.len();
    let mut values = Array2::zeros((n, NUM_FEATURES));
    let mut night_mask = Vec::with_capacity(n);
    for (k, (&g, &t)) in g_hat.values().iter().zip(t_hat.values()).enumerate() {
        let cal = calendar_fields(g_hat.timestamp(k));
        let cyc = encode_cyclic(cal.month, cal.minute_of_day)?;
        let row = [g * g, g, g * t, t, t * t, cyc.x_s12, cyc.x_c12, cyc.x_s1440, cyc.x_c1440];
        values.row_mut(k).assign(&ndarray::ArrayView1::from(&row));
        night_mask.push(g <= 0.0);
    }
    Ok(FeatureMatrix { values, night_mask })
}

/// Per-column mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ColumnStats {
    /// Fit on every row of `x`.
    pub fn fit(x: ArrayView2<'_, f64>) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::DegenerateData("no rows to compute column statistics".into()));
        }
        let mut mean = vec![0.0; x.ncols()];
        let mut std = vec![0.0; x.ncols()];
        for (j, col) in x.axis_iter(Axis(1)).enumerate() {
            let rough = col.iter().sum::<f64>() / n as f64;
            // correction pass; makes the mean exact for constant columns
            let m = rough + col.iter().map(|v| v - rough).sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            mean[j] = m;
            let sd = var.sqrt();
            std[j] = if sd < MIN_STD { 1.0 } else { sd };
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::Shape { expected: self.mean.len(), actual: x.ncols() });
        }
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }
}

/// Standardize every column. With `stats` absent they are fitted on the
/// daytime rows only and returned for reuse at prediction time.
pub fn standardize(
    fm: &FeatureMatrix,
    stats: Option<&ColumnStats>,
) -> Result<(FeatureMatrix, ColumnStats)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => {
            let day = fm.daytime_indices();
            if day.is_empty() {
                return Err(Error::DegenerateData("no daytime rows to standardize on".into()));
            }
            ColumnStats::fit(fm.values.select(Axis(0), &day).view())?
        }
    };
    let values = stats.apply(fm.values.view())?;
    Ok((FeatureMatrix { values, night_mask: fm.night_mask.clone() }, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    #[test]
    fn cyclic_examples() {
        let c = encode_cyclic(12, 0).unwrap();
        assert!(c.x_s12.abs() < 1e-12 && (c.x_c12 - 1.0).abs() < 1e-12);
        let c = encode_cyclic(3, 0).unwrap();
        assert!((c.x_s12 - 1.0).abs() < 1e-12 && c.x_c12.abs() < 1e-12);
        let c = encode_cyclic(1, 720).unwrap();
        assert!(c.x_s1440.abs() < 1e-12 && (c.x_c1440 + 1.0).abs() < 1e-12);
    }

    #[test]
    fn cyclic_domain_errors() {
        assert!(matches!(encode_cyclic(0, 0), Err(Error::Domain(_))));
        assert!(encode_cyclic(13, 0).is_err());
        assert!(encode_cyclic(1, 1440).is_err());
    }

    #[test]
    fn night_row_example() {
        let t0 = Utc.with_ymd_and_hms(2020, 6, 1, 0, 0, 0).unwrap();
        let g = TimeSeries::quarter_hourly(t0, vec![0.0]);
        let t = TimeSeries::quarter_hourly(t0, vec![10.0]);
        let fm = build_features(&g, &t).unwrap();
        let expected = [0.0, 0.0, 0.0, 10.0, 100.0, 0.0, -1.0, 0.0, 1.0];
        for (a, b) in fm.values().row(0).iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert_eq!(fm.night_mask(), &[true]);
    }

    #[test]
    fn polynomial_columns() {
        let t0 = Utc.with_ymd_and_hms(2020, 6, 1, 12, 0, 0).unwrap();
        let g = TimeSeries::quarter_hourly(t0, vec![800.0]);
        let t = TimeSeries::quarter_hourly(t0, vec![25.0]);
        let fm = build_features(&g, &t).unwrap();
        let row = fm.values().row(0).to_vec();
        assert_eq!(&row[..5], &[640000.0, 800.0, 20000.0, 25.0, 625.0]);
        assert_eq!(fm.night_mask(), &[false]);
    }

    #[test]
    fn misaligned_inputs_rejected() {
        let t0 = Utc.with_ymd_and_hms(2020, 6, 1, 0, 0, 0).unwrap();
        let g = TimeSeries::quarter_hourly(t0, vec![0.0; 3]);
        let t = TimeSeries::quarter_hourly(t0, vec![0.0; 2]);
        assert!(matches!(build_features(&g, &t), Err(Error::InvalidSeries(_))));
    }

    #[test]
    fn constant_column_standardizes_to_zero() {
        let t0 = Utc.with_ymd_and_hms(2020, 6, 1, 12, 0, 0).unwrap();
        let g = TimeSeries::quarter_hourly(t0, vec![100.0, 200.0, 300.0]);
        let t = TimeSeries::quarter_hourly(t0, vec![5.0, 5.0, 5.0]);
        let (z, _) = standardize(&build_features(&g, &t).unwrap(), None).unwrap();
        assert!(z.values().column(3).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_column_is_centered_only() {
        let t0 = Utc.with_ymd_and_hms(2020, 6, 1, 12, 0, 0).unwrap();
        let g = TimeSeries::quarter_hourly(t0, vec![100.0, 200.0, 300.0]);
        let t = TimeSeries::quarter_hourly(t0, vec![5.0, 5.0, 5.0]);
        let (_, stats) = standardize(&build_features(&g, &t).unwrap(), None).unwrap();
        assert_eq!(stats.std[3], 1.0);
        let later = TimeSeries::quarter_hourly(t0, vec![7.0, 7.0, 7.0]);
        let (z, _) = standardize(&build_features(&g, &later).unwrap(), Some(&stats)).unwrap();
        assert!(z.values().column(3).iter().all(|&v| v == 2.0));
    }

    #[test]
    fn standardize_with_stats_is_idempotent() {
        let t0 = Utc.with_ymd_and_hms(2020, 6, 1, 10, 0, 0).unwrap();
        let g = TimeSeries::quarter_hourly(t0, vec![0.0, 50.0, 400.0, 700.0]);
        let t = TimeSeries::quarter_hourly(t0, vec![3.0, 8.0, 14.0, 20.0]);
        let fm = build_features(&g, &t).unwrap();
        let (z1, stats) = standardize(&fm, None).unwrap();
        let (z2, _) = standardize(&fm, Some(&stats)).unwrap();
        assert_eq!(z1, z2);
    }

    #[test]
    fn all_night_cannot_be_standardized() {
        let t0 = Utc.with_ymd_and_hms(2020, 6, 1, 0, 0, 0).unwrap();
        let g = TimeSeries::quarter_hourly(t0, vec![0.0; 4]);
        let t = TimeSeries::quarter_hourly(t0, vec![1.0; 4]);
        assert!(matches!(
            standardize(&build_features(&g, &t).unwrap(), None),
            Err(Error::DegenerateData(_))
        ));
    }

    proptest! {
        #[test]
        fn feature_invariants(
            g in proptest::collection::vec(-50.0f64..1100.0, 96),
            t in proptest::collection::vec(-20.0f64..40.0, 96),
            day in 0i64..366,
        ) {
            let t0 = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap() + chrono::TimeDelta::days(day);
            let gs = TimeSeries::quarter_hourly(t0, g.clone());
            let ts = TimeSeries::quarter_hourly(t0, t.clone());
            let fm = build_features(&gs, &ts).unwrap();
            let x = fm.values();
            for k in 0..96 {
                prop_assert!((x[[k, 5]].powi(2) + x[[k, 6]].powi(2) - 1.0).abs() <= 1e-12);
                prop_assert!((x[[k, 7]].powi(2) + x[[k, 8]].powi(2) - 1.0).abs() <= 1e-12);
                prop_assert_eq!(x[[k, 2]], x[[k, 1]] * x[[k, 3]]);
            }
            let nights = fm.night_mask().iter().filter(|&&n| n).count();
            prop_assert_eq!(nights, g.iter().filter(|&&v| v <= 0.0).count());
            prop_assert_eq!(build_features(&gs, &ts).unwrap(), fm.clone());

            if nights < 96 {
                let (z, _) = standardize(&fm, None).unwrap();
                let day_rows = z.select_rows(&z.daytime_indices());
                for col in day_rows.values().axis_iter(Axis(1)) {
                    let m = col.iter().sum::<f64>() / col.len() as f64;
                    prop_assert!(m.abs() <= 1e-10, "mean {}", m);
                }
            }
        }
    }
}
