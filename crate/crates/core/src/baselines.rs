//! Numerical and regression baselines evaluated side by side with the
//! learned models. Each baseline forecasts every target independently.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    /// Expanding mean of the whole observed history.
    Avg,
    /// Mean of the last d observed days.
    AvgWindow,
    /// Value of the most recent observed day, for every horizon.
    LastDay,
    /// Ordinary least squares on flattened windows.
    LinReg,
    /// Least-squares autoregression of order p, iterated for multi-step.
    ArP,
}

impl BaselineKind {
    pub fn all() -> [BaselineKind; 5] {
        [
            BaselineKind::Avg,
            BaselineKind::AvgWindow,
            BaselineKind::LastDay,
            BaselineKind::LinReg,
            BaselineKind::ArP,
        ]
    }

    pub fn label(&self) -> &'static str {
        match self {
            BaselineKind::Avg => "AVG",
            BaselineKind::AvgWindow => "AVG_WINDOW",
            BaselineKind::LastDay => "LAST_DAY",
            BaselineKind::LinReg => "LIN_REG",
            BaselineKind::ArP => "AR_P",
        }
    }
}

/// Expanding mean of all observations up to and including t.
pub fn avg_forecast(history: &[f64]) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::EmptyInput("avg_forecast: empty history".into()));
    }
    Ok(history.iter().sum::<f64>() / history.len() as f64)
}

/// Mean of the most recent `d` observations.
pub fn avg_window_forecast(history: &[f64], d: usize) -> Result<f64> {
    if history.len() < d || d == 0 {
        return Err(Error::EmptyInput(format!(
            "avg_window_forecast: need {d} observations, have {}",
            history.len()
        )));
    }
    let tail = &history[history.len() - d..];
    Ok(tail.iter().sum::<f64>() / d as f64)
}

pub fn last_day_forecast(history: &[f64]) -> Result<f64> {
    history
        .last()
        .copied()
        .ok_or_else(|| Error::EmptyInput("last_day_forecast: empty history".into()))
}

/// Solves (XᵀX + λI)β = Xᵀy by Gaussian elimination with partial pivoting.
/// The small ridge guards rank deficiency from constant feature columns.
fn solve_normal_equations(x: &[Vec<f64>], y: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let n = x.len();
    let p = x[0].len();
    let mut ata = vec![vec![0.0; p + 1]; p]; // augmented [A | b]
    for i in 0..p {
        for j in 0..p {
            let mut s = 0.0;
            for row in 0..n {
                s += x[row][i] * x[row][j];
            }
            ata[i][j] = s + if i == j { ridge } else { 0.0 };
        }
        let mut s = 0.0;
        for row in 0..n {
            s += x[row][i] * y[row];
        }
        ata[i][p] = s;
    }
    // elimination
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|a, b| ata[*a][col].abs().total_cmp(&ata[*b][col].abs()))
            .unwrap();
        if ata[pivot][col].abs() < 1e-300 {
            return Err(Error::Numeric("normal equations are singular".into()));
        }
        ata.swap(col, pivot);
        for row in col + 1..p {
            let f = ata[row][col] / ata[col][col];
            for k in col..=p {
                ata[row][k] -= f * ata[col][k];
            }
        }
    }
    let mut beta = vec![0.0; p];
    for col in (0..p).rev() {
        let mut s = ata[col][p];
        for k in col + 1..p {
            s -= ata[col][k] * beta[k];
        }
        beta[col] = s / ata[col][col];
    }
    Ok(beta)
}

/// Least-squares linear regression over flattened feature windows, with an
/// intercept column and ridge λ=1e-8 on the normal equations.
#[derive(Clone, Debug)]
pub struct OlsModel {
    /// Intercept followed by one coefficient per feature.
    pub coefficients: Vec<f64>,
}

impl OlsModel {
    pub fn fit(features: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        if features.is_empty() || features.len() != targets.len() {
            return Err(Error::EmptyInput(format!(
                "ols_fit: {} feature rows vs {} targets",
                features.len(),
                targets.len()
            )));
        }
        let width = features[0].len();
        if features.len() <= width {
            return Err(Error::Numeric(format!(
                "ols_fit: {} samples cannot determine {} coefficients",
                features.len(),
                width + 1
            )));
        }
        let design: Vec<Vec<f64>> = features
            .iter()
            .map(|row| {
                let mut d = Vec::with_capacity(width + 1);
                d.push(1.0);
                d.extend_from_slice(row);
                d
            })
            .collect();
        let coefficients = solve_normal_equations(&design, targets, 1e-8)?;
        Ok(OlsModel { coefficients })
    }

    pub fn predict(&self, features: &[f64]) -> f64 {
        let mut y = self.coefficients[0];
        for (c, f) in self.coefficients[1..].iter().zip(features) {
            y += c * f;
        }
        y
    }
}

/// y_t = c + Σ φ_i·y_{t−i} fitted by least squares.
#[derive(Clone, Debug)]
pub struct ArModel {
    pub intercept: f64,
    pub phi: Vec<f64>,
}

impl ArModel {
    pub fn fit(series: &[f64], order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("AR order must be >= 1".into()));
        }
        if series.len() <= order + 1 {
            return Err(Error::EmptyInput(format!(
                "ar_fit: series of {} too short for order {order}",
                series.len()
            )));
        }
        let mut rows = Vec::with_capacity(series.len() - order);
        let mut targets = Vec::with_capacity(series.len() - order);
        for t in order..series.len() {
            // lag 1 first: row = [y_{t-1}, ..., y_{t-p}]
            let row: Vec<f64> = (1..=order).map(|i| series[t - i]).collect();
            rows.push(row);
            targets.push(series[t]);
        }
        let ols = OlsModel::fit(&rows, &targets)?;
        Ok(ArModel { intercept: ols.coefficients[0], phi: ols.coefficients[1..].to_vec() })
    }

    /// Iterated substitution for `steps` days past the end of `history`.
    pub fn forecast(&self, history: &[f64], steps: usize) -> Result<Vec<f64>> {
        let p = self.phi.len();
        if history.len() < p {
            return Err(Error::EmptyInput(format!(
                "ar_forecast: history of {} shorter than order {p}",
                history.len()
            )));
        }
        let mut extended: Vec<f64> = history[history.len() - p..].to_vec();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let len = extended.len();
            let mut y = self.intercept;
            for i in 1..=p {
                y += self.phi[i - 1] * extended[len - i];
            }
            extended.push(y);
            out.push(y);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn avg_forecast_cases() {
        assert_eq!(avg_forecast(&[2.0, 4.0, 6.0]).unwrap(), 4.0);
        assert_eq!(avg_forecast(&[3.0; 5]).unwrap(), 3.0);
        assert_eq!(avg_forecast(&[7.5]).unwrap(), 7.5);
        assert!(avg_forecast(&[]).is_err());
    }

    #[test]
    fn avg_window_cases() {
        assert_eq!(avg_window_forecast(&[9.0, 1.0, 2.0, 3.0], 3).unwrap(), 2.0);
        assert_eq!(avg_window_forecast(&[5.0; 4], 2).unwrap(), 5.0);
        // d=1 reduces to LAST_DAY
        let h = [4.0, 8.0, 15.0];
        assert_eq!(avg_window_forecast(&h, 1).unwrap(), last_day_forecast(&h).unwrap());
        assert!(avg_window_forecast(&[1.0], 2).is_err());
    }

    #[test]
    fn last_day_cases() {
        let mut h = vec![1.0, 2.0, 3.0];
        assert_eq!(last_day_forecast(&h).unwrap(), 3.0);
        h.push(7.0);
        assert_eq!(last_day_forecast(&h).unwrap(), 7.0);
    }

    #[test]
    fn constant_series_fixed_point_for_all_baselines() {
        let h = [42.0; 30];
        assert_eq!(avg_forecast(&h).unwrap(), 42.0);
        assert_eq!(avg_window_forecast(&h, 7).unwrap(), 42.0);
        assert_eq!(last_day_forecast(&h).unwrap(), 42.0);
        let ar = ArModel::fit(&h, 2).unwrap();
        let f = ar.forecast(&h, 4).unwrap();
        for v in f {
            assert!((v - 42.0).abs() < 1e-6);
        }
    }

    #[test]
    fn ols_recovers_exact_line() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let ys: Vec<f64> = (0..20).map(|i| 2.0 * i as f64).collect();
        let ols = OlsModel::fit(&xs, &ys).unwrap();
        assert!((ols.coefficients[1] - 2.0).abs() < 1e-9);
        assert!(ols.coefficients[0].abs() < 1e-6);
        // interpolation residuals
        let rss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (ols.predict(x) - y).powi(2))
            .sum();
        assert!(rss < 1e-12);
    }

    #[test]
    fn ols_constant_target() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let ys = vec![5.0; 10];
        let ols = OlsModel::fit(&xs, &ys).unwrap();
        assert!((ols.coefficients[0] - 5.0).abs() < 1e-6);
        assert!(ols.coefficients[1].abs() < 1e-7);
        assert!(ols.coefficients[2].abs() < 1e-7);
    }

    #[test]
    fn ols_normal_equation_optimality() {
        // residual gradient Xᵀ(y − Xβ) ≈ 0 at the fitted coefficients
        let xs: Vec<Vec<f64>> = (0..15)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])
            .collect();
        let ys: Vec<f64> = (0..15).map(|i| (i as f64 * 0.53).sin() * 3.0 + 1.0).collect();
        let ols = OlsModel::fit(&xs, &ys).unwrap();
        for j in 0..3 {
            let mut grad = 0.0;
            for (x, y) in xs.iter().zip(&ys) {
                let feat = if j == 0 { 1.0 } else { x[j - 1] };
                grad += feat * (y - ols.predict(x));
            }
            // the minimized objective carries the ridge term λβ
            let adjusted = grad - 1e-8 * ols.coefficients[j];
            assert!(adjusted.abs() < 1e-8, "gradient component {j} = {adjusted}");
        }
    }

    #[test]
    fn ar_recovers_decay_coefficient() {
        // y_t = 0.5·y_{t−1} exactly from y₀ = 64
        let mut series = vec![64.0];
        for _ in 0..20 {
            series.push(series.last().unwrap() * 0.5);
        }
        let ar = ArModel::fit(&series, 1).unwrap();
        assert!((ar.phi[0] - 0.5).abs() < 1e-9);
        assert!(ar.intercept.abs() < 1e-7);
    }

    #[test]
    fn ar_two_step_equals_double_application() {
        let series: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).sin() * 10.0 + 20.0).collect();
        let ar = ArModel::fit(&series, 1).unwrap();
        let two = ar.forecast(&series, 2).unwrap();
        let one = ar.intercept + ar.phi[0] * series.last().unwrap();
        let chained = ar.intercept + ar.phi[0] * one;
        assert!((two[0] - one).abs() < 1e-12);
        assert!((two[1] - chained).abs() < 1e-12);
    }

    #[test]
    fn ar_rejects_short_series() {
        assert!(ArModel::fit(&[1.0, 2.0, 3.0], 2).is_err());
    }
}
