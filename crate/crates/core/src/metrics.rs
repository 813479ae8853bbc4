//! Evaluation metrics: MAE, RMSE, MAPE (with zero-target skipping), R².

use crate::error::{Error, Result};

fn check_lengths(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::EmptyInput("metric over empty series".into()));
    }
    if y.len() != y_hat.len() {
        return Err(Error::dimension(
            "metric",
            format!("{} actual vs {} predicted", y.len(), y_hat.len()),
        ));
    }
    Ok(())
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    let ms = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
    Ok(ms.sqrt())
}

/// 100·mean over i with y_i ≠ 0 of |y_i−ŷ_i|/|y_i|; zero targets are
/// skipped and counted.
pub fn mape(y: &[f64], y_hat: &[f64]) -> Result<(f64, usize)> {
    check_lengths(y, y_hat)?;
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for (a, b) in y.iter().zip(y_hat) {
        if *a == 0.0 {
            skipped += 1;
        } else {
            sum += ((a - b) / a).abs();
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::UndefinedMetric("MAPE with all targets zero".into()));
    }
    Ok((100.0 * sum / used as f64, skipped))
}

/// 1 − RSS/TSS. Undefined for constant targets (TSS = 0).
pub fn r2(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    if y.len() < 2 {
        return Err(Error::UndefinedMetric("R² needs at least 2 points".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let rss: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    let tss: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    if tss == 0.0 {
        return Err(Error::UndefinedMetric("R² of a constant series".into()));
    }
    Ok(1.0 - rss / tss)
}

/// All four metrics on one series pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRow {
    pub mae: f64,
    pub rmse: f64,
    /// None when every target is zero.
    pub mape: Option<f64>,
    pub mape_skipped: usize,
    /// None for constant targets.
    pub r2: Option<f64>,
    pub n: usize,
}

pub fn metric_row(y: &[f64], y_hat: &[f64]) -> Result<MetricRow> {
    let mae = mae(y, y_hat)?;
    let rmse = rmse(y, y_hat)?;
    let (mape, mape_skipped) = match mape(y, y_hat) {
        Ok((m, s)) => (Some(m), s),
        Err(Error::UndefinedMetric(_)) => (None, y.len()),
        Err(e) => return Err(e),
    };
    let r2 = match r2(y, y_hat) {
        Ok(v) => Some(v),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricRow { mae, rmse, mape, mape_skipped, r2, n: y.len() })
}
