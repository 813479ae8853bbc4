//! Report emission: metric tables as CSV and aligned text, per-day
//! prediction series, correlation tables, and training logs.

use crate::error::Result;
use crate::eval::{AggregateRow, PredictionSeries};
use crate::training::EpochRecord;
use std::path::Path;

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "undefined".into(),
    }
}

/// Metric table columns follow MAE, RMSE, MAPE, R² order.
pub fn metrics_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(
        "model,horizon,target,mae_mean,mae_std,rmse_mean,rmse_std,mape_mean,mape_std,r2_mean,r2_std,mape_skipped,n_points,seeds\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{},{},{},{},{},{},{}\n",
            r.label,
            r.horizon,
            r.target,
            r.mae.mean,
            r.mae.std,
            r.rmse.mean,
            r.rmse.std,
            fmt_opt(r.mape.map(|a| a.mean)),
            fmt_opt(r.mape.map(|a| a.std)),
            fmt_opt(r.r2.map(|a| a.mean)),
            fmt_opt(r.r2.map(|a| a.std)),
            r.mape_skipped,
            r.n_points,
            r.mae.n,
        ));
    }
    out
}

/// Fixed-width table for terminals; one row per (model, target).
pub fn metrics_text_table(rows: &[AggregateRow]) -> String {
    let header = ["model", "horizon", "target", "MAE", "RMSE", "MAPE", "R2"];
    let mut cells: Vec<[String; 7]> = Vec::with_capacity(rows.len());
    for r in rows {
        let pm = |a: &crate::eval::Aggregate| {
            if a.n > 1 {
                format!("{:.2} ± {:.2}", a.mean, a.std)
            } else {
                format!("{:.2}", a.mean)
            }
        };
        cells.push([
            r.label.clone(),
            r.horizon.to_string(),
            r.target.clone(),
            pm(&r.mae),
            pm(&r.rmse),
            r.mape.map(|a| pm(&a)).unwrap_or_else(|| "undefined".into()),
            r.r2.map(|a| pm(&a)).unwrap_or_else(|| "undefined".into()),
        ]);
    }
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (i, c) in row.iter().enumerate() {
            widths[i] = widths[i].max(c.len());
        }
    }
    let mut out = String::new();
    let fmt_row = |cols: &[String]| {
        cols.iter()
            .enumerate()
            .map(|(i, c)| format!("{:width$}", c, width = widths[i]))
            .collect::<Vec<_>>()
            .join("  ")
            + "\n"
    };
    out.push_str(&fmt_row(&header.iter().map(|s| s.to_string()).collect::<Vec<_>>()));
    out.push_str(&format!("{}\n", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1))));
    for row in &cells {
        out.push_str(&fmt_row(row));
    }
    out
}

/// Per-day (date, actual, predicted) series for downstream plotting.
pub fn prediction_series_csv(series: &PredictionSeries) -> String {
    let mut out = String::from("date");
    for t in &series.targets {
        out.push_str(&format!(",actual_{t},predicted_{t}"));
    }
    out.push('\n');
    for (i, date) in series.dates.iter().enumerate() {
        out.push_str(&date.to_string());
        for k in 0..series.targets.len() {
            out.push_str(&format!(",{:.4},{:.4}", series.actual[i][k], series.predicted[i][k]));
        }
        out.push('\n');
    }
    out
}

/// Line-delimited training log: epoch, train MSE, val MSE, elapsed seconds.
pub fn training_log_csv(log: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_mse,val_mse,elapsed_s\n");
    for r in log {
        out.push_str(&format!(
            "{},{:.10e},{:.10e},{:.3}\n",
            r.epoch, r.train_mse, r.val_mse, r.elapsed_s
        ));
    }
    out
}

/// Correlation table rows: (signal, target, lag, r or "undefined").
pub fn correlation_csv(rows: &[(String, String, i64, Option<f64>)]) -> String {
    let mut out = String::from("signal,target,lag,r\n");
    for (signal, target, lag, r) in rows {
        out.push_str(&format!(
            "{signal},{target},{lag},{}\n",
            r.map(|v| format!("{v:.6}")).unwrap_or_else(|| "undefined".into())
        ));
    }
    out
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{aggregate, AggregateRow};

    fn row(label: &str, target: &str) -> AggregateRow {
        AggregateRow {
            label: label.into(),
            horizon: 7,
            target: target.into(),
            mae: aggregate(&[10.0, 12.0]),
            rmse: aggregate(&[15.0, 17.0]),
            mape: Some(aggregate(&[5.0, 6.0])),
            r2: Some(aggregate(&[0.9, 0.8])),
            mape_skipped: 0,
            n_points: 30,
        }
    }

    #[test]
    fn csv_has_paper_column_order() {
        let csv = metrics_csv(&[row("SE", "new_cases")]);
        let header = csv.lines().next().unwrap();
        let mae_pos = header.find("mae_mean").unwrap();
        let rmse_pos = header.find("rmse_mean").unwrap();
        let mape_pos = header.find("mape_mean").unwrap();
        let r2_pos = header.find("r2_mean").unwrap();
        assert!(mae_pos < rmse_pos && rmse_pos < mape_pos && mape_pos < r2_pos);
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn text_table_aligns_columns() {
        let table = metrics_text_table(&[row("SE", "new_cases"), row("AVG_WINDOW", "macro_avg")]);
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines.len() >= 4);
        assert!(lines[0].contains("MAE"));
        // undefined formatting
        let mut undef = row("X", "t");
        undef.r2 = None;
        assert!(metrics_text_table(&[undef]).contains("undefined"));
    }

    #[test]
    fn correlation_csv_format() {
        let csv = correlation_csv(&[
            ("stringency_index".into(), "new_cases".into(), 3, Some(0.5)),
            ("movement".into(), "new_cases".into(), 0, None),
        ]);
        assert!(csv.contains("stringency_index,new_cases,3,0.500000"));
        assert!(csv.contains("movement,new_cases,0,undefined"));
    }
}
