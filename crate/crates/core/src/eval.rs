//! Test-set evaluation harness shared by learned models and baselines.
//!
//! Evaluation recomputes the chronological split and refits the normalizer
//! on the training span, so no test-set value ever leaks into the input
//! scaling; metrics are always reported on de-normalized values.

use crate::baselines::{ArModel, BaselineKind, OlsModel};
use crate::dataio::{RegionDataset, STAT_COLUMNS};
use crate::error::{Error, Result};
use crate::metrics::{metric_row, MetricRow};
use crate::model::MglModel;
use crate::optim::TrainConfig;
use crate::training::{
    apply_normalization, chronological_split_indices, fit_normalization, make_windows,
};
use chrono::NaiveDate;

/// Per-day test predictions for plotting, one column set per target.
#[derive(Clone, Debug)]
pub struct PredictionSeries {
    pub dates: Vec<NaiveDate>,
    pub targets: Vec<String>,
    /// actual[i][k]: target k on day i.
    pub actual: Vec<Vec<f64>>,
    pub predicted: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct TargetEval {
    pub target: String,
    pub metrics: MetricRow,
}

/// One evaluated forecaster on one horizon.
#[derive(Clone, Debug)]
pub struct ModelEval {
    pub label: String,
    pub horizon: usize,
    pub per_target: Vec<TargetEval>,
    pub macro_avg: MetricRow,
    pub series: PredictionSeries,
}

fn macro_average(rows: &[MetricRow]) -> MetricRow {
    let n = rows.len() as f64;
    let mean = |f: &dyn Fn(&MetricRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let mape_defined: Vec<f64> = rows.iter().filter_map(|r| r.mape).collect();
    let r2_defined: Vec<f64> = rows.iter().filter_map(|r| r.r2).collect();
    let opt_mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    MetricRow {
        mae: mean(&|r| r.mae),
        rmse: mean(&|r| r.rmse),
        mape: opt_mean(&mape_defined),
        mape_skipped: rows.iter().map(|r| r.mape_skipped).sum(),
        r2: opt_mean(&r2_defined),
        n: rows.first().map(|r| r.n).unwrap_or(0),
    }
}

fn build_eval(
    label: String,
    horizon: usize,
    dates: Vec<NaiveDate>,
    actual: Vec<Vec<f64>>,
    predicted: Vec<Vec<f64>>,
) -> Result<ModelEval> {
    let k = actual.first().map(|r| r.len()).unwrap_or(0);
    let mut per_target = Vec::with_capacity(k);
    for col in 0..k {
        let y: Vec<f64> = actual.iter().map(|r| r[col]).collect();
        let p: Vec<f64> = predicted.iter().map(|r| r[col]).collect();
        let name = STAT_COLUMNS.get(col).copied().unwrap_or("target").to_string();
        per_target.push(TargetEval { target: name, metrics: metric_row(&y, &p)? });
    }
    let macro_avg = macro_average(&per_target.iter().map(|t| t.metrics).collect::<Vec<_>>());
    let targets = per_target.iter().map(|t| t.target.clone()).collect();
    Ok(ModelEval {
        label,
        horizon,
        per_target,
        macro_avg,
        series: PredictionSeries { dates, targets, actual, predicted },
    })
}

/// Evaluate a trained model on the chronological test split of `ds`.
pub fn evaluate_model_on_test(
    model: &MglModel,
    ds: &RegionDataset,
    cfg: &TrainConfig,
    label: &str,
) -> Result<ModelEval> {
    let mc = &model.config;
    let idx = chronological_split_indices(ds.len(), cfg.test_fraction, cfg.val_fraction)?;
    let train_raw = ds.slice_days(idx.train.clone());
    let test_raw = ds.slice_days(idx.test.clone());
    let nz = fit_normalization(&train_raw)?;
    let test_norm = apply_normalization(&test_raw, &nz);
    let windows = make_windows(&test_norm, mc.window, mc.horizon).map_err(|e| match e {
        Error::EmptyInput(m) => Error::Config(format!("test span too short: {m}")),
        other => other,
    })?;

    let mut dates = Vec::with_capacity(windows.len());
    let mut actual = Vec::with_capacity(windows.len());
    let mut predicted = Vec::with_capacity(windows.len());
    for w in &windows {
        let pred_norm = model.forward(w)?;
        let pred: Vec<f64> = (0..mc.output_dim)
            .map(|c| nz.stats.invert_value(c, pred_norm.at2(0, c)))
            .collect();
        let truth = test_raw.stats.row(w.target_index).to_vec();
        dates.push(test_raw.dates[w.target_index]);
        actual.push(truth);
        predicted.push(pred);
    }
    build_eval(label.to_string(), mc.horizon, dates, actual, predicted)
}

/// Evaluate one baseline on the same test windows a model would see.
/// Baselines read raw history up to each window's last observed day.
pub fn evaluate_baseline_on_test(
    kind: BaselineKind,
    ds: &RegionDataset,
    window: usize,
    horizon: usize,
    cfg: &TrainConfig,
) -> Result<ModelEval> {
    let idx = chronological_split_indices(ds.len(), cfg.test_fraction, cfg.val_fraction)?;
    let test_start = idx.test.start;
    let test_len = idx.test.len();
    if test_len < window + horizon {
        return Err(Error::Config(format!(
            "test span of {test_len} days too short for d + T = {}",
            window + horizon
        )));
    }
    let k = ds.stat_features();
    let series: Vec<Vec<f64>> = (0..k).map(|c| ds.stat_series(c)).collect();

    // fit the learned baselines on the training span only
    let train_raw = ds.slice_days(idx.train.clone());
    let fitted: Option<Vec<FittedBaseline>> = match kind {
        BaselineKind::LinReg => {
            let train_windows = make_windows(&train_raw, window, horizon)?;
            let mut models = Vec::with_capacity(k);
            for col in 0..k {
                let feats: Vec<Vec<f64>> = train_windows
                    .iter()
                    .map(|w| w.stats.data().to_vec())
                    .collect();
                let targets: Vec<f64> =
                    train_windows.iter().map(|w| w.target.data()[col]).collect();
                models.push(FittedBaseline::Ols(OlsModel::fit(&feats, &targets)?));
            }
            Some(models)
        }
        BaselineKind::ArP => {
            let mut models = Vec::with_capacity(k);
            for col in 0..k {
                let train_series = train_raw.stat_series(col);
                models.push(FittedBaseline::Ar(ArModel::fit(&train_series, window)?));
            }
            Some(models)
        }
        _ => None,
    };

    let count = test_len - window - horizon + 1;
    let mut dates = Vec::with_capacity(count);
    let mut actual = Vec::with_capacity(count);
    let mut predicted = Vec::with_capacity(count);
    for s in 0..count {
        let last_observed = test_start + s + window - 1; // absolute day t
        let target_day = last_observed + horizon;
        let mut pred_row = Vec::with_capacity(k);
        let mut actual_row = Vec::with_capacity(k);
        for col in 0..k {
            let history = &series[col][..=last_observed];
            let pred = match kind {
                BaselineKind::Avg => crate::baselines::avg_forecast(history)?,
                BaselineKind::AvgWindow => crate::baselines::avg_window_forecast(history, window)?,
                BaselineKind::LastDay => crate::baselines::last_day_forecast(history)?,
                BaselineKind::LinReg => {
                    let feats: Vec<f64> = (0..window)
                        .flat_map(|i| {
                            let day = last_observed + 1 - window + i;
                            (0..k).map(move |c| (day, c))
                        })
                        .map(|(day, c)| series[c][day])
                        .collect();
                    match &fitted.as_ref().unwrap()[col] {
                        FittedBaseline::Ols(m) => m.predict(&feats),
                        _ => unreachable!(),
                    }
                }
                BaselineKind::ArP => match &fitted.as_ref().unwrap()[col] {
                    FittedBaseline::Ar(m) => *m.forecast(history, horizon)?.last().unwrap(),
                    _ => unreachable!(),
                },
            };
            pred_row.push(pred);
            actual_row.push(series[col][target_day]);
        }
        dates.push(ds.dates[target_day]);
        actual.push(actual_row);
        predicted.push(pred_row);
    }
    build_eval(kind.label().to_string(), horizon, dates, actual, predicted)
}

enum FittedBaseline {
    Ols(OlsModel),
    Ar(ArModel),
}

/// Mean ± sample standard deviation of one metric across seeds.
#[derive(Clone, Copy, Debug)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn aggregate(values: &[f64]) -> Aggregate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Aggregate { mean, std, n }
}

/// Seed-aggregated metrics for one (label, horizon, target) cell.
#[derive(Clone, Debug)]
pub struct AggregateRow {
    pub label: String,
    pub horizon: usize,
    pub target: String,
    pub mae: Aggregate,
    pub rmse: Aggregate,
    pub mape: Option<Aggregate>,
    pub r2: Option<Aggregate>,
    pub mape_skipped: usize,
    pub n_points: usize,
}

/// Collapse per-seed evaluations (same label and horizon) into table rows:
/// one per target plus a macro-average row.
pub fn aggregate_evals(evals: &[ModelEval]) -> Result<Vec<AggregateRow>> {
    let first = evals
        .first()
        .ok_or_else(|| Error::EmptyInput("no evaluations to aggregate".into()))?;
    let mut rows = Vec::new();
    let mut cells: Vec<(String, Vec<MetricRow>)> = Vec::new();
    for (i, t) in first.per_target.iter().enumerate() {
        let metrics: Vec<MetricRow> = evals.iter().map(|e| e.per_target[i].metrics).collect();
        cells.push((t.target.clone(), metrics));
    }
    cells.push(("macro_avg".to_string(), evals.iter().map(|e| e.macro_avg).collect()));
    for (target, metrics) in cells {
        let maes: Vec<f64> = metrics.iter().map(|m| m.mae).collect();
        let rmses: Vec<f64> = metrics.iter().map(|m| m.rmse).collect();
        let mapes: Vec<f64> = metrics.iter().filter_map(|m| m.mape).collect();
        let r2s: Vec<f64> = metrics.iter().filter_map(|m| m.r2).collect();
        rows.push(AggregateRow {
            label: first.label.clone(),
            horizon: first.horizon,
            target,
            mae: aggregate(&maes),
            rmse: aggregate(&rmses),
            mape: if mapes.is_empty() { None } else { Some(aggregate(&mapes)) },
            r2: if r2s.is_empty() { None } else { Some(aggregate(&r2s)) },
            mape_skipped: metrics.iter().map(|m| m.mape_skipped).sum(),
            n_points: metrics.first().map(|m| m.n).unwrap_or(0),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Variant};
    use crate::recurrent::CellKind;
    use crate::synth::{synth_generate, SynthConfig};

    fn dataset() -> RegionDataset {
        synth_generate(&SynthConfig {
            tdays: 160,
            nodes: 4,
            embed_dim: 2,
            lag: 3,
            seed: 21,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn model_for(ds: &RegionDataset, horizon: usize) -> MglModel {
        let cfg = ModelConfig {
            variant: Variant::Sr,
            stat_features: ds.stat_features(),
            reg_features: ds.reg_features(),
            node_count: 0,
            embed_dim: 0,
            graph_hidden: 0,
            seq_hidden: 6,
            node_embed_dim: 1,
            horizon,
            window: 7,
            output_dim: 2,
            cell: CellKind::Gru,
            softmax_head: false,
            tie_embeddings: false,
            separate_candidate_embeddings: false,
            graph_only: false,
        };
        MglModel::init(&cfg, 1).unwrap()
    }

    #[test]
    fn model_eval_report_shape() {
        let ds = dataset();
        let model = model_for(&ds, 2);
        let cfg = TrainConfig::default();
        let eval = evaluate_model_on_test(&model, &ds, &cfg, "SR").unwrap();
        assert_eq!(eval.per_target.len(), 2);
        let idx = chronological_split_indices(ds.len(), 0.2, 0.1).unwrap();
        let expect = idx.test.len() - 7 - 2 + 1;
        assert_eq!(eval.series.dates.len(), expect);
        assert_eq!(eval.per_target[0].metrics.n, expect);
        // all predicted dates fall inside the test range
        assert!(eval.series.dates.iter().all(|d| *d >= ds.dates[idx.test.start]));
    }

    #[test]
    fn perfect_stub_model_scores_perfectly() {
        // hand-built series where predicted == actual
        let dates: Vec<NaiveDate> =
            (0..4).map(|i| NaiveDate::from_ymd_opt(2021, 1, 1 + i).unwrap()).collect();
        let actual = vec![vec![10.0, 1.0], vec![12.0, 2.0], vec![14.0, 3.0], vec![16.0, 4.0]];
        let eval =
            build_eval("stub".into(), 1, dates, actual.clone(), actual).unwrap();
        assert_eq!(eval.macro_avg.mae, 0.0);
        assert_eq!(eval.macro_avg.rmse, 0.0);
        assert_eq!(eval.macro_avg.mape, Some(0.0));
        assert_eq!(eval.macro_avg.r2, Some(1.0));
    }

    #[test]
    fn baselines_produce_rows_on_test_windows() {
        let ds = dataset();
        let cfg = TrainConfig::default();
        for kind in BaselineKind::all() {
            let eval = evaluate_baseline_on_test(kind, &ds, 7, 2, &cfg).unwrap();
            assert_eq!(eval.label, kind.label());
            assert_eq!(eval.per_target.len(), 2);
            assert!(eval.macro_avg.mae.is_finite(), "{:?}", kind);
        }
    }

    #[test]
    fn last_day_baseline_is_exact_shift() {
        let ds = dataset();
        let cfg = TrainConfig::default();
        let eval = evaluate_baseline_on_test(BaselineKind::LastDay, &ds, 7, 3, &cfg).unwrap();
        let idx = chronological_split_indices(ds.len(), 0.2, 0.1).unwrap();
        // first prediction must equal the value on the last observed day
        let first_observed = idx.test.start + 7 - 1;
        assert_eq!(eval.series.predicted[0][0], ds.stat_series(0)[first_observed]);
    }

    #[test]
    fn aggregate_mean_std() {
        let a = aggregate(&[1.0, 2.0, 3.0]);
        assert_eq!(a.mean, 2.0);
        assert!((a.std - 1.0).abs() < 1e-12);
        let single = aggregate(&[5.0]);
        assert_eq!(single.std, 0.0);
    }

    #[test]
    fn aggregate_evals_shape() {
        let ds = dataset();
        let cfg = TrainConfig::default();
        let evals: Vec<ModelEval> = (0..3)
            .map(|_| evaluate_baseline_on_test(BaselineKind::Avg, &ds, 7, 1, &cfg).unwrap())
            .collect();
        let rows = aggregate_evals(&evals).unwrap();
        assert_eq!(rows.len(), 3); // two targets + macro
        assert_eq!(rows[2].target, "macro_avg");
        assert_eq!(rows[0].mae.n, 3);
        assert_eq!(rows[0].mae.std, 0.0); // identical runs
    }
}
