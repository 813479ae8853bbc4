//! Implementations behind the CLI subcommands. Each command is a plain
//! function over a [`RunConfig`] so integration tests can drive them
//! without spawning processes. All outputs are deterministic for a fixed
//! seed; only the elapsed-seconds column of training logs varies.

use crate::baselines::BaselineKind;
use crate::dataio::{
    lagged_pearson, write_embeddings, write_stats_csv, write_stringency_csv, EmbeddingsFile,
    RegionDataset, StatsTable, StringencyTable, REG_COLUMNS, STAT_COLUMNS,
};
use crate::error::{Error, Result};
use crate::eval::{aggregate, aggregate_evals, evaluate_baseline_on_test, evaluate_model_on_test, AggregateRow, ModelEval};
use crate::model::{MglModel, ModelConfig, Variant};
use crate::report::{
    correlation_csv, metrics_csv, metrics_text_table, prediction_series_csv, training_log_csv,
    write_text,
};
use crate::runconfig::RunConfig;
use crate::synth::synth_generate;
use crate::training::train;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn variant_label(v: Variant) -> &'static str {
    match v {
        Variant::Sr => "SR",
        Variant::Se => "SE",
        Variant::Sre => "SRE",
        Variant::LstmOnly => "LSTM",
    }
}

/// Generate the synthetic dataset files: stats CSV, stringency CSV, and the
/// MGEB embedding tensor with its manifest.
pub fn cmd_synth(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out_dir)?;
    let synth_cfg = cfg.synth.clone().unwrap_or_default();
    let ds = synth_generate(&synth_cfg)?;

    let stats_path = out_dir.join("stats.csv");
    let stats = StatsTable {
        dates: ds.dates.clone(),
        values: (0..ds.len()).map(|t| [ds.stats.at2(t, 0), ds.stats.at2(t, 1)]).collect(),
    };
    write_stats_csv(&stats_path, &stats)?;

    let stringency_path = out_dir.join("stringency.csv");
    let stringency = StringencyTable {
        dates: ds.dates.clone(),
        values: (0..ds.len())
            .map(|t| [ds.regulations.at2(t, 0), ds.regulations.at2(t, 1)])
            .collect(),
    };
    write_stringency_csv(&stringency_path, &stringency)?;

    let emb_path = out_dir.join("embeddings.mgeb");
    let emb = EmbeddingsFile {
        start_date: ds.dates[0],
        region: ds.region.clone(),
        source: "synthetic-generator".into(),
        data: ds.embeddings.clone().expect("generator always emits embeddings"),
    };
    write_embeddings(&emb_path, &emb)?;

    Ok(vec![stats_path, stringency_path, emb_path])
}

/// Lagged Pearson correlation of every signal against every statistic
/// target for lags 0..=max_lag. Constant slices become "undefined" rows.
pub fn cmd_correlate(cfg: &RunConfig, out_dir: &Path, max_lag: usize) -> Result<PathBuf> {
    ensure_dir(out_dir)?;
    let ds = cfg.load_dataset(false)?;
    let mut signals: Vec<(String, Vec<f64>)> = Vec::new();
    for (c, name) in STAT_COLUMNS.iter().enumerate() {
        signals.push((name.to_string(), ds.stat_series(c)));
    }
    for (c, name) in REG_COLUMNS.iter().enumerate() {
        signals.push((name.to_string(), ds.reg_series(c)));
    }
    if let Some(norms) = ds.embedding_mean_norm_series() {
        signals.push(("embedding_mean_norm".to_string(), norms));
    }

    let mut rows: Vec<(String, String, i64, Option<f64>)> = Vec::new();
    for (signal_name, signal) in &signals {
        for (c, target_name) in STAT_COLUMNS.iter().enumerate() {
            let target = ds.stat_series(c);
            for lag in 0..=max_lag as i64 {
                let r = match lagged_pearson(signal, &target, lag) {
                    Ok(v) => Some(v),
                    Err(Error::UndefinedMetric(_)) => None,
                    Err(e) => return Err(e),
                };
                rows.push((signal_name.clone(), target_name.to_string(), lag, r));
            }
        }
    }
    let path = out_dir.join("correlations.csv");
    write_text(&path, &correlation_csv(&rows))?;
    Ok(path)
}

/// Fill dataset-derived dimensions a config leaves at zero.
pub fn resolve_model_config(base: &ModelConfig, ds: &RegionDataset) -> ModelConfig {
    let mut cfg = base.clone();
    if cfg.stat_features == 0 {
        cfg.stat_features = ds.stat_features();
    }
    if cfg.reg_features == 0 {
        cfg.reg_features = ds.reg_features();
    }
    if cfg.variant.uses_graph() {
        if cfg.node_count == 0 {
            cfg.node_count = ds.node_count();
        }
        if cfg.embed_dim == 0 {
            cfg.embed_dim = ds.embed_dim();
        }
        if cfg.graph_hidden == 0 {
            cfg.graph_hidden = 8;
        }
    }
    if cfg.has_seq_branch() && cfg.seq_hidden == 0 {
        cfg.seq_hidden = 16;
    }
    if cfg.output_dim == 0 {
        cfg.output_dim = ds.stat_features();
    }
    cfg
}

pub fn checkpoint_name(horizon: usize, seed: u64) -> String {
    format!("model_T{horizon}_seed{seed}.mglm")
}

/// Train one checkpoint per (seed, horizon) pair and write training logs.
pub fn cmd_train(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out_dir)?;
    let model_base = cfg.model_config()?.clone();
    let ds = cfg.load_dataset(model_base.variant.uses_graph())?;
    let train_base = cfg.train_config();
    let mut checkpoints = Vec::new();
    for &horizon in &cfg.horizons {
        for &seed in &cfg.seeds {
            let mut mc = resolve_model_config(&model_base, &ds);
            mc.horizon = horizon;
            mc.window = train_base.window;
            mc.validate()?;
            let model = MglModel::init(&mc, seed)?;
            let mut tc = train_base.clone();
            tc.seed = seed;
            let outcome = train(model, &ds, &tc)?;
            let ckpt = out_dir.join(checkpoint_name(horizon, seed));
            outcome.model.save(&ckpt)?;
            let log_path = out_dir.join(format!("train_T{horizon}_seed{seed}.csv"));
            write_text(&log_path, &training_log_csv(&outcome.log))?;
            println!(
                "trained {} (best val MSE {:.6} at epoch {})",
                ckpt.display(),
                outcome.best_val_mse,
                outcome.best_epoch
            );
            checkpoints.push(ckpt);
        }
    }
    Ok(checkpoints)
}

/// Evaluate checkpoints (and optionally the baselines) on the test split;
/// emits the aggregated metric table plus per-run prediction series.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    checkpoints: &[PathBuf],
    out_dir: &Path,
    with_baselines: bool,
) -> Result<()> {
    if checkpoints.is_empty() {
        return Err(Error::Config("no checkpoints given to evaluate".into()));
    }
    ensure_dir(out_dir)?;
    let train_cfg = cfg.train_config();

    let mut loaded: Vec<(PathBuf, MglModel)> = Vec::new();
    let mut need_embeddings = false;
    for path in checkpoints {
        let model = MglModel::load(path)?;
        need_embeddings |= model.config.variant.uses_graph();
        loaded.push((path.clone(), model));
    }
    let ds = cfg.load_dataset(need_embeddings)?;

    // (horizon, label) → evaluations across seeds
    let mut groups: BTreeMap<(usize, String), Vec<ModelEval>> = BTreeMap::new();
    for (path, model) in &loaded {
        let label = variant_label(model.config.variant).to_string();
        let eval = evaluate_model_on_test(model, &ds, &train_cfg, &label)?;
        let stem = path.file_stem().unwrap_or_default().to_string_lossy();
        let pred_path = out_dir.join(format!("pred_{stem}.csv"));
        write_text(&pred_path, &prediction_series_csv(&eval.series))?;
        groups.entry((model.config.horizon, label)).or_default().push(eval);
    }

    let horizons: Vec<usize> = {
        let mut h: Vec<usize> = groups.keys().map(|(h, _)| *h).collect();
        h.dedup();
        h
    };
    if with_baselines {
        let window = train_cfg.window;
        for &horizon in &horizons {
            for kind in BaselineKind::all() {
                let eval = evaluate_baseline_on_test(kind, &ds, window, horizon, &train_cfg)?;
                let pred_path =
                    out_dir.join(format!("pred_{}_T{horizon}.csv", kind.label().to_lowercase()));
                write_text(&pred_path, &prediction_series_csv(&eval.series))?;
                groups.entry((horizon, kind.label().to_string())).or_default().push(eval);
            }
        }
    }

    let mut rows: Vec<AggregateRow> = Vec::new();
    for evals in groups.values() {
        rows.extend(aggregate_evals(evals)?);
    }
    write_text(&out_dir.join("report.csv"), &metrics_csv(&rows))?;
    let table = metrics_text_table(&rows);
    write_text(&out_dir.join("report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

/// Evaluate only the baselines over the configured horizons.
pub fn cmd_baseline(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    ensure_dir(out_dir)?;
    let ds = cfg.load_dataset(false)?;
    let train_cfg = cfg.train_config();
    let mut rows: Vec<AggregateRow> = Vec::new();
    for &horizon in &cfg.horizons {
        for kind in BaselineKind::all() {
            let eval = evaluate_baseline_on_test(kind, &ds, train_cfg.window, horizon, &train_cfg)?;
            let pred_path =
                out_dir.join(format!("pred_{}_T{horizon}.csv", kind.label().to_lowercase()));
            write_text(&pred_path, &prediction_series_csv(&eval.series))?;
            rows.extend(aggregate_evals(&[eval])?);
        }
    }
    write_text(&out_dir.join("baseline_report.csv"), &metrics_csv(&rows))?;
    let table = metrics_text_table(&rows);
    write_text(&out_dir.join("baseline_report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

/// Node-count ablation: train the graph variant on the first k nodes for
/// each requested k and emit the comparison table.
pub fn cmd_ablate(cfg: &RunConfig, out_dir: &Path, node_counts: &[usize]) -> Result<()> {
    if node_counts.is_empty() {
        return Err(Error::Config("ablation needs at least one node count".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for k in node_counts {
        if !seen.insert(*k) {
            return Err(Error::Config(format!("duplicate node count {k}")));
        }
    }
    ensure_dir(out_dir)?;
    let model_base = cfg.model_config()?.clone();
    if !model_base.variant.uses_graph() {
        return Err(Error::Config(
            "ablation requires a graph variant (SE or SRE)".into(),
        ));
    }
    let ds = cfg.load_dataset(true)?;
    for &k in node_counts {
        if k == 0 || k > ds.node_count() {
            return Err(Error::Config(format!(
                "node count {k} outside 1..={}",
                ds.node_count()
            )));
        }
    }
    let train_base = cfg.train_config();
    let horizon = cfg.horizons[0];

    let mut csv = String::from(
        "node_count,mae_mean,mae_std,rmse_mean,rmse_std,seeds\n",
    );
    for &k in node_counts {
        let ds_k = ds.take_nodes(k)?;
        let mut maes = Vec::new();
        let mut rmses = Vec::new();
        for &seed in &cfg.seeds {
            let mut mc = resolve_model_config(&model_base, &ds_k);
            mc.node_count = k;
            mc.horizon = horizon;
            mc.window = train_base.window;
            mc.validate()?;
            let model = MglModel::init(&mc, seed)?;
            let mut tc = train_base.clone();
            tc.seed = seed;
            let outcome = train(model, &ds_k, &tc)?;
            let eval = evaluate_model_on_test(&outcome.model, &ds_k, &tc, "ablate")?;
            maes.push(eval.macro_avg.mae);
            rmses.push(eval.macro_avg.rmse);
        }
        let mae = aggregate(&maes);
        let rmse = aggregate(&rmses);
        csv.push_str(&format!(
            "{k},{:.4},{:.4},{:.4},{:.4},{}\n",
            mae.mean, mae.std, rmse.mean, rmse.std, maes.len()
        ));
        println!("nodes {k}: MAE {:.2} ± {:.2}", mae.mean, mae.std);
    }
    write_text(&out_dir.join("ablation.csv"), &csv)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SynthConfig;

    fn synth_run_config(dir: &Path, tdays: usize, nodes: usize) -> RunConfig {
        let mut cfg: RunConfig = toml::from_str("").unwrap();
        cfg.synth = Some(SynthConfig {
            tdays,
            nodes,
            embed_dim: 3,
            lag: 3,
            seed: 9,
            ..SynthConfig::default()
        });
        cfg.data = Some(crate::runconfig::DataConfig {
            stats: dir.join("stats.csv"),
            stringency: dir.join("stringency.csv"),
            embeddings: Some(dir.join("embeddings.mgeb")),
            roc_period: 7,
            region: None,
        });
        cfg
    }

    #[test]
    fn synth_roundtrips_through_align() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = synth_run_config(dir.path(), 60, 4);
        let files = cmd_synth(&cfg, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let ds = cfg.load_dataset(true).unwrap();
        assert_eq!(ds.len(), 60);
        assert_eq!(ds.node_count(), 4);
        // stats CSV line count: header + rows
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(text.lines().count(), 61);
    }

    #[test]
    fn synth_rerun_is_byte_identical() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let cfg1 = synth_run_config(dir1.path(), 40, 3);
        let cfg2 = synth_run_config(dir2.path(), 40, 3);
        cmd_synth(&cfg1, dir1.path()).unwrap();
        cmd_synth(&cfg2, dir2.path()).unwrap();
        for name in ["stats.csv", "stringency.csv", "embeddings.mgeb"] {
            let a = std::fs::read(dir1.path().join(name)).unwrap();
            let b = std::fs::read(dir2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between reruns");
        }
    }

    #[test]
    fn correlate_emits_self_correlation_one() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = synth_run_config(dir.path(), 80, 3);
        cmd_synth(&cfg, dir.path()).unwrap();
        let path = cmd_correlate(&cfg, dir.path(), 5).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let self_row = text
            .lines()
            .find(|l| l.starts_with("new_cases,new_cases,0,"))
            .expect("self correlation row");
        let r: f64 = self_row.rsplit(',').next().unwrap().parse().unwrap();
        assert!((r - 1.0).abs() < 1e-9);
        // max_lag 0 → exactly one lag per (signal, target) pair
        let single = cmd_correlate(&cfg, dir.path(), 0).unwrap();
        let text = std::fs::read_to_string(single).unwrap();
        assert!(text.lines().skip(1).all(|l| l.split(',').nth(2) == Some("0")));
    }
}
