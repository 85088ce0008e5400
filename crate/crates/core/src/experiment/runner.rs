use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde_json::Value;

use super::table::{mean_exposure, Cell, ResultRow, ResultTable};
use super::{ExperimentSpec, RunConfig, C_AXIS};
use crate::data::{compute_propensities, popularity_buckets, InteractionDataset, ItemIdx, PropensityTable, UserIdx};
use crate::eval::{evaluate_c_grid, exposure_analysis, test_cases, welch_one_tailed, EvalReport, MetricPoint};
use crate::model::{save_checkpoint, Mode, Recommender};
use crate::train::{fit, MetricsLog, TrainState};
use crate::{Error, Result};

pub const REPORT_FILE: &str = "report.kv";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const STATE_FILE: &str = "state.json";

/// Result of one training run, possibly read back from an earlier identical run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_hash: String,
    pub dir: PathBuf,
    pub report: EvalReport,
    pub cached: bool,
}

/// Propensities from training-prefix counts, the only counts a fitted model may see.
pub fn propensities_for(ds: &InteractionDataset, cfg: &RunConfig) -> Result<PropensityTable> {
    compute_propensities(&ds.fit_view().train_counts(), cfg.propensity)
}

/// Train/validation history used to score each user's test item.
pub fn test_histories(ds: &InteractionDataset) -> Vec<(UserIdx, Vec<ItemIdx>)> {
    (0..ds.num_users())
        .map(|u| {
            let s = ds.split(u as UserIdx);
            let mut h = s.train.to_vec();
            h.push(s.validation);
            (u as UserIdx, h)
        })
        .collect()
}

/// Fits one model and evaluates it on the test split.
///
/// `extra_c` are additional inference constants to report next to the tuned
/// one. Nothing is written unless `dir` is given.
pub fn train_and_evaluate(
    cfg: &RunConfig,
    ds: &InteractionDataset,
    extra_c: &[f64],
    dir: Option<&Path>,
) -> Result<(Recommender, TrainState, EvalReport)> {
    cfg.validate()?;
    let props = propensities_for(ds, cfg)?;
    let mut model = Recommender::new(cfg.model.clone(), ds.num_users(), ds.num_items(), cfg.train.seed)?;
    let mut log = dir.map(|d| MetricsLog::create(d.join(METRICS_FILE))).transpose()?;
    let state = fit(&mut model, &ds.fit_view(), &props, &cfg.train, &cfg.eval, log.as_mut())?;
    let report = evaluate_test(&model, ds, cfg, &props, extra_c)?;
    Ok((model, state, report))
}

/// Test-split report at the model's `c` plus any `extra_c`.
pub fn evaluate_test(
    model: &Recommender,
    ds: &InteractionDataset,
    cfg: &RunConfig,
    props: &PropensityTable,
    extra_c: &[f64],
) -> Result<EvalReport> {
    let c = model.config().c;
    let mut grid = vec![c];
    if model.config().mode.uses_counterfactual() {
        grid.extend(extra_c.iter().copied().filter(|x| *x != c));
    }
    let cases = test_cases(ds, &cfg.eval)?;
    let points = evaluate_c_grid(model, &cases, &grid, &cfg.eval, props)?;
    let exposure = if cfg.exposure.enabled {
        let buckets = popularity_buckets(&ds.train_counts(), &cfg.exposure.boundaries)?;
        let hist = test_histories(ds);
        let users: Vec<(UserIdx, &[ItemIdx])> = hist.iter().map(|(u, h)| (*u, h.as_slice())).collect();
        Some(exposure_analysis(model, &users, cfg.eval.k, &buckets, c, cfg.eval.threads)?)
    } else {
        None
    };
    let mut c_grid = points.clone();
    c_grid.sort_by(|a, b| a.c.total_cmp(&b.c));
    Ok(EvalReport {
        version: crate::VERSION.into(),
        config_hash: cfg.hash()?,
        seed: cfg.train.seed,
        split: "test".into(),
        reweighting: cfg.eval.reweighting,
        k: cfg.eval.k,
        num_cases: cases.len(),
        c,
        ndcg: points[0].ndcg,
        hit_rate: points[0].hit_rate,
        c_grid,
        exposure,
    })
}

/// Runs one config into `root/runs/<hash>`, reusing a finished run with the same hash.
pub fn run_cached(cfg: &RunConfig, ds: &InteractionDataset, extra_c: &[f64], root: &Path) -> Result<RunOutcome> {
    let run_hash = cfg.hash()?;
    let dir = root.join("runs").join(&run_hash);
    let report_path = dir.join(REPORT_FILE);
    if report_path.exists() {
        let mut report = EvalReport::load(&report_path)?;
        if report.config_hash != run_hash {
            return Err(Error::Precondition(format!("{} belongs to another config", report_path.display())));
        }
        let missing: Vec<f64> = extra_c
            .iter()
            .copied()
            .filter(|c| !report.c_grid.iter().any(|p| p.c == *c))
            .collect();
        if !missing.is_empty() && cfg.model.mode.uses_counterfactual() {
            // evaluation is deterministic, so extra c values come from the saved model without rewriting the run
            let model = crate::model::load_checkpoint(dir.join(CHECKPOINT_FILE))?;
            let props = propensities_for(ds, cfg)?;
            let cases = test_cases(ds, &cfg.eval)?;
            report.c_grid.extend(evaluate_c_grid(&model, &cases, &missing, &cfg.eval, &props)?);
            report.c_grid.sort_by(|a, b| a.c.total_cmp(&b.c));
        }
        return Ok(RunOutcome {
            run_hash,
            dir,
            report,
            cached: true,
        });
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_json(&dir.join("config.json"), &serde_json::to_value(cfg)?)?;
    let (model, state, report) = train_and_evaluate(cfg, ds, extra_c, Some(&dir))?;
    save_checkpoint(dir.join(CHECKPOINT_FILE), &model)?;
    write_json(&dir.join(STATE_FILE), &serde_json::to_value(&state)?)?;
    // the report is written last and marks the run as complete
    report.save(&report_path)?;
    Ok(RunOutcome {
        run_hash,
        dir,
        report,
        cached: false,
    })
}

pub(crate) fn write_json(path: &Path, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Every (sweep point, seed) run of a spec, aggregated into a result table.
///
/// Outputs live under `spec.output_path()`, keyed by hashes, so re-running a
/// spec reuses finished runs instead of overwriting them. A failed run becomes
/// a cell with an error message rather than aborting the sweep.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultTable> {
    spec.validate()?;
    let root = spec.output_path()?;
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let spec_text = spec.to_toml()?;
    std::fs::write(root.join("spec.toml"), spec_text).map_err(|e| Error::io(&root, e))?;

    let c_values = spec.c_values()?;
    let extra_c = c_values.clone().unwrap_or_default();
    let mut datasets: HashMap<String, std::result::Result<InteractionDataset, String>> = HashMap::new();
    let mut rows = Vec::new();
    let mut tuned = Vec::new();

    for (coords, base) in spec.points()? {
        let key = serde_json::to_string(&base.dataset)?;
        let ds = datasets.entry(key).or_insert_with(|| {
            log::info!("loading dataset {}", base.dataset.id);
            base.dataset.load().map_err(|e| e.to_string())
        });
        let mut outcomes = Vec::with_capacity(spec.repeat);
        for k in 0..spec.repeat {
            let mut cfg = base.clone();
            cfg.train.seed = base.train.seed + k as u64;
            let seed = cfg.train.seed;
            let run_hash = cfg.hash()?;
            let outcome = match ds {
                Ok(ds) => run_cached(&cfg, ds, &extra_c, &root).map_err(|e| e.to_string()),
                Err(e) => Err(format!("dataset: {e}")),
            };
            match &outcome {
                Ok(o) => log::info!("run {} seed {seed}: ndcg {:.4}{}", o.run_hash, o.report.ndcg, if o.cached { " (cached)" } else { "" }),
                Err(e) => log::warn!("run {run_hash} seed {seed} failed: {e}"),
            }
            outcomes.push((seed, run_hash, outcome));
        }
        match &c_values {
            None => rows.push(row_from(coords, &outcomes, None)),
            Some(cs) => {
                for &c in cs {
                    let mut at = coords.clone();
                    at.push((C_AXIS.to_string(), Value::from(c)));
                    rows.push(row_from(at, &outcomes, Some(c)));
                }
                tuned.push(row_from(coords, &outcomes, None));
            }
        }
    }

    let mut table = ResultTable {
        name: spec.name.clone(),
        spec_hash: spec.hash()?,
        version: crate::VERSION.into(),
        k: spec.eval.k,
        reference: spec.reference,
        rows,
        tuned,
    };
    attach_p_values(&mut table.rows, table.reference);
    attach_p_values(&mut table.tuned, table.reference);
    table.save(&root)?;
    Ok(table)
}

fn row_from(point: Vec<(String, Value)>, outcomes: &[(u64, String, std::result::Result<RunOutcome, String>)], c: Option<f64>) -> ResultRow {
    let mut exposures = Vec::new();
    let cells = outcomes
        .iter()
        .map(|(seed, run_hash, o)| {
            let metric = o.as_ref().map_err(Clone::clone).and_then(|o| {
                let r = &o.report;
                let p = match c {
                    None => MetricPoint {
                        c: r.c,
                        ndcg: r.ndcg,
                        hit_rate: r.hit_rate,
                    },
                    Some(c) => *r
                        .c_grid
                        .iter()
                        .find(|p| p.c == c)
                        // models without a counterfactual adjustment score the same at every c
                        .or_else(|| r.c_grid.first().filter(|_| r.c_grid.len() == 1))
                        .ok_or_else(|| format!("c = {c} was not evaluated"))?,
                };
                // exposure is measured at the tuned c only
                if let (None, Some(e)) = (c, &r.exposure) {
                    exposures.push(e.clone());
                }
                Ok(p)
            });
            match metric {
                Ok(p) => Cell {
                    seed: *seed,
                    run_hash: run_hash.clone(),
                    ndcg: Some(p.ndcg),
                    hit_rate: Some(p.hit_rate),
                    c: Some(p.c),
                    error: None,
                },
                Err(e) => Cell {
                    seed: *seed,
                    run_hash: run_hash.clone(),
                    ndcg: None,
                    hit_rate: None,
                    c: None,
                    error: Some(e),
                },
            }
        })
        .collect();
    ResultRow::new(point, cells, mean_exposure(&exposures))
}

/// One-tailed Welch p-value of each row against the reference-mode row that
/// shares its other coordinates.
fn attach_p_values(rows: &mut [ResultRow], reference: Option<Mode>) {
    let Some(reference) = reference else { return };
    let mode_key = "model.mode";
    let others = |r: &ResultRow| -> Vec<(String, Value)> { r.point.iter().filter(|(k, _)| k != mode_key).cloned().collect() };
    let mode_of = |r: &ResultRow| -> Option<Mode> {
        r.point
            .iter()
            .find(|(k, _)| k == mode_key)
            .and_then(|(_, v)| v.as_str())
            .and_then(|s| s.parse().ok())
    };
    let snapshot: Vec<(Vec<(String, Value)>, Option<Mode>, Vec<f64>)> =
        rows.iter().map(|r| (others(r), mode_of(r), r.ndcg_values())).collect();
    for (row, (key, mode, values)) in rows.iter_mut().zip(&snapshot) {
        if *mode == Some(reference) {
            continue;
        }
        let reference_values = snapshot
            .iter()
            .find(|(k, m, _)| k == key && *m == Some(reference))
            .map(|(_, _, v)| v);
        row.p_value = reference_values.and_then(|b| welch_one_tailed(values, b).ok());
    }
}
