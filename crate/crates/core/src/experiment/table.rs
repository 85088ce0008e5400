use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::C_AXIS;
use crate::eval::ExposureReport;
use crate::model::Mode;
use crate::{Error, Result};

pub const RESULTS_JSON: &str = "results.json";
pub const RESULTS_TSV: &str = "results.tsv";

/// One (sweep point, seed) run. Either both metrics or an error are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub seed: u64,
    pub run_hash: String,
    pub ndcg: Option<f64>,
    pub hit_rate: Option<f64>,
    /// Inference constant the metrics were taken at.
    pub c: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// Sweep coordinates as `(path, value)` pairs in axis order.
    pub point: Vec<(String, Value)>,
    pub cells: Vec<Cell>,
    pub mean_ndcg: Option<f64>,
    pub mean_hit_rate: Option<f64>,
    pub std_ndcg: Option<f64>,
    /// One-tailed Welch p-value against the reference mode, when one applies.
    pub p_value: Option<f64>,
    /// Exposure shares averaged over the successful seeds.
    pub exposure: Option<ExposureReport>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn sample_std(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    (v.len() > 1).then(|| (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

impl ResultRow {
    pub fn new(point: Vec<(String, Value)>, cells: Vec<Cell>, exposure: Option<ExposureReport>) -> Self {
        let nd: Vec<f64> = cells.iter().filter_map(|c| c.ndcg).collect();
        let hr: Vec<f64> = cells.iter().filter_map(|c| c.hit_rate).collect();
        Self {
            point,
            mean_ndcg: mean(&nd),
            mean_hit_rate: mean(&hr),
            std_ndcg: sample_std(&nd),
            cells,
            p_value: None,
            exposure,
        }
    }

    pub fn ndcg_values(&self) -> Vec<f64> {
        self.cells.iter().filter_map(|c| c.ndcg).collect()
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    /// Value of a sweep coordinate.
    pub fn coord(&self, path: &str) -> Option<&Value> {
        self.point.iter().find(|(k, _)| k == path).map(|(_, v)| v)
    }

    /// `path=value` pairs joined by commas, or `base` for the unswept point.
    pub fn label(&self) -> String {
        self.label_without(None)
    }

    pub fn label_without(&self, skip: Option<&str>) -> String {
        let parts: Vec<String> = self
            .point
            .iter()
            .filter(|(k, _)| Some(k.as_str()) != skip)
            .map(|(k, v)| format!("{k}={}", value_text(v)))
            .collect();
        if parts.is_empty() {
            "base".into()
        } else {
            parts.join(",")
        }
    }
}

pub(crate) fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Averages shares and Gini of several exposure reports over the same buckets.
pub fn mean_exposure(reports: &[ExposureReport]) -> Option<ExposureReport> {
    let first = reports.first()?;
    let n = reports.len() as f64;
    let mut shares = vec![0.0; first.shares.len()];
    for r in reports {
        for (s, x) in shares.iter_mut().zip(&r.shares) {
            *s += x / n;
        }
    }
    Some(ExposureReport {
        labels: first.labels.clone(),
        item_ratio: first.item_ratio.clone(),
        shares,
        gini: reports.iter().map(|r| r.gini).sum::<f64>() / n,
        k: first.k,
        num_users: first.num_users,
    })
}

/// Aggregated results of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub name: String,
    pub spec_hash: String,
    pub version: String,
    pub k: usize,
    pub reference: Option<Mode>,
    pub rows: Vec<ResultRow>,
    /// With a `model.c` axis: each training point at its validation-tuned `c`.
    /// Exposure reports live here in that case.
    #[serde(default)]
    pub tuned: Vec<ResultRow>,
}

impl ResultTable {
    /// Sweep paths in the order they appear in the rows.
    pub fn axes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            for (k, _) in &r.point {
                if !out.contains(k) {
                    out.push(k.clone());
                }
            }
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        super::runner::write_json(&dir.join(RESULTS_JSON), &serde_json::to_value(self)?)?;
        let p = dir.join(RESULTS_TSV);
        std::fs::write(&p, self.to_tsv()).map_err(|e| Error::io(&p, e))
    }

    /// Reads `results.json` from an experiment directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let p = if dir.is_dir() { dir.join(RESULTS_JSON) } else { dir.to_path_buf() };
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// One line per (sweep point, seed); failed runs carry their error.
    pub fn to_tsv(&self) -> String {
        let axes = self.axes();
        let mut out = String::new();
        let mut header: Vec<String> = axes.clone();
        header.extend(["seed", "run_hash", "c", "ndcg", "hit_rate", "status"].map(String::from));
        out.push_str(&header.join("\t"));
        out.push('\n');
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        for r in self.rows.iter().chain(&self.tuned) {
            for c in &r.cells {
                let mut cols: Vec<String> = axes
                    .iter()
                    .map(|a| r.coord(a).map_or_else(|| if a == C_AXIS { "tuned".into() } else { String::new() }, value_text))
                    .collect();
                cols.push(c.seed.to_string());
                cols.push(c.run_hash.clone());
                cols.push(opt(c.c));
                cols.push(opt(c.ndcg));
                cols.push(opt(c.hit_rate));
                cols.push(match &c.error {
                    None => "ok".into(),
                    Some(e) => format!("FAILED: {}", e.replace(['\t', '\n'], " ")),
                });
                out.push_str(&cols.join("\t"));
                out.push('\n');
            }
        }
        out
    }

    /// Rows that carry exposure reports.
    pub fn exposure_rows(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().chain(&self.tuned).filter(|r| r.exposure.is_some())
    }

    /// Plain-text summary with per-seed values.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} ({}, {})", self.name, self.spec_hash, self.version);
        if let Some(r) = self.reference {
            let _ = writeln!(s, "p-values: one-tailed Welch test against {r}");
        }
        render_rows(&mut s, &self.rows, self.k);
        if !self.tuned.is_empty() {
            let _ = writeln!(s, "\nat the validation-tuned c:");
            render_rows(&mut s, &self.tuned, self.k);
        }
        for r in self.exposure_rows() {
            let e = r.exposure.as_ref().expect("filtered");
            let parts: Vec<String> = e
                .labels
                .iter()
                .zip(e.item_ratio.iter().zip(&e.shares))
                .map(|(l, (ir, sh))| format!("{l}: items {ir:.3} exposure {sh:.3}"))
                .collect();
            let _ = writeln!(s, "exposure {} (gini {:.4}): {}", r.label(), e.gini, parts.join("; "));
        }
        s
    }
}

fn render_rows(s: &mut String, rows: &[ResultRow], k: usize) {
    let labels: Vec<String> = rows.iter().map(ResultRow::label).collect();
    let w = labels.iter().map(String::len).max().unwrap_or(4).max(5);
    let _ = writeln!(
        s,
        "{:<w$}  {:>9}  {:>8}  {:>9}  {:>8}  {:>6}  per-seed NDCG@{k}",
        "point",
        format!("NDCG@{k}"),
        "std",
        format!("HR@{k}"),
        "p",
        "failed"
    );
    let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    for (r, label) in rows.iter().zip(&labels) {
        let seeds: Vec<String> = r
            .cells
            .iter()
            .map(|c| c.ndcg.map_or_else(|| "FAILED".to_string(), |x| format!("{x:.4}")))
            .collect();
        let _ = writeln!(
            s,
            "{label:<w$}  {:>9}  {:>8}  {:>9}  {:>8}  {:>6}  {}",
            f(r.mean_ndcg),
            f(r.std_ndcg),
            f(r.mean_hit_rate),
            r.p_value.map_or_else(|| "-".to_string(), |p| format!("{p:.2e}")),
            r.failures(),
            seeds.join(" ")
        );
    }
}
