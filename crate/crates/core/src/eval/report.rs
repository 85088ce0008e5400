//! Flat `key=value` report files, one per run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExposureReport, MetricPoint, Reweighting};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    /// `validation` or `test`.
    pub split: String,
    pub reweighting: Reweighting,
    pub k: usize,
    pub num_cases: usize,
    /// Inference constant the headline metrics use.
    pub c: f64,
    pub ndcg: f64,
    pub hit_rate: f64,
    /// Metrics at every evaluated `c`, including the headline one.
    pub c_grid: Vec<MetricPoint>,
    pub exposure: Option<ExposureReport>,
}

fn reweighting_tag(r: Reweighting) -> &'static str {
    match r {
        Reweighting::Ipw => "ipw",
        Reweighting::RawCount => "raw_count",
        Reweighting::None => "none",
    }
}

impl EvalReport {
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = vec![
            ("version".into(), self.version.clone()),
            ("config_hash".into(), self.config_hash.clone()),
            ("seed".into(), self.seed.to_string()),
            ("split".into(), self.split.clone()),
            ("reweighting".into(), reweighting_tag(self.reweighting).into()),
            ("k".into(), self.k.to_string()),
            ("num_cases".into(), self.num_cases.to_string()),
            ("c".into(), self.c.to_string()),
            ("ndcg".into(), self.ndcg.to_string()),
            ("hit_rate".into(), self.hit_rate.to_string()),
        ];
        for (j, p) in self.c_grid.iter().enumerate() {
            kv.push((format!("c_grid.{j}.c"), p.c.to_string()));
            kv.push((format!("c_grid.{j}.ndcg"), p.ndcg.to_string()));
            kv.push((format!("c_grid.{j}.hit_rate"), p.hit_rate.to_string()));
        }
        if let Some(e) = &self.exposure {
            kv.push(("exposure.k".into(), e.k.to_string()));
            kv.push(("exposure.num_users".into(), e.num_users.to_string()));
            kv.push(("exposure.gini".into(), e.gini.to_string()));
            for (b, label) in e.labels.iter().enumerate() {
                kv.push((format!("exposure.bucket.{b}.label"), label.clone()));
                kv.push((format!("exposure.bucket.{b}.item_ratio"), e.item_ratio[b].to_string()));
                kv.push((format!("exposure.bucket.{b}.share"), e.shares[b].to_string()));
            }
        }
        kv
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: "expected key=value".into(),
            })?;
            map.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| -> Result<&String> {
            map.get(k).ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing key `{k}`"),
            })
        };
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Parse {
                line: 0,
                message: format!("bad value for `{k}`: {v}"),
            })
        }
        let reweighting = match get("reweighting")?.as_str() {
            "ipw" => Reweighting::Ipw,
            "raw_count" => Reweighting::RawCount,
            "none" => Reweighting::None,
            other => {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("unknown reweighting `{other}`"),
                })
            }
        };
        let mut c_grid = Vec::new();
        while map.contains_key(&format!("c_grid.{}.c", c_grid.len())) {
            let j = c_grid.len();
            let f = |s: &str| -> Result<f64> {
                let k = format!("c_grid.{j}.{s}");
                num(&k, get(&k)?)
            };
            c_grid.push(MetricPoint {
                c: f("c")?,
                ndcg: f("ndcg")?,
                hit_rate: f("hit_rate")?,
            });
        }
        let exposure = if map.contains_key("exposure.k") {
            let (mut labels, mut item_ratio, mut shares) = (Vec::new(), Vec::new(), Vec::new());
            while let Some(l) = map.get(&format!("exposure.bucket.{}.label", labels.len())) {
                let b = labels.len();
                labels.push(l.clone());
                let k = format!("exposure.bucket.{b}.item_ratio");
                item_ratio.push(num(&k, get(&k)?)?);
                let k = format!("exposure.bucket.{b}.share");
                shares.push(num(&k, get(&k)?)?);
            }
            Some(ExposureReport {
                labels,
                item_ratio,
                shares,
                gini: num("exposure.gini", get("exposure.gini")?)?,
                k: num("exposure.k", get("exposure.k")?)?,
                num_users: num("exposure.num_users", get("exposure.num_users")?)?,
            })
        } else {
            None
        };
        Ok(Self {
            version: get("version")?.clone(),
            config_hash: get("config_hash")?.clone(),
            seed: num("seed", get("seed")?)?,
            split: get("split")?.clone(),
            reweighting,
            k: num("k", get("k")?)?,
            num_cases: num("num_cases", get("num_cases")?)?,
            c: num("c", get("c")?)?,
            ndcg: num("ndcg", get("ndcg")?)?,
            hit_rate: num("hit_rate", get("hit_rate")?)?,
            c_grid,
            exposure,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
