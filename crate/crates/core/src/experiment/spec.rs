use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::data::synthetic::SyntheticConfig;
use crate::data::{preprocess_with, load_dataset, load_raw, InteractionDataset, PreprocessConfig, PropensityParams, RawFormat};
use crate::eval::EvalProtocol;
use crate::model::{Mode, ModelConfig};
use crate::train::TrainConfig;
use crate::{Error, Result};

/// Environment variable naming the directory relative dataset paths resolve against.
pub const DATA_ROOT_ENV: &str = "DCR_DATA_ROOT";

pub fn data_root() -> PathBuf {
    std::env::var_os(DATA_ROOT_ENV).map_or_else(|| PathBuf::from("data"), PathBuf::from)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    MovielensDat,
    AmazonCsv,
    SteamJson,
    /// Generated in memory from `synthetic`.
    Synthetic,
    /// A dataset file written by `prepare`.
    Prepared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub id: String,
    pub source: DatasetSource,
    /// Relative paths resolve against the data root.
    pub path: Option<PathBuf>,
    pub preprocess: PreprocessConfig,
    pub synthetic: SyntheticConfig,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            id: "ml-1m".into(),
            source: DatasetSource::MovielensDat,
            path: Some(PathBuf::from("ml-1m/ratings.dat")),
            preprocess: PreprocessConfig::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

impl DatasetSpec {
    pub fn synthetic(cfg: SyntheticConfig) -> Self {
        Self {
            id: "synthetic".into(),
            source: DatasetSource::Synthetic,
            path: None,
            preprocess: PreprocessConfig::default(),
            synthetic: cfg,
        }
    }

    pub fn resolved_path(&self) -> Result<PathBuf> {
        let p = self
            .path
            .as_ref()
            .ok_or_else(|| Error::Config(format!("dataset `{}` needs a path", self.id)))?;
        Ok(if p.is_absolute() { p.clone() } else { data_root().join(p) })
    }

    pub fn load(&self) -> Result<InteractionDataset> {
        let raw_format = match self.source {
            DatasetSource::Synthetic => return self.synthetic.generate(),
            DatasetSource::Prepared => return load_dataset(self.resolved_path()?),
            DatasetSource::MovielensDat => RawFormat::MovielensDat,
            DatasetSource::AmazonCsv => RawFormat::AmazonCsv,
            DatasetSource::SteamJson => RawFormat::SteamJson,
        };
        let raw = load_raw(self.resolved_path()?, raw_format)?;
        preprocess_with(&raw, &self.preprocess)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExposureSpec {
    pub enabled: bool,
    /// Training-count boundaries of the popularity buckets.
    pub boundaries: Vec<u64>,
}

impl Default for ExposureSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            boundaries: vec![100, 250, 500, 1000],
        }
    }
}

/// Everything one training run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalProtocol,
    pub propensity: PropensityParams,
    pub exposure: ExposureSpec,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        if self.exposure.boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("exposure.boundaries must be strictly ascending".into()));
        }
        Ok(())
    }

    /// Copy with the value at a dotted path such as `model.alpha` replaced.
    pub fn with_value(&self, path: &str, value: &Value) -> Result<Self> {
        let mut json = serde_json::to_value(self)?;
        let mut slot = &mut json;
        for key in path.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|o| o.get_mut(key))
                .ok_or_else(|| Error::Config(format!("sweep path `{path}` does not name a config field")))?;
        }
        *slot = value.clone();
        serde_json::from_value(json).map_err(|e| Error::Config(format!("sweep value {value} for `{path}`: {e}")))
    }

    pub fn hash(&self) -> Result<String> {
        hash_json(&serde_json::to_value(self)?)
    }
}

pub(crate) fn hash_json(v: &Value) -> Result<String> {
    // serde_json maps are sorted, so the text is canonical
    let text = serde_json::to_string(v)?;
    let mut h = Sha256::new();
    h.update(crate::VERSION.as_bytes());
    h.update(text.as_bytes());
    Ok(hex::encode(h.finalize())[..16].to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Dotted config path, for example `model.gamma`.
    pub path: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub axes: Vec<SweepAxis>,
}

/// A TOML experiment description.
///
/// ```toml
/// name = "gamma"
/// repeat = 3
/// reference = "base_bce"
///
/// [dataset]
/// source = "synthetic"
///
/// [model]
/// encoder = "self_attention"
///
/// [[sweep.axes]]
/// path = "model.gamma"
/// values = [0.0, 0.5]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub name: String,
    pub output_dir: PathBuf,
    pub repeat: usize,
    /// Mode other rows are tested against when `model.mode` is a sweep axis.
    pub reference: Option<Mode>,
    pub dataset: DatasetSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalProtocol,
    pub propensity: PropensityParams,
    pub exposure: ExposureSpec,
    pub sweep: SweepSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            output_dir: PathBuf::from("runs"),
            repeat: 10,
            reference: None,
            dataset: DatasetSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalProtocol::default(),
            propensity: PropensityParams::default(),
            exposure: ExposureSpec::default(),
            sweep: SweepSpec::default(),
        }
    }
}

pub const C_AXIS: &str = "model.c";

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn base(&self) -> RunConfig {
        RunConfig {
            dataset: self.dataset.clone(),
            model: self.model.clone(),
            train: self.train.clone(),
            eval: self.eval.clone(),
            propensity: self.propensity,
            exposure: self.exposure.clone(),
        }
    }

    /// Axes that need retraining, in declaration order.
    pub fn training_axes(&self) -> impl Iterator<Item = &SweepAxis> {
        self.sweep.axes.iter().filter(|a| a.path != C_AXIS)
    }

    /// Values of the post-hoc `model.c` axis, if declared.
    pub fn c_values(&self) -> Result<Option<Vec<f64>>> {
        self.sweep
            .axes
            .iter()
            .find(|a| a.path == C_AXIS)
            .map(|a| {
                a.values
                    .iter()
                    .map(|v| {
                        v.as_f64()
                            .filter(|c| c.is_finite() && *c >= 0.0)
                            .ok_or_else(|| Error::Config(format!("model.c sweep value {v} is not a number >= 0")))
                    })
                    .collect()
            })
            .transpose()
    }

    /// Every combination of the training axes, applied to the base config.
    pub fn points(&self) -> Result<Vec<(Vec<(String, Value)>, RunConfig)>> {
        let mut out = vec![(Vec::new(), self.base())];
        for axis in self.training_axes() {
            let mut next = Vec::with_capacity(out.len() * axis.values.len());
            for (coords, cfg) in &out {
                for v in &axis.values {
                    let mut c = coords.clone();
                    c.push((axis.path.clone(), v.clone()));
                    next.push((c, cfg.with_value(&axis.path, v)?));
                }
            }
            out = next;
        }
        Ok(out)
    }

    /// Checks every field and every sweep point before anything runs.
    pub fn validate(&self) -> Result<()> {
        if self.repeat == 0 {
            return Err(Error::Config("repeat must be >= 1".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for a in &self.sweep.axes {
            if a.values.is_empty() {
                return Err(Error::Config(format!("sweep axis `{}` has no values", a.path)));
            }
            if !seen.insert(a.path.as_str()) {
                return Err(Error::Config(format!("sweep axis `{}` declared twice", a.path)));
            }
        }
        self.c_values()?;
        for (_, cfg) in self.points()? {
            cfg.validate()?;
        }
        Ok(())
    }

    /// Hash of everything except where outputs go.
    pub fn hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(o) = v.as_object_mut() {
            o.remove("output_dir");
        }
        hash_json(&v)
    }

    pub fn output_path(&self) -> Result<PathBuf> {
        Ok(self.output_dir.join(self.hash()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentSpec::from_toml("[model]\nalpah = 0.1\n").is_err());
        assert!(ExperimentSpec::from_toml("colour = 1\n").is_err());
        let ok = ExperimentSpec::from_toml("[model]\nalpha = 0.1\n").unwrap();
        assert_eq!(ok.model.alpha, 0.1);
    }

    #[test]
    fn sweep_points_and_paths() {
        let spec = ExperimentSpec::from_toml(
            r#"
            [[sweep.axes]]
            path = "model.mode"
            values = ["dcr", "base_bce"]
            [[sweep.axes]]
            path = "model.gamma"
            values = [0.0, 0.5, 5.0]
            [[sweep.axes]]
            path = "model.c"
            values = [0, 10]
            "#,
        )
        .unwrap();
        let pts = spec.points().unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1].1.model.gamma, 0.5);
        assert_eq!(pts[4].1.model.mode, Mode::BaseBce);
        assert_eq!(spec.c_values().unwrap(), Some(vec![0.0, 10.0]));

        let bad = "[[sweep.axes]]\npath = \"model.gama\"\nvalues = [1.0]\n";
        assert!(matches!(ExperimentSpec::from_toml(bad), Err(Error::Config(_))));
        let bad_value = "[[sweep.axes]]\npath = \"model.gamma\"\nvalues = [-1.0]\n";
        assert!(ExperimentSpec::from_toml(bad_value).is_err());
        let bad_type = "[[sweep.axes]]\npath = \"model.mode\"\nvalues = [\"dice\"]\n";
        assert!(ExperimentSpec::from_toml(bad_type).is_err());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentSpec::default();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.model.gamma = 0.0;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        let spec = ExperimentSpec::from_toml(&a.to_toml().unwrap()).unwrap();
        assert_eq!(spec, a);
    }
}
