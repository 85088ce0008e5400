use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::loss::LossComponents;
use crate::{Error, Result};

/// One line of the per-epoch metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Epoch means, in [`LossComponents::NAMES`] order; `None` for unused terms.
    pub losses: Vec<Option<f64>>,
    pub total: f64,
    pub val_ndcg: f64,
    pub val_hit_rate: f64,
    /// `c` at which the validation metrics were reached.
    pub val_c: f64,
    pub seconds: f64,
}

/// Tab-separated log with a header line, appended to after every epoch.
pub struct MetricsLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsLog {
    pub fn header() -> String {
        let mut cols = vec!["epoch".to_string()];
        cols.extend(LossComponents::NAMES.iter().map(|n| format!("loss_{n}")));
        cols.extend(["loss_total", "val_ndcg", "val_hit_rate", "val_c", "seconds"].map(String::from));
        cols.join("\t")
    }

    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut log = Self {
            out: BufWriter::new(file),
            path,
        };
        let h = Self::header();
        log.line(&h)?;
        Ok(log)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn append(&mut self, r: &EpochRecord) -> Result<()> {
        let mut cols = vec![r.epoch.to_string()];
        cols.extend(r.losses.iter().map(|v| v.map_or_else(|| "-".to_string(), |v| v.to_string())));
        cols.extend([r.total, r.val_ndcg, r.val_hit_rate, r.val_c, r.seconds].map(|v| v.to_string()));
        self.line(&cols.join("\t"))
    }
}
