//! On-disk dataset and propensity files.
//!
//! Both are JSON documents with a `schema` tag and a `version`:
//!
//! ```text
//! {"schema": "dcrec-dataset", "version": 1, "num_users": .., "num_items": ..,
//!  "num_interactions": .., "dataset": {"user_ids": [..], "item_ids": [..],
//!  "sequences": [[..], ..], "timestamps": [[..], ..]}}
//! {"schema": "dcrec-propensity", "version": 1, "table": {"counts": [..],
//!  "theta_pos": [..], "theta_neg": [..], "params": {"omega", "rho", "eps"}}}
//! ```
//!
//! Sequences hold dense item indices in chronological order.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InteractionDataset, PropensityTable};
use crate::{Error, Result};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    schema: String,
    version: u32,
    num_users: usize,
    num_items: usize,
    num_interactions: usize,
    dataset: InteractionDataset,
}

#[derive(Serialize, Deserialize)]
struct PropensityFile {
    schema: String,
    version: u32,
    table: PropensityTable,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer(BufWriter::new(f), value)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

fn check_header(schema: &str, version: u32, expected: &str) -> Result<()> {
    if schema != expected {
        return Err(Error::Config(format!("expected a `{expected}` file, found `{schema}`")));
    }
    if version != DATASET_SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "unsupported {expected} version {version} (this build reads {DATASET_SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, ds: &InteractionDataset) -> Result<()> {
    write_json(
        path.as_ref(),
        &DatasetFile {
            schema: "dcrec-dataset".into(),
            version: DATASET_SCHEMA_VERSION,
            num_users: ds.num_users(),
            num_items: ds.num_items(),
            num_interactions: ds.num_interactions(),
            dataset: ds.clone(),
        },
    )
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<InteractionDataset> {
    let f: DatasetFile = read_json(path.as_ref())?;
    check_header(&f.schema, f.version, "dcrec-dataset")?;
    let ds = f.dataset;
    // the file is not trusted to hold the invariants
    ds.validate()?;
    if ds.num_interactions() != f.num_interactions {
        return Err(Error::Config("dataset header disagrees with its contents".into()));
    }
    Ok(ds)
}

pub fn save_propensities(path: impl AsRef<Path>, table: &PropensityTable) -> Result<()> {
    write_json(
        path.as_ref(),
        &PropensityFile {
            schema: "dcrec-propensity".into(),
            version: DATASET_SCHEMA_VERSION,
            table: table.clone(),
        },
    )
}

pub fn load_propensities(path: impl AsRef<Path>) -> Result<PropensityTable> {
    let f: PropensityFile = read_json(path.as_ref())?;
    check_header(&f.schema, f.version, "dcrec-propensity")?;
    Ok(f.table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{compute_propensities, synthetic, PropensityParams};

    #[test]
    fn roundtrip_files() {
        let ds = synthetic::SyntheticConfig::small().generate().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ds.json");
        save_dataset(&p, &ds).unwrap();
        assert_eq!(load_dataset(&p).unwrap(), ds);

        let t = compute_propensities(&ds.train_counts(), PropensityParams::default()).unwrap();
        let q = dir.path().join("prop.json");
        save_propensities(&q, &t).unwrap();
        assert_eq!(load_propensities(&q).unwrap(), t);
        assert!(load_dataset(&q).is_err());
    }
}
