//! Raw log to dataset: parse, k-core filter, leave-one-out split, save.
//!
//! Writes a MovieLens-style `user::item::rating::timestamp` file from the
//! synthetic generator so the example runs without downloads.

use std::io::Write;

use dcrec::data::synthetic::SyntheticConfig;
use dcrec::data::{gini_index, load_dataset, load_raw, preprocess_with, save_dataset, PreprocessConfig, RawFormat};

pub fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("ratings.dat");
    let mut f = std::fs::File::create(&path)?;
    for r in SyntheticConfig::small().raw()? {
        writeln!(f, "{}::{}::4::{}", r.user_id, r.item_id, r.timestamp)?;
    }
    drop(f);

    let raw = load_raw(&path, RawFormat::MovielensDat)?;
    let ds = preprocess_with(&raw, &PreprocessConfig::default())?;
    println!(
        "{} raw rows -> {} users, {} items, {} interactions",
        raw.len(),
        ds.num_users(),
        ds.num_items(),
        ds.num_interactions()
    );
    println!(
        "gini over training counts {:.4}, over all interactions {:.4}",
        gini_index(&ds.train_counts())?,
        gini_index(&ds.all_counts())?
    );

    let s = ds.split(0);
    println!(
        "user {}: {} training items, validation {}, test {}",
        ds.user_id(0),
        s.train.len(),
        ds.item_id(s.validation),
        ds.item_id(s.test)
    );

    let out = dir.path().join("ml.dataset.json");
    save_dataset(&out, &ds)?;
    let back = load_dataset(&out)?;
    assert_eq!(back.num_interactions(), ds.num_interactions());
    println!("saved and reloaded {}", out.display());
    Ok(())
}
