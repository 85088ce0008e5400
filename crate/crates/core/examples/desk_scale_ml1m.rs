//! Reduced-budget MovieLens-1M comparison: DCR against base_bce and the three
//! ablations, self-attention backbone, one seed.
//!
//! Needs `$DCR_DATA_ROOT/ml-1m/ratings.dat`. Without `DCR_DESK_SCALE=1` it
//! only preprocesses the file and prints the dataset statistics, since the
//! training runs take hours on a CPU.

use dcrec::data::gini_index;
use dcrec::experiment::{data_root, run_experiment, ExperimentSpec};

pub fn main() -> anyhow::Result<()> {
    let path = data_root().join("ml-1m").join("ratings.dat");
    if !path.exists() {
        println!("{} not found; download MovieLens-1M to run this example", path.display());
        return Ok(());
    }
    let spec = ExperimentSpec::from_toml(include_str!("../../../configs/ml1m_desk.toml"))?;
    let ds = spec.dataset.load()?;
    println!(
        "ML-1M: {} users, {} items, {} interactions, gini train {:.4} / all {:.4}",
        ds.num_users(),
        ds.num_items(),
        ds.num_interactions(),
        gini_index(&ds.train_counts())?,
        gini_index(&ds.all_counts())?
    );
    if std::env::var("DCR_DESK_SCALE").is_ok_and(|v| v == "1") {
        let table = run_experiment(&spec)?;
        print!("{}", table.render());
    } else {
        println!("set DCR_DESK_SCALE=1 to train the comparison");
    }
    Ok(())
}
