//! How recommendation slots spread over popularity buckets, biased model
//! against the counterfactual one.

use dcrec::data::popularity_buckets;
use dcrec::data::synthetic::SyntheticConfig;
use dcrec::eval::exposure_analysis;
use dcrec::experiment::{test_histories, train_and_evaluate, DatasetSpec, ExperimentSpec};
use dcrec::model::Mode;

pub fn main() -> anyhow::Result<()> {
    let mut cfg = ExperimentSpec::default().base();
    cfg.dataset = DatasetSpec::synthetic(SyntheticConfig::small());
    cfg.model.dim = 12;
    cfg.model.max_len = 16;
    cfg.train.max_epochs = 4;
    cfg.train.patience = 2;
    cfg.train.batch_size = 16;
    cfg.train.c_grid = vec![0.0, 1.0, 2.0];
    cfg.eval.num_negatives = 20;
    cfg.exposure.enabled = false;
    let ds = cfg.dataset.load()?;

    let counts = ds.train_counts();
    let mut sorted = counts.clone();
    sorted.sort_unstable();
    // tertiles of the training counts
    let bounds = [sorted[sorted.len() / 3], sorted[2 * sorted.len() / 3]];
    let buckets = popularity_buckets(&counts, &bounds)?;
    let hist = test_histories(&ds);
    let users: Vec<_> = hist.iter().map(|(u, h)| (*u, h.as_slice())).collect();

    for mode in [Mode::BaseBce, Mode::Dcr] {
        let mut run = cfg.clone();
        run.model.mode = mode;
        let (model, _, _) = train_and_evaluate(&run, &ds, &[], None)?;
        let cs: &[f64] = if mode == Mode::Dcr { &[0.0, 2.0] } else { &[0.0] };
        for &c in cs {
            let e = exposure_analysis(&model, &users, 10, &buckets, c, 1)?;
            let parts: Vec<String> = e
                .labels
                .iter()
                .zip(e.item_ratio.iter().zip(&e.shares))
                .map(|(l, (r, s))| format!("{l}: items {r:.2} slots {s:.2}"))
                .collect();
            println!("{mode} c={c}: {} (gini {:.3})", parts.join(", "), e.gini);
        }
    }
    Ok(())
}
