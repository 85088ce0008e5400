//! Every recommender mode trained briefly on the same synthetic log.

use dcrec::data::synthetic::SyntheticConfig;
use dcrec::experiment::{train_and_evaluate, DatasetSpec, ExperimentSpec};
use dcrec::model::Mode;

pub fn main() -> anyhow::Result<()> {
    let mut cfg = ExperimentSpec::default().base();
    cfg.dataset = DatasetSpec::synthetic(SyntheticConfig::small());
    cfg.model.dim = 8;
    cfg.model.max_len = 16;
    cfg.train.max_epochs = 2;
    cfg.train.patience = 2;
    cfg.train.batch_size = 32;
    cfg.train.c_grid = vec![0.0, 1.0];
    cfg.eval.num_negatives = 20;
    cfg.exposure.enabled = false;
    let ds = cfg.dataset.load()?;

    for mode in Mode::ALL {
        let mut run = cfg.clone();
        run.model.mode = mode;
        let (model, _, r) = train_and_evaluate(&run, &ds, &[], None)?;
        println!(
            "{:<10} NDCG@{} {:.4}  HR@{} {:.4}  c {}  ({} parameter tensors)",
            mode.to_string(),
            r.k,
            r.ndcg,
            r.k,
            r.hit_rate,
            r.c,
            model.params().named().len()
        );
    }
    Ok(())
}
