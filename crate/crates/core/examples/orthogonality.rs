//! Effect of the orthogonality weight on how well the conformity and
//! interest halves separate.

use dcrec::data::synthetic::SyntheticConfig;
use dcrec::eval::disentanglement;
use dcrec::experiment::{test_histories, train_and_evaluate, DatasetSpec, ExperimentSpec};

pub fn main() -> anyhow::Result<()> {
    let mut cfg = ExperimentSpec::default().base();
    cfg.dataset = DatasetSpec::synthetic(SyntheticConfig::default());
    cfg.model.dim = 16;
    cfg.model.max_len = 30;
    cfg.train.max_epochs = 40;
    cfg.train.batch_size = 32;
    cfg.train.patience = 10;
    cfg.train.c_grid = vec![0.0, 10.0, 30.0];
    cfg.exposure.enabled = false;
    let ds = cfg.dataset.load()?;
    let hist = test_histories(&ds);
    let users: Vec<_> = hist.iter().map(|(u, h)| (*u, h.as_slice())).collect();

    for gamma in [0.5, 0.0] {
        let mut run = cfg.clone();
        run.model.gamma = gamma;
        let (model, state, report) = train_and_evaluate(&run, &ds, &[], None)?;
        let d = disentanglement(&model, &users, 256)?;
        println!(
            "gamma={gamma}: mean |cos| user {:.4} item {:.4} (mean {:.4}); best epoch {:?}, test NDCG@10 {:.4}",
            d.user,
            d.item,
            d.mean(),
            state.best_epoch,
            report.ndcg
        );
    }
    Ok(())
}
