//! Test metrics of one trained model across the inference constant `c`.

use dcrec::data::synthetic::SyntheticConfig;
use dcrec::experiment::{train_and_evaluate, DatasetSpec, ExperimentSpec};

pub fn main() -> anyhow::Result<()> {
    let mut cfg = ExperimentSpec::default().base();
    cfg.dataset = DatasetSpec::synthetic(SyntheticConfig::small());
    cfg.model.dim = 12;
    cfg.model.max_len = 16;
    cfg.train.max_epochs = 5;
    cfg.train.patience = 3;
    cfg.train.batch_size = 16;
    cfg.eval.num_negatives = 20;
    cfg.exposure.enabled = false;
    let grid: Vec<f64> = (0..=8).map(|k| 0.5 * k as f64).collect();
    cfg.train.c_grid = grid.clone();
    let ds = cfg.dataset.load()?;

    let (_, _, report) = train_and_evaluate(&cfg, &ds, &grid, None)?;
    println!("validation picked c = {}", report.c);
    for p in &report.c_grid {
        let bar = "#".repeat((p.ndcg * 100.0).round() as usize);
        println!("c={:<4} NDCG {:.4} HR {:.4} {bar}", p.c, p.ndcg, p.hit_rate);
    }
    Ok(())
}
