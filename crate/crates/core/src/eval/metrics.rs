use std::cmp::Ordering;

use crate::data::ItemIdx;
use crate::{Error, Result};

fn compare(items: &[ItemIdx], scores: &[f64], a: usize, b: usize) -> Ordering {
    scores[b]
        .total_cmp(&scores[a])
        .then(items[a].cmp(&items[b]))
        .then(a.cmp(&b))
}

/// Candidate positions in ranked order: higher score first, then lower item index.
pub fn sort_candidates(items: &[ItemIdx], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| compare(items, scores, a, b));
    order
}

/// 1-based rank of the candidate at position `target` under [`sort_candidates`] order.
pub fn rank_of(items: &[ItemIdx], scores: &[f64], target: usize) -> usize {
    1 + (0..items.len())
        .filter(|&j| compare(items, scores, j, target) == Ordering::Less)
        .count()
}

/// `(ndcg, hit)` for a single relevant item at `rank`.
pub fn rank_metrics(rank: usize, k: usize) -> (f64, f64) {
    if rank >= 1 && rank <= k {
        (1.0 / ((rank + 1) as f64).log2(), 1.0)
    } else {
        (0.0, 0.0)
    }
}

/// `Σ w m / Σ w`.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::Precondition("values and weights differ in length".into()));
    }
    if values.is_empty() {
        return Err(Error::Empty("evaluation cases"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Precondition(format!("weight total {total} must be positive")));
    }
    Ok(values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total)
}
