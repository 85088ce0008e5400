use serde::{Deserialize, Serialize};

use super::metrics::sort_candidates;
use super::protocol::worker_count;
use crate::data::{gini_index, Buckets, ItemIdx, UserIdx};
use crate::model::Recommender;
use crate::{Error, Result};

/// Share of top-K recommendation slots falling in each popularity bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureReport {
    pub labels: Vec<String>,
    pub item_ratio: Vec<f64>,
    pub shares: Vec<f64>,
    /// Gini index of how often each item was recommended.
    pub gini: f64,
    pub k: usize,
    pub num_users: usize,
}

/// Top-`k` items per user over the whole catalogue minus that user's history.
pub fn top_k(model: &Recommender, users: &[(UserIdx, &[ItemIdx])], k: usize, c: f64, threads: usize) -> Result<Vec<Vec<ItemIdx>>> {
    let m = model.num_items();
    let all: Vec<ItemIdx> = (0..m as ItemIdx).collect();
    let batch = (4096 / m.max(1)).clamp(1, 64);
    let chunks: Vec<&[(UserIdx, &[ItemIdx])]> = users.chunks(batch).collect();
    let run = |chunk: &[(UserIdx, &[ItemIdx])]| -> Result<Vec<Vec<ItemIdx>>> {
        let histories: Vec<&[ItemIdx]> = chunk.iter().map(|(_, h)| *h).collect();
        let ids: Vec<u32> = chunk.iter().map(|(u, _)| *u).collect();
        let cands: Vec<ItemIdx> = std::iter::repeat_n(all.iter().copied(), chunk.len()).flatten().collect();
        let parts = model.score_parts(&histories, &ids, &cands, m)?;
        Ok(chunk
            .iter()
            .enumerate()
            .map(|(r, (_, hist))| {
                let mut seen = vec![false; m];
                for &i in hist.iter() {
                    seen[i as usize] = true;
                }
                let scores = parts.row_scores(r, c);
                sort_candidates(&all, &scores)
                    .into_iter()
                    .filter(|&j| !seen[j])
                    .take(k)
                    .map(|j| all[j])
                    .collect()
            })
            .collect())
    };
    let workers = worker_count(threads, chunks.len());
    let results: Vec<Result<Vec<Vec<ItemIdx>>>> = if workers == 1 {
        chunks.iter().map(|c| run(c)).collect()
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunks.iter().map(|c| s.spawn(|| run(c))).collect();
            handles.into_iter().map(|h| h.join().expect("exposure worker panicked")).collect()
        })
    };
    let mut out = Vec::with_capacity(users.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Exposure shares of already computed recommendation lists.
pub fn exposure_shares(recommendations: &[Vec<ItemIdx>], buckets: &Buckets, k: usize) -> Result<ExposureReport> {
    let nb = buckets.num_buckets();
    let mut hits = vec![0u64; nb];
    let mut per_item = vec![0u64; buckets.assignment.len()];
    for list in recommendations {
        for &i in list {
            let b = *buckets.assignment.get(i as usize).ok_or(Error::IndexOutOfRange {
                index: i as usize,
                limit: buckets.assignment.len(),
            })?;
            hits[b] += 1;
            per_item[i as usize] += 1;
        }
    }
    let slots: u64 = hits.iter().sum();
    if slots == 0 {
        return Err(Error::Empty("recommendation slots"));
    }
    Ok(ExposureReport {
        labels: (0..nb).map(|b| buckets.label(b)).collect(),
        item_ratio: buckets.item_ratio.clone(),
        shares: hits.iter().map(|&h| h as f64 / slots as f64).collect(),
        gini: gini_index(&per_item)?,
        k,
        num_users: recommendations.len(),
    })
}

/// Recommends top-`k` for every user and tallies exposure per bucket.
pub fn exposure_analysis(
    model: &Recommender,
    users: &[(UserIdx, &[ItemIdx])],
    k: usize,
    buckets: &Buckets,
    c: f64,
    threads: usize,
) -> Result<ExposureReport> {
    if buckets.assignment.len() != model.num_items() {
        return Err(Error::Precondition("bucket assignment does not cover the catalogue".into()));
    }
    let recs = top_k(model, users, k, c, threads)?;
    exposure_shares(&recs, buckets, k)
}
