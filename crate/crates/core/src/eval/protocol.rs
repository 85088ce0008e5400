use serde::{Deserialize, Serialize};

use super::metrics::{rank_metrics, rank_of, weighted_mean};
use super::negatives::sample_negatives;
use crate::data::{FitView, InteractionDataset, ItemIdx, PropensityTable, UserIdx};
use crate::model::Recommender;
use crate::{Error, Result};

/// How each test case is weighted in the averaged metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Reweighting {
    /// `1 / θ+` of the positive item.
    #[default]
    Ipw,
    /// `1 / n_i` of the positive item.
    RawCount,
    /// Plain mean.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalProtocol {
    pub k: usize,
    pub num_negatives: usize,
    pub reweighting: Reweighting,
    pub seed: u64,
    /// Users scored per forward pass.
    pub batch_users: usize,
    /// Worker threads for scoring; 0 picks the machine's parallelism.
    pub threads: usize,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            k: 10,
            num_negatives: 100,
            reweighting: Reweighting::Ipw,
            seed: 2024,
            batch_users: 256,
            threads: 0,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.num_negatives == 0 || self.batch_users == 0 {
            return Err(Error::Config("eval k, num_negatives and batch_users must be >= 1".into()));
        }
        Ok(())
    }

    pub fn weight(&self, props: &PropensityTable, item: ItemIdx) -> f64 {
        match self.reweighting {
            Reweighting::Ipw => props.positive_weight(item),
            Reweighting::RawCount => props.raw_count_weight(item),
            Reweighting::None => 1.0,
        }
    }
}

/// One held-out interaction: the known history, the positive and its
/// candidate list (positive first, then sampled negatives).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCase<'a> {
    pub user: UserIdx,
    pub history: &'a [ItemIdx],
    pub positive: ItemIdx,
    pub candidates: Vec<ItemIdx>,
}

fn make_case<'a>(
    user: UserIdx,
    history: &'a [ItemIdx],
    positive: ItemIdx,
    exclude: &[ItemIdx],
    num_items: usize,
    protocol: &EvalProtocol,
) -> Result<EvalCase<'a>> {
    let mut candidates = vec![positive];
    candidates.extend(sample_negatives(user, positive, num_items, exclude, protocol.num_negatives, protocol.seed)?);
    Ok(EvalCase {
        user,
        history,
        positive,
        candidates,
    })
}

/// Validation cases: history is the training prefix, negatives avoid everything known at fit time.
pub fn validation_cases<'a>(fit: &FitView<'a>, protocol: &EvalProtocol) -> Result<Vec<EvalCase<'a>>> {
    (0..fit.num_users() as UserIdx)
        .map(|u| make_case(u, fit.train(u), fit.validation(u), fit.known(u), fit.num_items(), protocol))
        .collect()
}

/// Test cases: history is training prefix plus validation item, negatives avoid the full sequence.
pub fn test_cases<'a>(ds: &'a InteractionDataset, protocol: &EvalProtocol) -> Result<Vec<EvalCase<'a>>> {
    (0..ds.num_users() as UserIdx)
        .map(|u| {
            let seq = ds.sequence(u);
            let split = ds.split(u);
            make_case(u, &seq[..seq.len() - 1], split.test, seq, ds.num_items(), protocol)
        })
        .collect()
}

pub(crate) fn worker_count(requested: usize, jobs: usize) -> usize {
    let hw = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let t = if requested == 0 { hw } else { requested };
    t.clamp(1, jobs.max(1))
}

/// Rank of the positive per case and per `c`, computed with one forward pass
/// per batch of users. Result is indexed `[c][case]`.
pub fn positive_ranks(model: &Recommender, cases: &[EvalCase<'_>], cs: &[f64], protocol: &EvalProtocol) -> Result<Vec<Vec<usize>>> {
    protocol.validate()?;
    if cases.is_empty() {
        return Err(Error::Empty("evaluation cases"));
    }
    let per_row = cases[0].candidates.len();
    if cases.iter().any(|c| c.candidates.len() != per_row) {
        return Err(Error::Precondition("cases differ in candidate count".into()));
    }
    let chunks: Vec<&[EvalCase<'_>]> = cases.chunks(protocol.batch_users).collect();
    let score_chunk = |chunk: &[EvalCase<'_>]| -> Result<Vec<Vec<usize>>> {
        let histories: Vec<&[ItemIdx]> = chunk.iter().map(|c| c.history).collect();
        let users: Vec<u32> = chunk.iter().map(|c| c.user).collect();
        let cands: Vec<ItemIdx> = chunk.iter().flat_map(|c| c.candidates.iter().copied()).collect();
        let parts = model.score_parts(&histories, &users, &cands, per_row)?;
        Ok(cs
            .iter()
            .map(|&c| {
                chunk
                    .iter()
                    .enumerate()
                    .map(|(r, case)| rank_of(&case.candidates, &parts.row_scores(r, c), 0))
                    .collect()
            })
            .collect())
    };
    let workers = worker_count(protocol.threads, chunks.len());
    let per_chunk: Vec<Result<Vec<Vec<usize>>>> = if workers == 1 {
        chunks.iter().map(|ch| score_chunk(ch)).collect()
    } else {
        let mut slots: Vec<Option<Result<Vec<Vec<usize>>>>> = (0..chunks.len()).map(|_| None).collect();
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let chunks = &chunks;
                    let score_chunk = &score_chunk;
                    s.spawn(move || {
                        (w..chunks.len())
                            .step_by(workers)
                            .map(|k| (k, score_chunk(chunks[k])))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (k, r) in h.join().expect("scoring worker panicked") {
                    slots[k] = Some(r);
                }
            }
        });
        slots.into_iter().map(|s| s.expect("every chunk scored")).collect()
    };
    let mut out = vec![Vec::with_capacity(cases.len()); cs.len()];
    for chunk in per_chunk {
        for (ci, ranks) in chunk?.into_iter().enumerate() {
            out[ci].extend(ranks);
        }
    }
    Ok(out)
}

/// Averaged metrics at one value of `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub c: f64,
    pub ndcg: f64,
    pub hit_rate: f64,
}

/// Weighted NDCG@K and HR@K for every `c` in `cs`.
pub fn evaluate_c_grid(
    model: &Recommender,
    cases: &[EvalCase<'_>],
    cs: &[f64],
    protocol: &EvalProtocol,
    props: &PropensityTable,
) -> Result<Vec<MetricPoint>> {
    let ranks = positive_ranks(model, cases, cs, protocol)?;
    let weights: Vec<f64> = cases.iter().map(|c| protocol.weight(props, c.positive)).collect();
    cs.iter()
        .zip(ranks)
        .map(|(&c, ranks)| {
            let (nd, hr): (Vec<f64>, Vec<f64>) = ranks.iter().map(|&r| rank_metrics(r, protocol.k)).unzip();
            Ok(MetricPoint {
                c,
                ndcg: weighted_mean(&nd, &weights)?,
                hit_rate: weighted_mean(&hr, &weights)?,
            })
        })
        .collect()
}

/// Weighted metrics at the model's configured `c`.
pub fn evaluate_cases(
    model: &Recommender,
    cases: &[EvalCase<'_>],
    protocol: &EvalProtocol,
    props: &PropensityTable,
) -> Result<MetricPoint> {
    Ok(evaluate_c_grid(model, cases, &[model.config().c], protocol, props)?[0])
}
