use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ItemIdx, RawInteraction, UserIdx};
use crate::{Error, Result};

/// How the k-core filter is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoreMode {
    /// Remove sparse users and items repeatedly until nothing changes.
    #[default]
    Iterative,
    /// Count once on the raw log and remove in a single pass.
    OnePass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub min_count: usize,
    pub core_mode: CoreMode,
    /// Drop repeated (user, item) pairs, keeping the earliest one.
    pub dedup: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            min_count: 5,
            core_mode: CoreMode::Iterative,
            dedup: false,
        }
    }
}

/// Chronological per-user item sequences with a leave-one-out split.
///
/// The last item of every sequence is the test target, the one before it the
/// validation target, and everything earlier is training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionDataset {
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    sequences: Vec<Vec<ItemIdx>>,
    timestamps: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserSplit<'a> {
    pub train: &'a [ItemIdx],
    pub validation: ItemIdx,
    pub test: ItemIdx,
}

impl InteractionDataset {
    /// Builds a dataset from already indexed, chronologically sorted sequences.
    /// Every sequence needs at least three items.
    pub fn from_sequences(
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        sequences: Vec<Vec<ItemIdx>>,
        timestamps: Vec<Vec<i64>>,
    ) -> Result<Self> {
        let ds = Self {
            user_ids,
            item_ids,
            sequences,
            timestamps,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let Self {
            user_ids,
            item_ids,
            sequences,
            timestamps,
        } = self;
        if user_ids.len() != sequences.len() || timestamps.len() != sequences.len() {
            return Err(Error::Precondition("user table and sequences disagree".into()));
        }
        for (u, (seq, ts)) in sequences.iter().zip(timestamps.iter()).enumerate() {
            if seq.len() < 3 {
                return Err(Error::Precondition(format!(
                    "user {u} has {} interactions, need at least 3",
                    seq.len()
                )));
            }
            if seq.len() != ts.len() {
                return Err(Error::Precondition(format!("user {u}: timestamp count mismatch")));
            }
            if ts.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Precondition(format!("user {u}: sequence not chronological")));
            }
            if let Some(&bad) = seq.iter().find(|&&i| i as usize >= item_ids.len()) {
                return Err(Error::IndexOutOfRange {
                    index: bad as usize,
                    limit: item_ids.len(),
                });
            }
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.sequences.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn num_interactions(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }

    pub fn user_id(&self, u: UserIdx) -> &str {
        &self.user_ids[u as usize]
    }

    pub fn item_id(&self, i: ItemIdx) -> &str {
        &self.item_ids[i as usize]
    }

    pub fn sequence(&self, u: UserIdx) -> &[ItemIdx] {
        &self.sequences[u as usize]
    }

    pub fn split(&self, u: UserIdx) -> UserSplit<'_> {
        let seq = &self.sequences[u as usize];
        let n = seq.len();
        UserSplit {
            train: &seq[..n - 2],
            validation: seq[n - 2],
            test: seq[n - 1],
        }
    }

    /// Per-item interaction counts over training prefixes only.
    pub fn train_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_items()];
        for u in 0..self.num_users() {
            for &i in self.split(u as UserIdx).train {
                counts[i as usize] += 1;
            }
        }
        counts
    }

    /// Per-item interaction counts over whole sequences.
    pub fn all_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_items()];
        for seq in &self.sequences {
            for &i in seq {
                counts[i as usize] += 1;
            }
        }
        counts
    }

    /// Restricted view used by training: no access to test items.
    pub fn fit_view(&self) -> FitView<'_> {
        FitView { ds: self }
    }

    /// Flattens back into raw records (user-major, chronological).
    pub fn to_raw(&self) -> Vec<RawInteraction> {
        let mut out = Vec::with_capacity(self.num_interactions());
        for (u, (seq, ts)) in self.sequences.iter().zip(&self.timestamps).enumerate() {
            for (&i, &t) in seq.iter().zip(ts) {
                out.push(RawInteraction::new(
                    self.user_ids[u].clone(),
                    self.item_ids[i as usize].clone(),
                    t,
                ));
            }
        }
        out
    }
}

/// Training-side view of a dataset: training prefixes and validation targets.
#[derive(Debug, Clone, Copy)]
pub struct FitView<'a> {
    ds: &'a InteractionDataset,
}

impl<'a> FitView<'a> {
    pub fn num_users(&self) -> usize {
        self.ds.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.ds.num_items()
    }

    pub fn train(&self, u: UserIdx) -> &'a [ItemIdx] {
        let seq = self.ds.sequence(u);
        &seq[..seq.len() - 2]
    }

    pub fn validation(&self, u: UserIdx) -> ItemIdx {
        let seq = self.ds.sequence(u);
        seq[seq.len() - 2]
    }

    /// Training prefix plus the validation item.
    pub fn known(&self, u: UserIdx) -> &'a [ItemIdx] {
        let seq = self.ds.sequence(u);
        &seq[..seq.len() - 1]
    }

    pub fn train_counts(&self) -> Vec<u64> {
        self.ds.train_counts()
    }
}

pub fn preprocess(raw: &[RawInteraction]) -> Result<InteractionDataset> {
    preprocess_with(raw, &PreprocessConfig::default())
}

/// k-core filtering, dense re-indexing, chronological ordering and the
/// leave-one-out split.
///
/// Dense indices follow order of first appearance in `raw`. Timestamp ties
/// keep file order.
pub fn preprocess_with(raw: &[RawInteraction], cfg: &PreprocessConfig) -> Result<InteractionDataset> {
    if raw.is_empty() {
        return Err(Error::Empty("raw interaction list"));
    }
    if cfg.min_count == 0 {
        return Err(Error::Config("min_count must be at least 1".into()));
    }

    let mut user_of: HashMap<&str, usize> = HashMap::new();
    let mut item_of: HashMap<&str, usize> = HashMap::new();
    let mut users = Vec::with_capacity(raw.len());
    let mut items = Vec::with_capacity(raw.len());
    for r in raw {
        let n = user_of.len();
        users.push(*user_of.entry(r.user_id.as_str()).or_insert(n));
        let n = item_of.len();
        items.push(*item_of.entry(r.item_id.as_str()).or_insert(n));
    }
    let n_users = user_of.len();
    let n_items = item_of.len();

    let mut alive = vec![true; raw.len()];
    if cfg.dedup {
        let mut seen = std::collections::HashSet::new();
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by_key(|&k| raw[k].timestamp);
        for k in order {
            if !seen.insert((users[k], items[k])) {
                alive[k] = false;
            }
        }
    }

    let k = cfg.min_count;
    // splits need one training, one validation and one test item; folding that
    // into the core loop keeps the result a fixed point for k < 3 as well
    let k_user = k.max(3);
    loop {
        let mut uc = vec![0usize; n_users];
        let mut ic = vec![0usize; n_items];
        for (idx, _) in alive.iter().enumerate().filter(|(_, a)| **a) {
            uc[users[idx]] += 1;
            ic[items[idx]] += 1;
        }
        let mut removed = false;
        for idx in 0..raw.len() {
            if alive[idx] && (uc[users[idx]] < k_user || ic[items[idx]] < k) {
                alive[idx] = false;
                removed = true;
            }
        }
        if !removed || cfg.core_mode == CoreMode::OnePass {
            break;
        }
    }

    let mut user_dense = vec![usize::MAX; n_users];
    let mut item_dense = vec![usize::MAX; n_items];
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut per_user: Vec<Vec<(i64, ItemIdx)>> = Vec::new();
    for idx in (0..raw.len()).filter(|&i| alive[i]) {
        let (u, i) = (users[idx], items[idx]);
        if user_dense[u] == usize::MAX {
            user_dense[u] = user_ids.len();
            user_ids.push(raw[idx].user_id.clone());
            per_user.push(Vec::new());
        }
        if item_dense[i] == usize::MAX {
            item_dense[i] = item_ids.len();
            item_ids.push(raw[idx].item_id.clone());
        }
        per_user[user_dense[u]].push((raw[idx].timestamp, item_dense[i] as ItemIdx));
    }
    if user_ids.is_empty() {
        return Err(Error::EmptyAfterCore(k));
    }

    let mut sequences = Vec::with_capacity(per_user.len());
    let mut timestamps = Vec::with_capacity(per_user.len());
    for mut events in per_user {
        // stable: equal timestamps keep file order
        events.sort_by_key(|&(t, _)| t);
        timestamps.push(events.iter().map(|&(t, _)| t).collect());
        sequences.push(events.into_iter().map(|(_, i)| i).collect());
    }
    InteractionDataset::from_sequences(user_ids, item_ids, sequences, timestamps)
}
