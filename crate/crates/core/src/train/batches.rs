use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{FitView, ItemIdx, UserIdx};
use crate::{Error, Result};

/// Next-item examples for a group of users, left-padded to a common length.
///
/// Position `p` of row `r` pairs the history ending at `inputs[r][p]` with
/// the following item `pos[r][p]` and one sampled negative `neg[r][p]`.
/// Padding positions hold the padding id in all three arrays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainBatch {
    pub users: Vec<UserIdx>,
    pub inputs: Vec<ItemIdx>,
    pub pos: Vec<ItemIdx>,
    pub neg: Vec<ItemIdx>,
    pub rows: usize,
    pub len: usize,
}

impl TrainBatch {
    pub fn num_examples(&self, pad: ItemIdx) -> usize {
        self.pos.iter().filter(|&&p| p != pad).count()
    }
}

/// Shuffles users with `epoch_seed`, groups them `batch_size` at a time and
/// emits one example per next-step position of each training prefix (the
/// most recent `max_len + 1` items). Negatives are uniform over the catalogue
/// and never equal the positive at that step.
pub fn make_batches(fit: &FitView<'_>, batch_size: usize, max_len: usize, epoch_seed: u64) -> Result<Vec<TrainBatch>> {
    if batch_size == 0 || max_len == 0 {
        return Err(Error::Config("batch_size and max_len must be positive".into()));
    }
    let m = fit.num_items();
    if m < 2 {
        return Err(Error::Precondition("negative sampling needs at least two items".into()));
    }
    let pad = m as ItemIdx;
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    let mut users: Vec<UserIdx> = (0..fit.num_users() as UserIdx).filter(|&u| fit.train(u).len() >= 2).collect();
    users.shuffle(&mut rng);

    let mut out = Vec::with_capacity(users.len().div_ceil(batch_size));
    for group in users.chunks(batch_size) {
        let seqs: Vec<&[ItemIdx]> = group
            .iter()
            .map(|&u| {
                let t = fit.train(u);
                &t[t.len() - t.len().min(max_len + 1)..]
            })
            .collect();
        let len = seqs.iter().map(|s| s.len() - 1).max().unwrap_or(1);
        let mut b = TrainBatch {
            users: group.to_vec(),
            inputs: Vec::with_capacity(group.len() * len),
            pos: Vec::with_capacity(group.len() * len),
            neg: Vec::with_capacity(group.len() * len),
            rows: group.len(),
            len,
        };
        for s in seqs {
            let n = s.len() - 1;
            for _ in n..len {
                b.inputs.push(pad);
                b.pos.push(pad);
                b.neg.push(pad);
            }
            b.inputs.extend_from_slice(&s[..n]);
            for &p in &s[1..] {
                b.pos.push(p);
                let mut q = rng.random_range(0..m as ItemIdx);
                while q == p {
                    q = rng.random_range(0..m as ItemIdx);
                }
                b.neg.push(q);
            }
        }
        out.push(b);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InteractionDataset;

    fn dataset() -> InteractionDataset {
        // train prefixes: [0,1,2], [3,4], [5]
        let seqs = vec![vec![0, 1, 2, 3, 4], vec![3, 4, 0, 1], vec![5, 0, 1]];
        InteractionDataset::from_sequences(
            (0..3).map(|u| format!("u{u}")).collect(),
            (0..6).map(|i| format!("i{i}")).collect(),
            seqs.clone(),
            seqs.iter().map(|s| (0..s.len() as i64).collect()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn examples_per_position() {
        let ds = dataset();
        let fit = ds.fit_view();
        let batches = make_batches(&fit, 8, 50, 1).unwrap();
        assert_eq!(batches.len(), 1);
        let b = &batches[0];
        assert_eq!((b.rows, b.len), (2, 2));
        let row = b.users.iter().position(|&u| u == 0).unwrap();
        assert_eq!(&b.inputs[row * 2..row * 2 + 2], &[0, 1]);
        assert_eq!(&b.pos[row * 2..row * 2 + 2], &[1, 2]);
        let other = 1 - row;
        assert_eq!(&b.inputs[other * 2..other * 2 + 2], &[6, 3]);
        assert_eq!(&b.pos[other * 2..other * 2 + 2], &[6, 4]);
        assert_eq!(b.num_examples(6), 3);
    }

    #[test]
    fn deterministic_and_negatives_differ() {
        let ds = dataset();
        let fit = ds.fit_view();
        assert_eq!(make_batches(&fit, 1, 50, 7).unwrap(), make_batches(&fit, 1, 50, 7).unwrap());
        for seed in 0..50 {
            for b in make_batches(&fit, 2, 50, seed).unwrap() {
                for (p, q) in b.pos.iter().zip(&b.neg) {
                    assert!(*p == 6 && *q == 6 || p != q);
                }
            }
        }
    }

    #[test]
    fn truncation_keeps_recent_items() {
        let ds = dataset();
        let fit = ds.fit_view();
        let b = make_batches(&fit, 8, 1, 3).unwrap();
        let row = b[0].users.iter().position(|&u| u == 0).unwrap();
        assert_eq!(b[0].inputs[row], 1);
        assert_eq!(b[0].pos[row], 2);
    }
}
