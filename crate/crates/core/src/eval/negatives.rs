use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{ItemIdx, UserIdx};
use crate::{Error, Result};

/// Per-user generator, independent of the order users are processed in.
pub(crate) fn user_rng(seed: u64, user: UserIdx) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user as u64 + 1);
    rng
}

/// `n` distinct items drawn uniformly from `0..num_items` minus `positive` and `exclude`.
pub fn sample_negatives(
    user: UserIdx,
    positive: ItemIdx,
    num_items: usize,
    exclude: &[ItemIdx],
    n: usize,
    seed: u64,
) -> Result<Vec<ItemIdx>> {
    let mut banned = vec![false; num_items];
    for &i in exclude.iter().chain(std::iter::once(&positive)) {
        if let Some(b) = banned.get_mut(i as usize) {
            *b = true;
        }
    }
    let pool: Vec<ItemIdx> = (0..num_items as ItemIdx).filter(|&i| !banned[i as usize]).collect();
    if pool.len() < n {
        return Err(Error::Precondition(format!(
            "user {user}: only {} negative candidates for {n} samples",
            pool.len()
        )));
    }
    let mut rng = user_rng(seed, user);
    let mut picks: Vec<ItemIdx> = index::sample(&mut rng, pool.len(), n).into_iter().map(|k| pool[k]).collect();
    picks.sort_unstable();
    Ok(picks)
}
