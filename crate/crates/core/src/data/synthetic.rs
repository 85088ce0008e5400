//! Popularity-biased interaction logs with a known interest structure.
//!
//! Items belong to topics and carry a Zipf-distributed popularity. Each user
//! has a favourite topic set and a conformity level. At every step the user
//! either follows the crowd (an item drawn by popularity alone) or follows
//! their interest (an item from the current topic, weakly popularity-tilted).
//! The current topic is sticky, which gives the logs sequential structure.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::{preprocess_with, InteractionDataset, PreprocessConfig, RawInteraction};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub num_topics: usize,
    /// Topics each user is interested in.
    pub topics_per_user: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Zipf exponent of the popularity distribution.
    pub zipf: f64,
    /// Beta(a, b) parameters of per-user conformity.
    pub conformity_a: f64,
    pub conformity_b: f64,
    /// Popularity exponent applied inside interest-driven picks.
    pub interest_pop_tilt: f64,
    /// Probability of staying in the current topic between interest picks.
    pub topic_stickiness: f64,
    pub min_count: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_users: 600,
            num_items: 400,
            num_topics: 12,
            topics_per_user: 2,
            min_len: 12,
            max_len: 60,
            zipf: 1.0,
            conformity_a: 2.0,
            conformity_b: 3.0,
            interest_pop_tilt: 0.3,
            topic_stickiness: 0.8,
            min_count: 5,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    /// Small instance for unit tests.
    pub fn small() -> Self {
        Self {
            num_users: 60,
            num_items: 40,
            num_topics: 4,
            min_len: 8,
            max_len: 16,
            ..Self::default()
        }
    }

    pub fn raw(&self) -> Result<Vec<RawInteraction>> {
        if self.num_items == 0 || self.num_topics == 0 || self.num_users == 0 {
            return Err(Error::Config("synthetic sizes must be positive".into()));
        }
        if self.min_len < 3 || self.min_len > self.max_len {
            return Err(Error::Config("need 3 <= min_len <= max_len".into()));
        }
        let beta = Beta::new(self.conformity_a, self.conformity_b)
            .map_err(|e| Error::Config(format!("conformity prior: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);

        // popularity rank is independent of topic
        let mut ranks: Vec<usize> = (0..self.num_items).collect();
        ranks.shuffle(&mut rng);
        let popularity: Vec<f64> = ranks
            .iter()
            .map(|&r| 1.0 / ((r + 1) as f64).powf(self.zipf))
            .collect();
        let topic_of: Vec<usize> = (0..self.num_items).map(|i| i % self.num_topics).collect();
        let mut by_topic: Vec<Vec<usize>> = vec![Vec::new(); self.num_topics];
        for (i, &t) in topic_of.iter().enumerate() {
            by_topic[t].push(i);
        }
        let crowd = WeightedAliasIndex::new(popularity.clone()).map_err(|e| Error::Config(e.to_string()))?;
        let topic_pickers: Vec<WeightedAliasIndex<f64>> = by_topic
            .iter()
            .map(|items| {
                WeightedAliasIndex::new(
                    items
                        .iter()
                        .map(|&i| popularity[i].powf(self.interest_pop_tilt))
                        .collect(),
                )
                .expect("every topic holds at least one item")
            })
            .collect();

        let mut out = Vec::new();
        for u in 0..self.num_users {
            let conformity: f64 = beta.sample(&mut rng);
            let mut topics: Vec<usize> = (0..self.num_topics).collect();
            topics.shuffle(&mut rng);
            topics.truncate(self.topics_per_user.clamp(1, self.num_topics));
            let len = rng.random_range(self.min_len..=self.max_len);
            let mut current = topics[0];
            for step in 0..len {
                let item = if rng.random::<f64>() < conformity {
                    crowd.sample(&mut rng)
                } else {
                    if rng.random::<f64>() >= self.topic_stickiness {
                        current = topics[rng.random_range(0..topics.len())];
                    }
                    by_topic[current][topic_pickers[current].sample(&mut rng)]
                };
                out.push(RawInteraction::new(format!("u{u}"), format!("i{item}"), step as i64));
            }
        }
        Ok(out)
    }

    pub fn generate(&self) -> Result<InteractionDataset> {
        preprocess_with(
            &self.raw()?,
            &PreprocessConfig {
                min_count: self.min_count,
                ..Default::default()
            },
        )
    }
}
