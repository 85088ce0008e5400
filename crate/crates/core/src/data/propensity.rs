use serde::{Deserialize, Serialize};

use super::ItemIdx;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropensityParams {
    /// Exponent on the positive propensity.
    pub omega: f64,
    /// Exponent on the negative propensity.
    pub rho: f64,
    /// Lower clamp applied to both propensities.
    pub eps: f64,
}

impl Default for PropensityParams {
    fn default() -> Self {
        Self {
            omega: 0.5,
            rho: 0.5,
            eps: 1e-3,
        }
    }
}

/// Popularity-derived observation propensities, one pair per item.
///
/// With `r_i = n_i / max_j n_j`:
/// `theta_pos = r_i^omega` and `theta_neg = (1 - r_i)^rho`, both clamped
/// below at `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityTable {
    pub counts: Vec<u64>,
    pub theta_pos: Vec<f64>,
    pub theta_neg: Vec<f64>,
    pub params: PropensityParams,
}

pub fn compute_propensities(counts: &[u64], params: PropensityParams) -> Result<PropensityTable> {
    let PropensityParams { omega, rho, eps } = params;
    if !(0.0..=1.0).contains(&omega) || !(0.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!("omega={omega}, rho={rho} must lie in [0, 1]")));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Config(format!("eps={eps} must lie in (0, 1]")));
    }
    let max = counts.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Err(Error::Empty("training interactions"));
    }
    let max = max as f64;
    let mut theta_pos = Vec::with_capacity(counts.len());
    let mut theta_neg = Vec::with_capacity(counts.len());
    for &n in counts {
        let r = n as f64 / max;
        theta_pos.push(r.powf(omega).max(eps));
        theta_neg.push((1.0 - r).powf(rho).max(eps));
    }
    Ok(PropensityTable {
        counts: counts.to_vec(),
        theta_pos,
        theta_neg,
        params,
    })
}

impl PropensityTable {
    pub fn num_items(&self) -> usize {
        self.counts.len()
    }

    pub fn theta_pos(&self, i: ItemIdx) -> f64 {
        self.theta_pos[i as usize]
    }

    pub fn theta_neg(&self, i: ItemIdx) -> f64 {
        self.theta_neg[i as usize]
    }

    /// Evaluation weight `1 / theta_pos` of a positive item.
    pub fn positive_weight(&self, i: ItemIdx) -> f64 {
        1.0 / self.theta_pos[i as usize]
    }

    /// Evaluation weight `1 / n_i`, with unseen items counted once.
    pub fn raw_count_weight(&self, i: ItemIdx) -> f64 {
        1.0 / self.counts[i as usize].max(1) as f64
    }
}
