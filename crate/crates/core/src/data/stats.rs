use crate::{Error, Result};

/// Gini coefficient of a count distribution.
///
/// With counts sorted ascending `x_1 <= ... <= x_n`:
///
/// ```text
/// G = sum_i (2i - n - 1) * x_i / (n * sum_i x_i)
/// ```
///
/// which equals the mean absolute difference over all ordered pairs divided
/// by twice the mean. The value lies in `[0, 1 - 1/n]`.
pub fn gini_index(counts: &[u64]) -> Result<f64> {
    let total: u128 = counts.iter().map(|&c| c as u128).sum();
    if total == 0 {
        return Err(Error::Precondition("gini needs at least one positive count".into()));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as i128;
    let mut acc: i128 = 0;
    for (k, &x) in sorted.iter().enumerate() {
        let i = k as i128 + 1;
        acc += (2 * i - n - 1) * x as i128;
    }
    Ok(acc as f64 / (n as f64 * total as f64))
}

/// Items grouped into popularity ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct Buckets {
    /// Boundaries the ranges were built from.
    pub boundaries: Vec<u64>,
    /// Bucket index of every item.
    pub assignment: Vec<usize>,
    /// Fraction of items that fall into each bucket.
    pub item_ratio: Vec<f64>,
}

impl Buckets {
    pub fn num_buckets(&self) -> usize {
        self.boundaries.len() + 1
    }

    /// Human readable range label of bucket `b`, e.g. `"[100,1000)"` or `">=1000"`.
    pub fn label(&self, b: usize) -> String {
        let lo = if b == 0 { 0 } else { self.boundaries[b - 1] };
        match self.boundaries.get(b) {
            Some(hi) => format!("[{lo},{hi})"),
            None => format!(">={lo}"),
        }
    }
}

/// Assigns each item to the half-open range `[b_{k-1}, b_k)` containing its count.
pub fn popularity_buckets(counts: &[u64], boundaries: &[u64]) -> Result<Buckets> {
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("bucket boundaries must be strictly ascending".into()));
    }
    let assignment: Vec<usize> = counts
        .iter()
        .map(|&c| boundaries.partition_point(|&b| b <= c))
        .collect();
    let mut item_ratio = vec![0.0; boundaries.len() + 1];
    for &b in &assignment {
        item_ratio[b] += 1.0;
    }
    if !counts.is_empty() {
        for r in &mut item_ratio {
            *r /= counts.len() as f64;
        }
    }
    Ok(Buckets {
        boundaries: boundaries.to_vec(),
        assignment,
        item_ratio,
    })
}
