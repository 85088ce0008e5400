//! Observation propensities from item counts and the weights derived from them.

use dcrec::data::{compute_propensities, popularity_buckets, PropensityParams};

pub fn main() -> anyhow::Result<()> {
    let counts = [4u64, 2, 1, 0];
    let table = compute_propensities(&counts, PropensityParams::default())?;
    println!("item  count  theta+   theta-   1/theta+  1/count");
    for i in 0..counts.len() {
        let i = i as u32;
        println!(
            "{i:>4}  {:>5}  {:.4}  {:.4}  {:>8.4}  {:.4}",
            counts[i as usize],
            table.theta_pos(i),
            table.theta_neg(i),
            table.positive_weight(i),
            table.raw_count_weight(i)
        );
    }

    // omega = 0 switches the positive correction off
    let flat = compute_propensities(&counts, PropensityParams { omega: 0.0, ..Default::default() })?;
    println!("omega=0: theta+ = {:?}", flat.theta_pos);

    let buckets = popularity_buckets(&[5, 500, 2000, 40], &[100, 1000])?;
    for b in 0..buckets.num_buckets() {
        println!("bucket {}: {:?}", buckets.label(b), (0..4).filter(|&i| buckets.assignment[i] == b).collect::<Vec<_>>());
    }
    Ok(())
}
