//! One-tailed Welch test between two sets of per-seed scores.

use dcrec::eval::welch_one_tailed;

pub fn main() -> anyhow::Result<()> {
    let dcr = [0.441, 0.446, 0.439, 0.448, 0.443];
    let base = [0.371, 0.376, 0.369, 0.374, 0.372];
    println!("dcr > base: p = {:.3e}", welch_one_tailed(&dcr, &base)?);
    println!("base > dcr: p = {:.3}", welch_one_tailed(&base, &dcr)?);
    let close = [0.372, 0.377, 0.368, 0.375, 0.371];
    println!("near-identical runs: p = {:.3}", welch_one_tailed(&close, &base)?);
    Ok(())
}
