//! One forward pass through the disentangled model and counterfactual
//! re-ranking of a candidate list.

use dcrec::model::{Mode, ModelConfig, Outputs, Positions, Recommender};
use dcrec::nn::{EncoderKind, Precision};

pub fn main() -> anyhow::Result<()> {
    let cfg = ModelConfig {
        mode: Mode::Dcr,
        encoder: EncoderKind::SelfAttention,
        dim: 8,
        max_len: 6,
        precision: Precision::F64,
        ..ModelConfig::default()
    };
    let model = Recommender::new(cfg, 3, 12, 1)?;
    let history = [3u32, 7, 1, 4];

    let input = model.input(&[&history], &[0])?;
    let targets = model.item_ids(&[0, 5, 9], &[1, 1, 3], false)?;
    let Outputs::Dcr(o) = model.forward(&input, &targets, Positions::Last, None)? else {
        unreachable!("dcr mode")
    };
    println!("y_hat  {:?}", o.y_hat.flatten_all()?.to_vec1::<f64>()?);
    println!("y_m    {:?}", o.y_m.flatten_all()?.to_vec1::<f64>()?);
    if let Some(w) = &o.w_int {
        println!("w_int  {:?}", w.flatten_all()?.to_vec1::<f64>()?);
    }
    println!("direct {:?}", o.direct_effect()?.flatten_all()?.to_vec1::<f64>()?);

    let candidates: Vec<u32> = (0..12).filter(|i| !history.contains(i)).collect();
    for c in [0.0, 1.0, 5.0] {
        let ranked = model.score_candidates(&history, 0, &candidates, c)?;
        let top: Vec<u32> = ranked.iter().take(5).map(|p| p.0).collect();
        println!("c={c}: top-5 {top:?}");
    }
    Ok(())
}
