//! The training objectives on hand-made scores, and the weighted total of a
//! real batch.

use candle_core::{Device, Tensor};
use dcrec::data::{compute_propensities, PropensityParams};
use dcrec::loss::{bce, bpr, ipw_bce, orthogonality, LossWeights};
use dcrec::model::{batch_loss, Mode, ModelConfig, PropensityTensors, Recommender, SeqInput};
use dcrec::nn::Precision;

pub fn main() -> anyhow::Result<()> {
    let dev = Device::Cpu;
    let s = Tensor::new(&[0.0f64, 2.0, -1.0], &dev)?;
    let y = Tensor::new(&[1.0f64, 1.0, 0.0], &dev)?;
    let ones = s.ones_like()?;
    let half = (&ones * 0.5)?;
    println!("bce                 {:.6}", bce(&s, &y, None)?.to_scalar::<f64>()?);
    println!("ipw_bce, unit theta {:.6}", ipw_bce(&s, &y, &ones, &ones, 1e-3, None)?.to_scalar::<f64>()?);
    println!("ipw_bce, theta=0.5  {:.6}", ipw_bce(&s, &y, &half, &half, 1e-3, None)?.to_scalar::<f64>()?);
    println!("bpr(1, 0)           {:.6}", bpr(&Tensor::new(&[1.0f64], &dev)?, &Tensor::new(&[0.0f64], &dev)?, None, None)?.to_scalar::<f64>()?);
    let a = Tensor::new(&[[1.0f64, 0.0], [1.0, 1.0]], &dev)?;
    let b = Tensor::new(&[[0.0f64, 3.0], [-2.0, -2.0]], &dev)?;
    println!("orthogonality       {:.6}  (pairs: orthogonal, antiparallel)", orthogonality(&a, &b, None)?.to_scalar::<f64>()?);

    // one batch through the model: two users, next-item targets, padding id 6
    let cfg = ModelConfig {
        mode: Mode::Dcr,
        dim: 8,
        max_len: 4,
        precision: Precision::F64,
        ..ModelConfig::default()
    };
    let model = Recommender::new(cfg, 2, 6, 3)?;
    let p = 6u32;
    let input = SeqInput::from_padded(vec![0, 1, 2, 3, p, p, 4, 5], 2, 4, &[0, 1], 6, 2, model.dtype())?;
    let pos = model.item_ids(&[1, 2, 3, 4, p, p, 5, 0], &[2, 4], true)?;
    let neg = model.item_ids(&[5, 5, 0, 1, p, p, 2, 3], &[2, 4], true)?;
    let table = compute_propensities(&[3, 5, 2, 4, 1, 2], PropensityParams::default())?;
    let props = PropensityTensors::new(&table, model.dtype())?;
    let parts = batch_loss(&model, &input, &pos, &neg, &props, None)?;
    for (name, v) in parts.values()? {
        if let Some(v) = v {
            println!("{name:<11} {v:.6}");
        }
    }
    for w in [
        LossWeights { alpha: 0.0, beta: 0.0, gamma: 0.0 },
        LossWeights { alpha: 2e-2, beta: 2e-2, gamma: 0.5 },
    ] {
        println!("total at {w:?}: {:.6}", parts.total(w)?.to_scalar::<f64>()?);
    }
    Ok(())
}
