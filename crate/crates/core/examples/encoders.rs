//! The three sequence backbones on a left-padded batch, and a quick look at
//! causality: editing the last item leaves earlier states untouched.

use candle_core::{DType, Device, Tensor};
use dcrec::nn::{EncoderConfig, EncoderKind, ParamStore, Precision, SequenceEncoder};

pub fn main() -> anyhow::Result<()> {
    let (b, l, d) = (2, 5, 8);
    let dev = Device::Cpu;
    // second row has two padding slots on the left
    let mask = Tensor::new(&[[1.0f64, 1.0, 1.0, 1.0, 1.0], [0.0, 0.0, 1.0, 1.0, 1.0]], &dev)?;
    let x = (Tensor::randn(0.0f64, 1.0, (b, l, d), &dev)?.broadcast_mul(&mask.unsqueeze(2)?))?;

    for kind in [EncoderKind::Recurrent, EncoderKind::DilatedConv, EncoderKind::SelfAttention] {
        let cfg = EncoderConfig {
            dropout: 0.0,
            ..EncoderConfig::new(kind, d, l)
        };
        let mut store = ParamStore::new(7, Precision::F64);
        let enc = SequenceEncoder::new(&mut store, "seq", &cfg)?;
        let states = enc.forward(&x, &mask, None)?;
        let last = enc.encode(&x, &mask, None)?;

        // replace the most recent item of the first row
        let mut edited = x.to_vec3::<f64>()?;
        for v in edited[0][l - 1].iter_mut() {
            *v += 1.0;
        }
        let moved = enc.forward(&Tensor::new(edited, &dev)?, &mask, None)?;
        let earlier = (states.narrow(1, 0, l - 1)? - moved.narrow(1, 0, l - 1)?)?
            .abs()?
            .flatten_all()?
            .max(0)?
            .to_dtype(DType::F64)?
            .to_scalar::<f64>()?;
        let padded = states.narrow(0, 1, 1)?.narrow(1, 0, 2)?.abs()?.sum_all()?.to_scalar::<f64>()?;
        println!(
            "{kind:?}: states {:?}, last {:?}, {} parameters, earlier-state change {earlier:.1e}, padded-state mass {padded}",
            states.dims(),
            last.dims(),
            store.named().len()
        );
    }
    Ok(())
}
