use candle_core::{Tensor, D};

use super::*;
use crate::data::{compute_propensities, PropensityParams};
use crate::nn::{EncoderKind, Precision};

pub(crate) fn tiny(mode: Mode, kind: EncoderKind) -> ModelConfig {
    ModelConfig {
        mode,
        encoder: kind,
        dim: 4,
        max_len: 6,
        dropout: 0.0,
        rnn_layers: 1,
        attention_layers: 1,
        conv_dilations: vec![1, 2],
        interest_hidden: 5,
        popularity_hidden: 3,
        atten_hidden: 4,
        merge_hidden: 4,
        precision: Precision::F64,
        ..ModelConfig::default()
    }
}

/// Two users over three items, already laid out as next-item examples.
struct Toy {
    input: SeqInput,
    pos: Tensor,
    neg: Tensor,
    props: PropensityTensors,
}

fn toy(model: &Recommender) -> Toy {
    // user 0: 0 1 2 1, user 1: 2 0 1; padding id 3
    let p = 3u32;
    let hist = vec![0, 1, 2, p, 2, 0];
    let pos = vec![1, 2, 1, p, 0, 1];
    let neg = vec![2, 0, 0, p, 1, 2];
    let input = SeqInput::from_padded(hist, 2, 3, &[0, 1], 3, 2, model.dtype()).unwrap();
    let t = |v: Vec<u32>| model.item_ids(&v, &[2, 3], true).unwrap();
    let table = compute_propensities(&[2, 4, 2], PropensityParams::default()).unwrap();
    Toy {
        input,
        pos: t(pos),
        neg: t(neg),
        props: PropensityTensors::new(&table, model.dtype()).unwrap(),
    }
}

fn total_loss(model: &Recommender, toy: &Toy) -> Tensor {
    batch_loss(model, &toy.input, &toy.pos, &toy.neg, &toy.props, None)
        .unwrap()
        .total(model.config().loss_weights())
        .unwrap()
}

fn f64s(t: &Tensor) -> Vec<f64> {
    t.flatten_all().unwrap().to_vec1::<f64>().unwrap()
}

fn dcr_outputs(model: &Recommender, toy: &Toy) -> ForwardOutputs {
    let targets = Tensor::stack(&[&toy.pos, &toy.neg], 2).unwrap();
    match model.forward(&toy.input, &targets, Positions::All, None).unwrap() {
        Outputs::Dcr(o) => o,
        Outputs::Baseline(_) => unreachable!(),
    }
}

#[test]
fn fusion_identities_hold() {
    for kind in [EncoderKind::Recurrent, EncoderKind::DilatedConv, EncoderKind::SelfAttention] {
        let model = Recommender::new(tiny(Mode::Dcr, kind), 2, 3, 5).unwrap();
        let o = dcr_outputs(&model, &toy(&model));
        let (y, ym, yi, yc, di) = (f64s(&o.y_hat), f64s(&o.y_m), f64s(&o.y_m_int), f64s(&o.y_m_con), f64s(&o.y_i));
        let w = f64s(o.w_int.as_ref().unwrap());
        let yu = f64s(&o.y_u.unsqueeze(D::Minus1).unwrap().broadcast_as(o.y_i.dims()).unwrap());
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        for k in 0..y.len() {
            assert!(w[k] > 0.0 && w[k] < 1.0);
            assert!((ym[k] - (w[k] * yi[k] + (1.0 - w[k]) * yc[k])).abs() < 1e-12);
            assert!((y[k] - ym[k] * sig(yu[k]) * sig(di[k])).abs() < 1e-12);
        }
    }
}

#[test]
fn variant_fusions() {
    let m0 = Recommender::new(tiny(Mode::Var0, EncoderKind::SelfAttention), 2, 3, 5).unwrap();
    let o = dcr_outputs(&m0, &toy(&m0));
    assert!(f64s(o.w_int.as_ref().unwrap()).iter().all(|&w| w == 1.0));
    assert_eq!(f64s(&o.y_m), f64s(&o.y_m_int));

    for mode in [Mode::Var1, Mode::Var2] {
        let m = Recommender::new(tiny(mode, EncoderKind::SelfAttention), 2, 3, 5).unwrap();
        let o = dcr_outputs(&m, &toy(&m));
        assert!(o.w_int.is_none());
        let sum: Vec<f64> = f64s(&o.y_m_con).iter().zip(f64s(&o.y_m_int)).map(|(a, b)| a + b).collect();
        assert_eq!(f64s(&o.y_m), sum);
    }
}

#[test]
fn counterfactual_prefers_smaller_direct_effect() {
    let y_hat = Tensor::new(&[[[0.7f64, 0.7]]], &candle_core::Device::Cpu).unwrap();
    let y_u = Tensor::new(&[[0.3f64]], &candle_core::Device::Cpu).unwrap();
    let y_i = Tensor::new(&[[[2.0f64, -1.0]]], &candle_core::Device::Cpu).unwrap();
    for c in [0.0, 1e-3, 1.0, 80.0] {
        let s = f64s(&counterfactual_score(&y_hat, &y_u, &y_i, c).unwrap());
        if c == 0.0 {
            assert_eq!(s, vec![0.7, 0.7]);
        } else {
            assert!(s[0] < s[1]);
        }
    }
}

/// Five-point central differences on a handful of coordinates of every matching parameter.
fn gradient_check(model: &Recommender, toy: &Toy, prefixes: &[&str]) {
    let loss = total_loss(model, toy);
    let grads = loss.backward().unwrap();
    let h = 1e-4;
    let mut checked = 0;
    for (name, var) in model.params().named() {
        if !prefixes.iter().any(|p| name.starts_with(p)) {
            continue;
        }
        let g = f64s(grads.get(var.as_tensor()).unwrap_or_else(|| panic!("{name} not reached by the loss")));
        let base = f64s(var.as_tensor());
        let n = base.len();
        for k in [0, n / 2, n - 1] {
            let eval = |delta: f64| {
                let mut v = base.clone();
                v[k] += delta;
                var.set(&Tensor::from_vec(v, var.dims(), var.device()).unwrap()).unwrap();
                let l = total_loss(model, toy).to_scalar::<f64>().unwrap();
                var.set(&Tensor::from_vec(base.clone(), var.dims(), var.device()).unwrap()).unwrap();
                l
            };
            let numeric = (8.0 * (eval(h) - eval(-h)) - (eval(2.0 * h) - eval(-2.0 * h))) / (12.0 * h);
            let err = (numeric - g[k]).abs() / numeric.abs().max(g[k].abs()).max(1e-6);
            assert!(err <= 1e-4, "{name}[{k}]: autodiff {} vs numeric {numeric} (rel {err:e})", g[k]);
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn heads_and_attention_pass_gradient_check() {
    let mut cfg = tiny(Mode::Dcr, EncoderKind::SelfAttention);
    cfg.alpha = 0.3;
    cfg.beta = 0.2;
    cfg.gamma = 0.5;
    let model = Recommender::new(cfg, 2, 3, 11).unwrap();
    let toy = toy(&model);
    gradient_check(
        &model,
        &toy,
        &["item_popularity", "item_interest", "atten", "item_direct", "user_direct"],
    );
}

#[test]
fn explicit_user_heads_pass_gradient_check() {
    let mut cfg = tiny(Mode::Dcr, EncoderKind::Recurrent);
    cfg.user_dim = 3;
    let model = Recommender::new(cfg, 2, 3, 13).unwrap();
    let toy = toy(&model);
    gradient_check(&model, &toy, &["user_conformity", "user_interest", "merge_con", "merge_int", "user_embedding"]);
}

#[test]
fn baseline_losses_pass_gradient_check() {
    for mode in [Mode::BaseBce, Mode::BaseBpr, Mode::IpwBce, Mode::IpwBpr, Mode::BiasTower, Mode::Macr] {
        let mut cfg = tiny(mode, EncoderKind::DilatedConv);
        // larger kernels put the far taps beyond the 3-step toy sequence, where they get no gradient
        cfg.conv_kernel = 2;
        cfg.conv_dilations = vec![1];
        let model = Recommender::new(cfg, 2, 3, 17).unwrap();
        let toy = toy(&model);
        let heads: &[&str] = match mode {
            Mode::BiasTower => &["item_embedding", "seq", "item_tower"],
            Mode::Macr => &["item_embedding", "seq", "user_branch", "item_branch"],
            _ => &["item_embedding", "seq"],
        };
        gradient_check(&model, &toy, heads);
    }
}

#[test]
fn same_seed_same_parameters() {
    let a = Recommender::new(tiny(Mode::Dcr, EncoderKind::SelfAttention), 2, 3, 9).unwrap();
    let b = Recommender::new(tiny(Mode::Dcr, EncoderKind::SelfAttention), 2, 3, 9).unwrap();
    let c = Recommender::new(tiny(Mode::Dcr, EncoderKind::SelfAttention), 2, 3, 10).unwrap();
    let flat = |m: &Recommender| -> Vec<f64> { m.params().vars().iter().flat_map(|v| f64s(v.as_tensor())).collect() };
    assert_eq!(flat(&a), flat(&b));
    assert_ne!(flat(&a), flat(&c));
}

#[test]
fn candidate_scoring_contract() {
    let model = Recommender::new(tiny(Mode::Dcr, EncoderKind::SelfAttention), 2, 3, 3).unwrap();
    let single = model.score_candidates(&[0, 1], 0, &[2], 30.0).unwrap();
    assert_eq!(single.len(), 1);
    let dup = model.score_candidates(&[0, 1], 0, &[2, 1, 2], 30.0).unwrap();
    assert_eq!(dup[0].1.to_bits() == dup[1].1.to_bits(), dup[0].0 == dup[1].0);
    let twos: Vec<f64> = dup.iter().filter(|(i, _)| *i == 2).map(|(_, s)| *s).collect();
    assert_eq!(twos[0].to_bits(), twos[1].to_bits());
    assert!(matches!(model.score_candidates(&[0], 0, &[3], 0.0), Err(crate::Error::IndexOutOfRange { .. })));
    assert!(matches!(model.score_candidates(&[], 0, &[1], 0.0), Err(crate::Error::Precondition(_))));
    assert!(model.score_candidates(&[0], 0, &[], 0.0).is_err());
}

#[test]
fn checkpoint_roundtrip_scores_bit_identical() {
    for precision in [Precision::F32, Precision::F64] {
        let mut cfg = tiny(Mode::Macr, EncoderKind::Recurrent);
        cfg.precision = precision;
        let model = Recommender::new(cfg, 2, 3, 21).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &model).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.config(), model.config());
        let probe = |m: &Recommender| m.score_parts(&[&[0, 1], &[2]], &[0, 1], &[0, 1, 2, 2, 1, 0], 3).unwrap();
        assert_eq!(probe(&model), probe(&back));

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(crate::Error::Checkpoint(_))));
    }
}

#[test]
fn concurrent_scoring_matches_sequential() {
    let model = Recommender::new(tiny(Mode::Dcr, EncoderKind::SelfAttention), 2, 3, 4).unwrap();
    let run = |k: u32| model.score_parts(&[&[k % 3, 1]], &[0], &[0, 1, 2], 3).unwrap();
    let seq: Vec<ScoreParts> = (0..8).map(run).collect();
    let par: Vec<ScoreParts> = std::thread::scope(|s| {
        let run = &run;
        let hs: Vec<_> = (0..8).map(|k| s.spawn(move || run(k))).collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(seq, par);
}
