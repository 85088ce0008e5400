//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Criteria that need the MovieLens-1M ratings file report BLOCKED when it is
//! missing under `$DCR_DATA_ROOT/ml-1m/ratings.dat`; set `DCR_REQUIRE_DATA=1`
//! to turn that into a failure. The reduced-budget training comparisons take
//! hours on a CPU and only run with `DCR_DESK_SCALE=1`; the full-budget check
//! only runs with `DCR_FULL_SCALE=1`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use candle_core::{DType, Device, Tensor, Var, D};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dcrec::data::synthetic::SyntheticConfig;
use dcrec::data::{
    compute_propensities, gini_index, load_raw, preprocess_with, InteractionDataset, ItemIdx, PreprocessConfig,
    PropensityParams, RawFormat,
};
use dcrec::eval::{disentanglement, rank_metrics, rank_of, sort_candidates, weighted_mean, EvalProtocol, EvalReport, Reweighting};
use dcrec::experiment::{data_root, test_histories, train_and_evaluate, DatasetSpec, ExperimentSpec, RunConfig};
use dcrec::loss::{bce, bpr, ipw_bce, orthogonality, softplus};
use dcrec::model::{batch_loss, counterfactual_score, Mode, ModelConfig, Outputs, Positions, PropensityTensors, Recommender, SeqInput};
use dcrec::nn::{EncoderKind, Precision};

// Tolerances and budgets, fixed here rather than tuned per run.
const ML1M_USERS: usize = 6040;
const ML1M_ITEMS: usize = 3416;
const ML1M_INTERACTIONS: usize = 999_611;
const ML1M_GINI: f64 = 0.6036;
const GINI_TOL: f64 = 0.005;
const FIDELITY_BUDGET: Duration = Duration::from_secs(120);
const ORACLE_INSTANCES: usize = 1000;
const ORACLE_MAX_CANDIDATES: usize = 8;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const GRAD_REL_TOL: f64 = 1e-4;
const BOUNDARY_TOL: f64 = 1e-12;
const IDENTITY_TOL: f64 = 1e-12;
const RANKING_SETS: usize = 100;
const CAUSAL_SEQUENCES: usize = 100;
const CAUSAL_TOL: f64 = 1e-12;
const DESK_MIN_GAIN: f64 = 0.05;
const C_GRID_MAX: f64 = 80.0;
const ORTHO_ON_MAX: f64 = 0.01;
const ORTHO_OFF_MIN: f64 = 0.05;
const FULL_NDCG: (f64, f64) = (0.4438, 0.015);
const FULL_HR: (f64, f64) = (0.6680, 0.02);

const ENCODERS: [EncoderKind; 3] = [EncoderKind::Recurrent, EncoderKind::DilatedConv, EncoderKind::SelfAttention];

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    Blocked,
    NotRun,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn pass_if(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        status: if ok { Status::Pass } else { Status::Fail },
        detail: detail.into(),
    }
}

fn env_flag(name: &str) -> bool {
    std::env::var(name).is_ok_and(|v| v == "1")
}

fn ml1m_path() -> PathBuf {
    data_root().join("ml-1m").join("ratings.dat")
}

fn blocked() -> Outcome {
    Outcome {
        status: Status::Blocked,
        detail: format!("MovieLens-1M not found at {}", ml1m_path().display()),
    }
}

fn not_run(flag: &str, why: &str) -> Outcome {
    Outcome {
        status: Status::NotRun,
        detail: format!("set {flag}=1 to run ({why})"),
    }
}

fn f64s(t: &Tensor) -> Vec<f64> {
    t.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap()
}

// ---------------------------------------------------------------- datasets

fn dataset_fidelity() -> Outcome {
    if !ml1m_path().exists() {
        return blocked();
    }
    let start = Instant::now();
    let raw = load_raw(ml1m_path(), RawFormat::MovielensDat).unwrap();
    let ds = preprocess_with(&raw, &PreprocessConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let g_train = gini_index(&ds.train_counts()).unwrap();
    let g_all = gini_index(&ds.all_counts()).unwrap();
    let (closer, g) = if (g_train - ML1M_GINI).abs() <= (g_all - ML1M_GINI).abs() {
        ("train counts", g_train)
    } else {
        ("all interactions", g_all)
    };
    let counts_ok = ds.num_users() == ML1M_USERS && ds.num_items() == ML1M_ITEMS && ds.num_interactions() == ML1M_INTERACTIONS;
    pass_if(
        counts_ok && (g - ML1M_GINI).abs() <= GINI_TOL && elapsed < FIDELITY_BUDGET,
        format!(
            "{} users, {} items, {} interactions; gini train {g_train:.4}, all {g_all:.4} (closer: {closer}); {:.1}s",
            ds.num_users(),
            ds.num_items(),
            ds.num_interactions(),
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- metrics

/// Rank by repeatedly taking the best remaining candidate.
fn oracle_rank(items: &[ItemIdx], scores: &[f64], target: usize) -> usize {
    let mut left: Vec<usize> = (0..items.len()).collect();
    let mut rank = 0;
    loop {
        rank += 1;
        let mut best = 0;
        for j in 1..left.len() {
            let (a, b) = (left[j], left[best]);
            if scores[a] > scores[b] || (scores[a] == scores[b] && items[a] < items[b]) {
                best = j;
            }
        }
        if left[best] == target {
            return rank;
        }
        left.swap_remove(best);
    }
}

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut mismatches = 0usize;
    let mut cases = 0usize;
    for _ in 0..ORACLE_INSTANCES {
        let num_items = rng.random_range(ORACLE_MAX_CANDIDATES..30);
        let counts: Vec<u64> = (0..num_items).map(|_| rng.random_range(0..50)).collect();
        let mut counts = counts;
        counts[0] += 1;
        let params = PropensityParams {
            omega: rng.random_range(0.0..=1.0),
            ..Default::default()
        };
        let props = compute_propensities(&counts, params).unwrap();
        let k = if rng.random_bool(0.5) { 10 } else { rng.random_range(1..=10) };
        let users = rng.random_range(1..=6);
        let reweighting = [Reweighting::Ipw, Reweighting::RawCount, Reweighting::None][rng.random_range(0..3)];
        let protocol = EvalProtocol {
            k,
            reweighting,
            ..Default::default()
        };
        let (mut nd, mut hr, mut w) = (Vec::new(), Vec::new(), Vec::new());
        let (mut o_nd, mut o_hr, mut o_w) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..users {
            let n = rng.random_range(2..=ORACLE_MAX_CANDIDATES);
            let items: Vec<ItemIdx> = sample(&mut rng, num_items, n).into_iter().map(|i| i as ItemIdx).collect();
            // coarse integer scores force plenty of ties
            let scores: Vec<f64> = if rng.random_bool(0.5) {
                (0..n).map(|_| rng.random_range(0..4) as f64).collect()
            } else {
                (0..n).map(|_| rng.random::<f64>()).collect()
            };
            let target = rng.random_range(0..n);
            let (a, b) = rank_metrics(rank_of(&items, &scores, target), k);
            nd.push(a);
            hr.push(b);
            w.push(protocol.weight(&props, items[target]));

            let r = oracle_rank(&items, &scores, target);
            let (on, oh) = if r <= k { (1.0 / ((r + 1) as f64).log2(), 1.0) } else { (0.0, 0.0) };
            o_nd.push(on);
            o_hr.push(oh);
            let i = items[target] as usize;
            o_w.push(match reweighting {
                Reweighting::Ipw => {
                    let max = *counts.iter().max().unwrap() as f64;
                    1.0 / (counts[i] as f64 / max).powf(params.omega).max(params.eps)
                }
                Reweighting::RawCount => 1.0 / counts[i].max(1) as f64,
                Reweighting::None => 1.0,
            });
            // the ranked order from the library agrees with the oracle too
            let order = sort_candidates(&items, &scores);
            if order.iter().position(|&j| j == target) != Some(r - 1) {
                mismatches += 1;
            }
            cases += 1;
        }
        let oracle_mean = |v: &[f64], w: &[f64]| {
            let mut num = 0.0;
            let mut den = 0.0;
            for (x, y) in v.iter().zip(w) {
                num += x * y;
                den += y;
            }
            num / den
        };
        let lib = (weighted_mean(&nd, &w).unwrap(), weighted_mean(&hr, &w).unwrap());
        let ora = (oracle_mean(&o_nd, &o_w), oracle_mean(&o_hr, &o_w));
        if lib.0.to_bits() != ora.0.to_bits() || lib.1.to_bits() != ora.1.to_bits() {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    pass_if(
        mismatches == 0 && elapsed < ORACLE_BUDGET,
        format!(
            "{ORACLE_INSTANCES} instances, {cases} ranked cases, {mismatches} bit mismatches; {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- losses

/// Autodiff against five-point central differences, per parameter tensor.
///
/// Returns the worst normwise relative error `|a - n| / max(|a|, |n|)` and,
/// for reference only, the worst coordinate-wise one. Coordinates whose
/// gradient is near 1e-8 sit at the roundoff floor of the difference
/// quotient (about 1e-11 absolute), so the coordinate-wise figure says more
/// about the oracle than about the gradient there. The step cannot grow past
/// 1e-4 without straddling ReLU kinks. Tensors whose true gradient is zero
/// (a key bias under softmax) get autodiff roundoff of 1e-17 against an exact
/// numeric 0, so the norm is floored at the quotient's resolution.
fn grad_check(vars: &[Var], f: &dyn Fn() -> Tensor) -> (f64, f64) {
    let value = f();
    let grads = value.backward().unwrap();
    let h = 1e-4;
    // smallest gradient a difference quotient can tell apart from zero
    let resolution = f64::EPSILON * value.to_scalar::<f64>().unwrap().abs().max(1.0) / h;
    let (mut worst, mut worst_coord) = (0.0f64, 0.0f64);
    for v in vars {
        let auto = grads.get(v.as_tensor()).map(f64s).unwrap_or_else(|| vec![0.0; v.elem_count()]);
        let base = f64s(v.as_tensor());
        let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
        for k in 0..base.len() {
            let at = |d: f64| {
                let mut x = base.clone();
                x[k] += d;
                v.set(&Tensor::from_vec(x, v.dims(), v.device()).unwrap()).unwrap();
                let l = f().to_scalar::<f64>().unwrap();
                v.set(&Tensor::from_vec(base.clone(), v.dims(), v.device()).unwrap()).unwrap();
                l
            };
            let numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
            let scale = auto[k].abs().max(numeric.abs()).max(1e-8);
            worst_coord = worst_coord.max((auto[k] - numeric).abs() / scale);
            diff += (auto[k] - numeric).powi(2);
            na += auto[k].powi(2);
            nn += numeric * numeric;
        }
        let scale = na.sqrt().max(nn.sqrt());
        worst = worst.max(diff.sqrt() / scale.max(resolution));
    }
    (worst, worst_coord)
}

fn rand_var(rng: &mut ChaCha8Rng, dims: &[usize], lo: f64, hi: f64) -> Var {
    let n = dims.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Var::from_tensor(&Tensor::from_vec(v, dims, &Device::Cpu).unwrap()).unwrap()
}

fn rand_tensor(rng: &mut ChaCha8Rng, dims: &[usize], lo: f64, hi: f64) -> Tensor {
    rand_var(rng, dims, lo, hi).as_tensor().detach()
}

/// Two users over five items with next-item targets, padding id 5.
fn toy_batch(model: &Recommender) -> (SeqInput, Tensor, Tensor, PropensityTensors) {
    let p = 5u32;
    let hist = vec![0, 1, 2, 3, p, p, 4, 2];
    let pos = vec![1, 2, 3, 4, p, p, 2, 0];
    let neg = vec![3, 4, 0, 1, p, p, 1, 3];
    let input = SeqInput::from_padded(hist, 2, 4, &[0, 1], 5, 2, model.dtype()).unwrap();
    let t = |v: Vec<u32>| model.item_ids(&v, &[2, 4], true).unwrap();
    let table = compute_propensities(&[3, 6, 2, 4, 1], PropensityParams::default()).unwrap();
    (input, t(pos), t(neg), PropensityTensors::new(&table, model.dtype()).unwrap())
}

fn tiny(mode: Mode, encoder: EncoderKind) -> ModelConfig {
    ModelConfig {
        mode,
        encoder,
        dim: 4,
        max_len: 6,
        dropout: 0.0,
        rnn_layers: 1,
        attention_layers: 1,
        conv_kernel: 2,
        conv_dilations: vec![1],
        interest_hidden: 5,
        popularity_hidden: 3,
        atten_hidden: 4,
        merge_hidden: 4,
        alpha: 0.3,
        beta: 0.2,
        gamma: 0.5,
        precision: Precision::F64,
        ..ModelConfig::default()
    }
}

fn loss_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: Vec<(String, (f64, f64))> = Vec::new();

    // element-wise objectives on random inputs, with and without masks
    let labels = Tensor::new(&[[1.0f64, 0.0, 0.0], [1.0, 0.0, 1.0]], &Device::Cpu).unwrap();
    let mask = Tensor::new(&[[1.0f64, 1.0, 0.0], [1.0, 1.0, 1.0]], &Device::Cpu).unwrap();
    let s = rand_var(&mut rng, &[2, 3], -3.0, 3.0);
    let tp = rand_tensor(&mut rng, &[2, 3], 0.05, 1.0);
    let tn = rand_tensor(&mut rng, &[2, 3], 0.05, 1.0);
    worst.push(("softplus".into(), grad_check(std::slice::from_ref(&s), &|| softplus(s.as_tensor()).unwrap().sum_all().unwrap())));
    worst.push(("bce".into(), grad_check(std::slice::from_ref(&s), &|| bce(s.as_tensor(), &labels, Some(&mask)).unwrap())));
    worst.push((
        "ipw_bce".into(),
        grad_check(std::slice::from_ref(&s), &|| ipw_bce(s.as_tensor(), &labels, &tp, &tn, 1e-3, Some(&mask)).unwrap()),
    ));
    let pos = rand_var(&mut rng, &[2, 3], -2.0, 2.0);
    let neg = rand_var(&mut rng, &[2, 3], -2.0, 2.0);
    let bw = rand_tensor(&mut rng, &[2, 3], 0.5, 3.0);
    worst.push((
        "bpr".into(),
        grad_check(&[pos.clone(), neg.clone()], &|| bpr(pos.as_tensor(), neg.as_tensor(), Some(&bw), Some(&mask)).unwrap()),
    ));
    let a = rand_var(&mut rng, &[2, 3, 4], -1.0, 1.0);
    let b = rand_var(&mut rng, &[2, 3, 4], -1.0, 1.0);
    worst.push((
        "orthogonality".into(),
        grad_check(&[a.clone(), b.clone()], &|| orthogonality(a.as_tensor(), b.as_tensor(), Some(&mask)).unwrap()),
    ));

    // every component of the model objectives, through all parameters
    let setups: Vec<(&str, ModelConfig)> = vec![
        ("dcr", tiny(Mode::Dcr, EncoderKind::SelfAttention)),
        ("dcr+user", ModelConfig { user_dim: 3, ..tiny(Mode::Dcr, EncoderKind::Recurrent) }),
        ("dcr/bpr", ModelConfig { main_loss: dcrec::model::MainLoss::Bpr, ..tiny(Mode::Dcr, EncoderKind::DilatedConv) }),
        ("var1", tiny(Mode::Var1, EncoderKind::SelfAttention)),
        ("ipw_bce", tiny(Mode::IpwBce, EncoderKind::SelfAttention)),
        ("ipw_bpr", tiny(Mode::IpwBpr, EncoderKind::Recurrent)),
        ("bias_tower", tiny(Mode::BiasTower, EncoderKind::DilatedConv)),
        ("macr", tiny(Mode::Macr, EncoderKind::SelfAttention)),
    ];
    for (label, cfg) in setups {
        let weights = cfg.loss_weights();
        let model = Recommender::new(cfg, 2, 5, 23).unwrap();
        let (input, pos, neg, props) = toy_batch(&model);
        let vars: Vec<Var> = model.params().vars();
        let comps = batch_loss(&model, &input, &pos, &neg, &props, None).unwrap();
        for (name, t) in comps.iter() {
            if t.is_none() {
                continue;
            }
            let f = || {
                let c = batch_loss(&model, &input, &pos, &neg, &props, None).unwrap();
                let t = c.iter().find(|(n, _)| *n == name).unwrap().1.unwrap().clone();
                t
            };
            worst.push((format!("{label}.{name}"), grad_check(&vars, &f)));
        }
        let total = || batch_loss(&model, &input, &pos, &neg, &props, None).unwrap().total(weights).unwrap();
        worst.push((format!("{label}.total"), grad_check(&vars, &total)));
    }
    let (name, max) = worst.iter().fold(("", 0.0f64), |acc, (n, e)| if e.0 > acc.1 { (n.as_str(), e.0) } else { acc });
    let coord = worst.iter().map(|(_, e)| e.1).fold(0.0, f64::max);

    // unit propensities reproduce bce bit for bit
    let ones = s.as_tensor().ones_like().unwrap();
    let unit = ipw_bce(s.as_tensor(), &labels, &ones, &ones, 1e-3, Some(&mask)).unwrap().to_scalar::<f64>().unwrap();
    let plain = bce(s.as_tensor(), &labels, Some(&mask)).unwrap().to_scalar::<f64>().unwrap();

    // orthogonality boundaries
    let t = |v: &[f64]| Tensor::from_slice(v, (1, v.len()), &Device::Cpu).unwrap();
    let ortho = |a: &[f64], b: &[f64]| orthogonality(&t(a), &t(b), None).unwrap().to_scalar::<f64>().unwrap();
    let o_orth = ortho(&[1.0, 2.0, 0.0], &[-2.0, 1.0, 5.0]);
    let o_par = ortho(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]);
    let o_anti = ortho(&[1.0, 2.0, 3.0], &[-0.5, -1.0, -1.5]);

    let ok = max <= GRAD_REL_TOL
        && unit.to_bits() == plain.to_bits()
        && o_orth.abs() <= BOUNDARY_TOL
        && (o_par - 1.0).abs() <= BOUNDARY_TOL
        && (o_anti - 1.0).abs() <= BOUNDARY_TOL;
    pass_if(
        ok,
        format!(
            "{} gradient checks, worst rel err {max:.2e} ({name}; worst single coordinate {coord:.1e}); ipw(unit) == bce: {}; orthogonal {o_orth:.1e}, parallel {o_par}, antiparallel {o_anti}",
            worst.len(),
            unit.to_bits() == plain.to_bits()
        ),
    )
}

// ---------------------------------------------------------------- model

fn random_histories(rng: &mut ChaCha8Rng, b: usize, num_items: usize, max_len: usize) -> Vec<Vec<ItemIdx>> {
    (0..b)
        .map(|_| {
            let l = rng.random_range(1..=max_len);
            (0..l).map(|_| rng.random_range(0..num_items) as ItemIdx).collect()
        })
        .collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot_last(a: &Tensor, b: &Tensor) -> Vec<f64> {
    f64s(&(a.broadcast_mul(b).unwrap()).sum(D::Minus1).unwrap())
}

fn structural_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (nu, ni) = (5, 12);
    let mut passes = 0;
    let mut worst: f64 = 0.0;
    for kind in ENCODERS {
        for mode in [Mode::Dcr, Mode::Var0, Mode::Var1, Mode::Var2] {
            for user_dim in [0, 3] {
                let cfg = ModelConfig {
                    dim: 6,
                    max_len: 8,
                    user_dim,
                    ..tiny(mode, kind)
                };
                let model = Recommender::new(cfg, nu, ni, rng.random()).unwrap();
                for _ in 0..3 {
                    let hist = random_histories(&mut rng, 3, ni, 8);
                    let refs: Vec<&[ItemIdx]> = hist.iter().map(Vec::as_slice).collect();
                    let users: Vec<u32> = (0..3).map(|_| rng.random_range(0..nu as u32)).collect();
                    let input = model.input(&refs, &users).unwrap();
                    let l = input.history.dim(1).unwrap();
                    let targets: Vec<u32> = (0..3 * l * 4).map(|_| rng.random_range(0..ni as u32)).collect();
                    let targets = model.item_ids(&targets, &[3, l, 4], false).unwrap();
                    let Outputs::Dcr(o) = model.forward(&input, &targets, Positions::All, None).unwrap() else {
                        unreachable!()
                    };
                    passes += 1;
                    let pc = o.pref_con.unsqueeze(2).unwrap();
                    let pi = o.pref_int.unsqueeze(2).unwrap();
                    let con = dot_last(&o.e_pop_i, &pc);
                    let int = dot_last(&o.e_int_i, &pi);
                    let (y, ym, yi) = (f64s(&o.y_hat), f64s(&o.y_m), f64s(&o.y_i));
                    let yu = f64s(&o.y_u.unsqueeze(D::Minus1).unwrap().broadcast_as(o.y_i.dims()).unwrap());
                    let w = o.w_int.as_ref().map(f64s);
                    let c = rng.random_range(0.0..80.0);
                    let cf = f64s(&o.counterfactual(c).unwrap());
                    for k in 0..y.len() {
                        let fused = match &w {
                            Some(w) => w[k] * int[k] + (1.0 - w[k]) * con[k],
                            None => int[k] + con[k],
                        };
                        let direct = sig(yu[k]) * sig(yi[k]);
                        worst = worst
                            .max((ym[k] - fused).abs())
                            .max((y[k] - ym[k] * direct).abs())
                            .max((cf[k] - (y[k] - c * direct)).abs());
                    }
                }
            }
        }
    }

    // c = 0 leaves the biased ranking untouched
    let mut same = 0;
    for set in 0..RANKING_SETS {
        let mode = [Mode::Dcr, Mode::Var0, Mode::Var1, Mode::Var2, Mode::Macr][set % 5];
        let model = Recommender::new(tiny(mode, ENCODERS[set % 3]), nu, ni, set as u64).unwrap();
        let hist = random_histories(&mut rng, 1, ni, 6);
        let n = rng.random_range(2..=ni);
        let cands: Vec<ItemIdx> = sample(&mut rng, ni, n).into_iter().map(|i| i as ItemIdx).collect();
        let parts = model.score_parts(&[&hist[0]], &[0], &cands, n).unwrap();
        let biased = sort_candidates(&cands, &parts.biased);
        let at_zero = sort_candidates(&cands, &parts.row_scores(0, 0.0));
        let listed: Vec<ItemIdx> = model.score_candidates(&hist[0], 0, &cands, 0.0).unwrap().iter().map(|p| p.0).collect();
        let biased_items: Vec<ItemIdx> = biased.iter().map(|&j| cands[j]).collect();
        if biased == at_zero && listed == biased_items {
            same += 1;
        }
    }
    // and the free function agrees with the identity on arbitrary tensors
    let yh = rand_tensor(&mut rng, &[2, 3, 5], -2.0, 2.0);
    let yu = rand_tensor(&mut rng, &[2, 3], -2.0, 2.0);
    let yi = rand_tensor(&mut rng, &[2, 3, 5], -2.0, 2.0);
    let zero_ok = f64s(&counterfactual_score(&yh, &yu, &yi, 0.0).unwrap()) == f64s(&yh);

    pass_if(
        worst <= IDENTITY_TOL && same == RANKING_SETS && zero_ok,
        format!("{passes} forward passes, max deviation {worst:.1e}; c=0 ranking identical on {same}/{RANKING_SETS} candidate sets"),
    )
}

fn causality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (nu, ni, max_len) = (4, 15, 10);
    let mut report = Vec::new();
    let mut all_ok = true;
    for kind in ENCODERS {
        let cfg = ModelConfig {
            dim: 8,
            max_len,
            rnn_layers: 2,
            attention_layers: 2,
            conv_kernel: 3,
            conv_dilations: vec![1, 2, 4],
            ..tiny(Mode::Dcr, kind)
        };
        let model = Recommender::new(cfg, nu, ni, 3).unwrap();
        let mut clean = 0;
        let mut worst: f64 = 0.0;
        for _ in 0..CAUSAL_SEQUENCES {
            let l = rng.random_range(2..=max_len);
            let seq: Vec<ItemIdx> = (0..l).map(|_| rng.random_range(0..ni) as ItemIdx).collect();
            let t = rng.random_range(0..l - 1);
            let mut moved = seq.clone();
            for x in moved.iter_mut().skip(t + 1) {
                *x = (*x + rng.random_range(1..ni as u32)) % ni as u32;
            }
            let targets: Vec<u32> = (0..l * 3).map(|_| rng.random_range(0..ni as u32)).collect();
            let targets = model.item_ids(&targets, &[1, l, 3], false).unwrap();
            let run = |s: &[ItemIdx]| {
                let input = model.input(&[s], &[1]).unwrap();
                let Outputs::Dcr(o) = model.forward(&input, &targets, Positions::All, None).unwrap() else {
                    unreachable!()
                };
                let upto = |x: &Tensor| f64s(&x.narrow(1, 0, t + 1).unwrap());
                [upto(&o.y_hat), upto(&o.pref_con), upto(&o.pref_int), upto(&o.y_u)].concat()
            };
            let (a, b) = (run(&seq), run(&moved));
            let dev = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            worst = worst.max(dev);
            if dev <= CAUSAL_TOL {
                clean += 1;
            }
        }
        all_ok &= clean == CAUSAL_SEQUENCES;
        report.push(format!("{kind:?} {clean}/{CAUSAL_SEQUENCES} (max dev {worst:.1e})"));
    }
    pass_if(all_ok, report.join(", "))
}

// ---------------------------------------------------------------- training comparisons

struct DeskRuns {
    reports: Vec<(Mode, EvalReport)>,
    ortho_on: dcrec::eval::Disentanglement,
    ortho_off: dcrec::eval::Disentanglement,
}

fn desk_spec() -> ExperimentSpec {
    ExperimentSpec::from_toml(include_str!("../../../configs/ml1m_desk.toml")).unwrap()
}

fn orthogonality_pair(base: &RunConfig, ds: &InteractionDataset) -> (dcrec::eval::Disentanglement, dcrec::eval::Disentanglement) {
    let hist = test_histories(ds);
    let users: Vec<_> = hist.iter().map(|(u, h)| (*u, h.as_slice())).collect();
    let measure = |gamma: f64| {
        let mut cfg = base.clone();
        cfg.model.mode = Mode::Dcr;
        cfg.model.gamma = gamma;
        cfg.exposure.enabled = false;
        let (model, _, _) = train_and_evaluate(&cfg, ds, &[], None).unwrap();
        disentanglement(&model, &users, 256).unwrap()
    };
    (measure(0.5), measure(0.0))
}

fn desk_runs() -> DeskRuns {
    let spec = desk_spec();
    let cs = spec.c_values().unwrap().unwrap();
    let points = spec.points().unwrap();
    let ds = points[0].1.dataset.load().unwrap();
    let reports = points
        .iter()
        .map(|(_, cfg)| {
            let mut cfg = cfg.clone();
            cfg.exposure.enabled = false;
            let (_, _, r) = train_and_evaluate(&cfg, &ds, &cs, None).unwrap();
            eprintln!("  {}: test NDCG@10 {:.4} at c={}", cfg.model.mode, r.ndcg, r.c);
            (cfg.model.mode, r)
        })
        .collect();
    let (ortho_on, ortho_off) = orthogonality_pair(&points[0].1, &ds);
    DeskRuns {
        reports,
        ortho_on,
        ortho_off,
    }
}

fn ndcg_of(runs: &DeskRuns, mode: Mode) -> f64 {
    runs.reports.iter().find(|(m, _)| *m == mode).unwrap().1.ndcg
}

fn desk_gain(runs: &DeskRuns) -> Outcome {
    let (d, b) = (ndcg_of(runs, Mode::Dcr), ndcg_of(runs, Mode::BaseBce));
    let gain = d / b - 1.0;
    pass_if(gain >= DESK_MIN_GAIN, format!("DCR {d:.4} vs base_bce {b:.4}: {:+.1}%", 100.0 * gain))
}

fn c_sweep_shape(runs: &DeskRuns) -> Outcome {
    let r = &runs.reports.iter().find(|(m, _)| *m == Mode::Dcr).unwrap().1;
    let best = r.c_grid.iter().fold(r.c_grid[0], |a, p| if p.ndcg > a.ndcg { *p } else { a });
    let curve: Vec<String> = r.c_grid.iter().map(|p| format!("{}:{:.4}", p.c, p.ndcg)).collect();
    pass_if(best.c > 0.0 && best.c < C_GRID_MAX, format!("best c = {}; {}", best.c, curve.join(" ")))
}

fn ortho_outcome(on: &dcrec::eval::Disentanglement, off: &dcrec::eval::Disentanglement, note: &str) -> Outcome {
    pass_if(
        on.mean() <= ORTHO_ON_MAX && off.mean() > ORTHO_OFF_MIN,
        format!(
            "{note}gamma=0.5: {:.4} (user {:.4}, item {:.4}); gamma=0: {:.4} (user {:.4}, item {:.4})",
            on.mean(),
            on.user,
            on.item,
            off.mean(),
            off.user,
            off.item
        ),
    )
}

fn ablation_order(runs: &DeskRuns) -> Outcome {
    let [d, v0, v1, v2] = [Mode::Dcr, Mode::Var0, Mode::Var1, Mode::Var2].map(|m| ndcg_of(runs, m));
    pass_if(
        d >= v2 && v2 >= v1 && d > v0,
        format!("dcr {d:.4}, var2 {v2:.4}, var1 {v1:.4}, var0 {v0:.4}"),
    )
}

/// Stand-in for the orthogonality criterion when the ratings file is absent.
fn synthetic_orthogonality() -> Outcome {
    let mut cfg = ExperimentSpec::default().base();
    cfg.dataset = DatasetSpec::synthetic(SyntheticConfig::default());
    cfg.model.dim = 16;
    cfg.model.max_len = 30;
    cfg.train.max_epochs = 40;
    cfg.train.patience = 10;
    cfg.train.batch_size = 32;
    cfg.train.c_grid = vec![0.0, 10.0, 30.0];
    let ds = cfg.dataset.load().unwrap();
    let (on, off) = orthogonality_pair(&cfg, &ds);
    ortho_outcome(&on, &off, "synthetic stand-in, ML-1M absent; ")
}

fn full_scale() -> Outcome {
    let spec = ExperimentSpec::from_toml(include_str!("../../../configs/ml1m_full.toml")).unwrap();
    let (_, base) = spec.points().unwrap().into_iter().find(|(_, c)| c.model.mode == Mode::Dcr).unwrap();
    let ds = base.dataset.load().unwrap();
    let (mut nd, mut hr) = (Vec::new(), Vec::new());
    for k in 0..spec.repeat as u64 {
        let mut cfg = base.clone();
        cfg.train.seed = base.train.seed + k;
        cfg.exposure.enabled = false;
        let (_, _, r) = train_and_evaluate(&cfg, &ds, &[], None).unwrap();
        nd.push(r.ndcg);
        hr.push(r.hit_rate);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (n, h) = (mean(&nd), mean(&hr));
    pass_if(
        (n - FULL_NDCG.0).abs() <= FULL_NDCG.1 && (h - FULL_HR.0).abs() <= FULL_HR.1,
        format!("NDCG@10 {n:.4} (target {} ± {}), HR@10 {h:.4} (target {} ± {})", FULL_NDCG.0, FULL_NDCG.1, FULL_HR.0, FULL_HR.1),
    )
}

// ---------------------------------------------------------------- driver

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome {
                status: Status::Fail,
                detail: format!("panicked: {msg}"),
            }
        }
    }
}

fn main() {
    let have_data = ml1m_path().exists();
    let desk = env_flag("DCR_DESK_SCALE");
    let mut results: Vec<(&str, Outcome, f64)> = Vec::new();
    let mut record = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = guarded(f);
        let secs = start.elapsed().as_secs_f64();
        let tag = match o.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Blocked => "BLOCKED",
            Status::NotRun => "NOT RUN",
        };
        println!("[{tag}] {name}: {} [{secs:.1}s]", o.detail);
        results.push((name, o, secs));
    };

    record("dataset fidelity", &mut dataset_fidelity);
    record("metric oracle", &mut metric_oracle);
    record("loss/gradient suite", &mut loss_suite);
    record("structural identities", &mut structural_identities);
    record("causality suite", &mut causality);

    let runs = if have_data && desk {
        match catch_unwind(AssertUnwindSafe(desk_runs)) {
            Ok(r) => Some(Ok(r)),
            Err(_) => Some(Err(())),
        }
    } else {
        None
    };
    let crashed = || Outcome {
        status: Status::Fail,
        detail: "reduced-budget training runs panicked".into(),
    };
    let gated = |f: &dyn Fn(&DeskRuns) -> Outcome| match &runs {
        Some(Ok(r)) => f(r),
        Some(Err(())) => crashed(),
        None if !have_data => blocked(),
        None => not_run("DCR_DESK_SCALE", "hours on a CPU"),
    };
    record("desk-scale gain over base_bce", &mut || gated(&desk_gain));
    record("c-sweep shape", &mut || gated(&c_sweep_shape));
    record("orthogonality effect", &mut || match &runs {
        Some(Ok(r)) => ortho_outcome(&r.ortho_on, &r.ortho_off, ""),
        Some(Err(())) => crashed(),
        None if !have_data => synthetic_orthogonality(),
        None => not_run("DCR_DESK_SCALE", "hours on a CPU"),
    });
    record("ablation ordering", &mut || gated(&ablation_order));
    record("full-scale spot check (optional)", &mut || {
        if !have_data {
            blocked()
        } else if env_flag("DCR_FULL_SCALE") {
            full_scale()
        } else {
            not_run("DCR_FULL_SCALE", "days on a CPU")
        }
    });

    let require_data = env_flag("DCR_REQUIRE_DATA");
    let failed: Vec<&str> = results
        .iter()
        .filter(|(_, o, _)| o.status == Status::Fail || (require_data && o.status == Status::Blocked))
        .map(|(n, _, _)| *n)
        .collect();
    let count = |s: Status| results.iter().filter(|(_, o, _)| o.status == s).count();
    println!(
        "acceptance: {} passed, {} failed, {} blocked, {} not run",
        count(Status::Pass),
        count(Status::Fail),
        count(Status::Blocked),
        count(Status::NotRun)
    );
    if !failed.is_empty() {
        eprintln!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
