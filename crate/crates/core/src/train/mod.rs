//! Training: batching, the multi-task optimisation loop and early stopping.

mod batches;
mod log;

pub use self::log::{EpochRecord, MetricsLog};
pub use batches::{make_batches, TrainBatch};

use std::time::Instant;

use candle_core::backprop::GradStore;
use candle_core::DType;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use serde::{Deserialize, Serialize};

use crate::data::{FitView, PropensityTable};
use crate::eval::{evaluate_c_grid, validation_cases, EvalProtocol, MetricPoint};
use crate::loss::LossComponents;
use crate::model::{batch_loss, PropensityTensors, Recommender};
use crate::nn::TrainCtx;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Global gradient-norm clip; off when `None`.
    pub grad_clip: Option<f64>,
    /// Pick `c` from `c_grid` on validation; otherwise keep the configured `c`.
    pub tune_c: bool,
    pub c_grid: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 128,
            max_epochs: 200,
            patience: 40,
            seed: 0,
            grad_clip: None,
            tune_c: true,
            c_grid: (0..=8).map(|k| 10.0 * k as f64).collect(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} must be finite and >= 0", self.learning_rate)));
        }
        if self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config("batch_size and patience must be >= 1".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config("grad_clip must be positive".into()));
            }
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Config("c_grid must be a non-empty list of values >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub best_metric: f64,
    pub best_epoch: Option<usize>,
    pub best_c: f64,
    pub epochs_since_improvement: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    /// Records one epoch's validation result; true when it is a new best.
    pub fn observe(&mut self, epoch: usize, point: MetricPoint) -> bool {
        self.epoch = epoch;
        if point.ndcg > self.best_metric {
            self.best_metric = point.ndcg;
            self.best_epoch = Some(epoch);
            self.best_c = point.c;
            self.epochs_since_improvement = 0;
            true
        } else {
            self.epochs_since_improvement += 1;
            false
        }
    }
}

fn clip_gradients(grads: &mut GradStore, model: &Recommender, max_norm: f64) -> Result<()> {
    let vars = model.params().vars();
    let mut sq = 0.0;
    for v in &vars {
        if let Some(g) = grads.get(v.as_tensor()) {
            sq += g.to_dtype(DType::F64)?.sqr()?.sum_all()?.to_scalar::<f64>()?;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for v in &vars {
            if let Some(g) = grads.remove(v.as_tensor()) {
                grads.insert(v.as_tensor(), (g * scale)?);
            }
        }
    }
    Ok(())
}

/// One optimiser step per batch on the weighted total loss.
/// Returns the epoch mean of each loss term and of the total.
pub fn train_epoch(
    model: &Recommender,
    batches: &[TrainBatch],
    opt: &mut AdamW,
    props: &PropensityTensors,
    ctx: &TrainCtx,
    grad_clip: Option<f64>,
) -> Result<(Vec<Option<f64>>, f64)> {
    let weights = model.config().loss_weights();
    let mut sums = vec![None::<f64>; LossComponents::NAMES.len()];
    let mut total_sum = 0.0;
    for (k, b) in batches.iter().enumerate() {
        let input = crate::model::SeqInput::from_padded(
            b.inputs.clone(),
            b.rows,
            b.len,
            &b.users,
            model.num_items(),
            model.num_users(),
            model.dtype(),
        )?;
        let pos = model.item_ids(&b.pos, &[b.rows, b.len], true)?;
        let neg = model.item_ids(&b.neg, &[b.rows, b.len], true)?;
        let comps = batch_loss(model, &input, &pos, &neg, props, Some(ctx))?;
        let total = comps.total(weights)?;
        let total_v = total.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        let values = comps.values()?;
        if !total_v.is_finite() || values.iter().any(|(_, v)| v.is_some_and(|v| !v.is_finite())) {
            let detail = values
                .iter()
                .filter_map(|(n, v)| v.map(|v| format!("{n}={v}")))
                .collect::<Vec<_>>()
                .join(", ");
            return Err(Error::NonFiniteLoss {
                batch: k,
                components: format!("{detail}, total={total_v}"),
            });
        }
        let mut grads = total.backward()?;
        if let Some(c) = grad_clip {
            clip_gradients(&mut grads, model, c)?;
        }
        opt.step(&grads)?;
        total_sum += total_v;
        for (slot, (_, v)) in sums.iter_mut().zip(values) {
            if let Some(v) = v {
                *slot = Some(slot.unwrap_or(0.0) + v);
            }
        }
    }
    let n = batches.len().max(1) as f64;
    Ok((sums.into_iter().map(|s| s.map(|s| s / n)).collect(), total_sum / n))
}

fn best_point(points: &[MetricPoint]) -> MetricPoint {
    // first maximum, so ties keep the smaller c
    *points
        .iter()
        .reduce(|a, b| if b.ndcg > a.ndcg { b } else { a })
        .expect("non-empty grid")
}

pub fn new_optimizer(model: &Recommender, learning_rate: f64) -> Result<AdamW> {
    Ok(AdamW::new(
        model.params().vars(),
        ParamsAdamW {
            lr: learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        },
    )?)
}

/// Trains with early stopping on validation NDCG@K and restores the best parameters.
///
/// Only the fit view (training prefixes and validation items) is visible here.
/// For models with a counterfactual adjustment and `tune_c`, each epoch is
/// scored at every `c` in the grid and the best `(epoch, c)` pair wins; the
/// model's `c` is set to that value on return.
pub fn fit(
    model: &mut Recommender,
    fit: &FitView<'_>,
    props: &PropensityTable,
    cfg: &TrainConfig,
    protocol: &EvalProtocol,
    mut log: Option<&mut MetricsLog>,
) -> Result<TrainState> {
    cfg.validate()?;
    protocol.validate()?;
    if fit.num_items() != model.num_items() || props.num_items() != model.num_items() {
        return Err(Error::Precondition("model, data and propensities disagree on catalogue size".into()));
    }
    let mut state = TrainState {
        best_metric: f64::NEG_INFINITY,
        best_c: model.config().c,
        ..Default::default()
    };
    if cfg.max_epochs == 0 {
        ::log::warn!("max_epochs = 0: returning the initialised model");
        return Ok(state);
    }
    let cs: Vec<f64> = if cfg.tune_c && model.config().mode.uses_counterfactual() {
        cfg.c_grid.clone()
    } else {
        vec![model.config().c]
    };
    let cases = validation_cases(fit, protocol)?;
    let prop_t = PropensityTensors::new(props, model.dtype())?;
    let ctx = TrainCtx::new(cfg.seed ^ 0x5eed_0000);
    let mut opt = new_optimizer(model, cfg.learning_rate)?;
    let mut best = model.params().snapshot()?;

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let batches = make_batches(fit, cfg.batch_size, model.config().max_len, cfg.seed.wrapping_add(epoch as u64))?;
        let (losses, total) = train_epoch(model, &batches, &mut opt, &prop_t, &ctx, cfg.grad_clip)?;
        let point = best_point(&evaluate_c_grid(model, &cases, &cs, protocol, props)?);
        let record = EpochRecord {
            epoch,
            losses,
            total,
            val_ndcg: point.ndcg,
            val_hit_rate: point.hit_rate,
            val_c: point.c,
            seconds: start.elapsed().as_secs_f64(),
        };
        ::log::info!(
            "epoch {epoch}: loss {total:.5} val ndcg {:.4} hr {:.4} (c={})",
            point.ndcg,
            point.hit_rate,
            point.c
        );
        if let Some(l) = log.as_deref_mut() {
            l.append(&record)?;
        }
        state.history.push(record);
        if state.observe(epoch, point) {
            best = model.params().snapshot()?;
        } else if state.epochs_since_improvement >= cfg.patience {
            break;
        }
    }
    model.params().restore(&best)?;
    model.set_c(state.best_c)?;
    Ok(state)
}
