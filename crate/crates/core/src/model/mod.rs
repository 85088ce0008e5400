//! Recommenders: the disentangled counterfactual model, its ablation variants
//! and the single-representation baselines.

mod baseline;
mod checkpoint;
mod config;
mod dcr;
mod objective;

pub use baseline::{BaselineNet, BaselineOutputs};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{MainLoss, Mode, ModelConfig};
pub use dcr::{counterfactual_score, DcrNet, ForwardOutputs};
pub use objective::{batch_loss, PropensityTensors};

use candle_core::{DType, Tensor};

use crate::data::ItemIdx;
use crate::eval::sort_candidates;
use crate::nn::{ids_tensor, ParamStore, TrainCtx};
use crate::{Error, Result};

/// Which sequence positions produce scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Positions {
    /// Every position; target `p` is scored from the prefix ending at `p`.
    All,
    /// Only the final position, for inference.
    Last,
}

/// A left-padded batch of histories.
#[derive(Debug, Clone)]
pub struct SeqInput {
    /// `(B, L)` item ids, padding id in front.
    pub history: Tensor,
    /// `(B, L)` float, 1 at real items.
    pub mask: Tensor,
    /// `(B,)` user ids.
    pub users: Tensor,
}

impl SeqInput {
    /// Keeps the most recent `max_len` items of each history and left-pads to
    /// the longest remaining one.
    pub fn from_histories(
        histories: &[&[ItemIdx]],
        users: &[u32],
        max_len: usize,
        num_items: usize,
        num_users: usize,
        dtype: DType,
    ) -> Result<Self> {
        if histories.len() != users.len() {
            return Err(Error::Precondition("one user id per history required".into()));
        }
        let l = histories.iter().map(|h| h.len().min(max_len)).max().unwrap_or(0).max(1);
        let pad = num_items as u32;
        let mut ids = Vec::with_capacity(histories.len() * l);
        for h in histories {
            let kept = &h[h.len() - h.len().min(max_len)..];
            ids.extend(std::iter::repeat_n(pad, l - kept.len()));
            ids.extend_from_slice(kept);
        }
        Self::from_padded(ids, histories.len(), l, users, num_items, num_users, dtype)
    }

    /// Wraps already padded `(B, L)` ids.
    pub fn from_padded(
        ids: Vec<u32>,
        b: usize,
        l: usize,
        users: &[u32],
        num_items: usize,
        num_users: usize,
        dtype: DType,
    ) -> Result<Self> {
        let dev = candle_core::Device::Cpu;
        let history = ids_tensor(&ids, &[b, l], num_items + 1, &dev)?;
        let mask = history.ne(num_items as u32)?.to_dtype(dtype)?;
        let users = ids_tensor(users, &[users.len()], num_users.max(1), &dev)?;
        Ok(Self { history, mask, users })
    }
}

#[derive(Clone, Debug)]
pub enum Net {
    Dcr(DcrNet),
    Baseline(BaselineNet),
}

#[derive(Debug, Clone)]
pub enum Outputs {
    Dcr(ForwardOutputs),
    Baseline(BaselineOutputs),
}

impl Outputs {
    /// Inference score before any counterfactual adjustment.
    pub fn biased(&self) -> &Tensor {
        match self {
            Outputs::Dcr(o) => &o.y_hat,
            Outputs::Baseline(o) => o.y_hat.as_ref().unwrap_or(&o.dot),
        }
    }

    /// `σ(y_u) σ(y_i)` for models that subtract it at inference.
    pub fn direct(&self) -> Result<Option<Tensor>> {
        match self {
            Outputs::Dcr(o) => Ok(Some(o.direct_effect()?)),
            Outputs::Baseline(BaselineOutputs {
                y_u: Some(u),
                y_i: Some(i),
                ..
            }) => {
                let su = candle_nn::ops::sigmoid(u)?.unsqueeze(candle_core::D::Minus1)?;
                Ok(Some(candle_nn::ops::sigmoid(i)?.broadcast_mul(&su)?))
            }
            Outputs::Baseline(_) => Ok(None),
        }
    }
}

/// Scores of `rows` users against `cols` candidates each, split so any `c`
/// can be applied without another forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreParts {
    pub rows: usize,
    pub cols: usize,
    pub biased: Vec<f64>,
    pub direct: Option<Vec<f64>>,
}

impl ScoreParts {
    pub fn score(&self, row: usize, col: usize, c: f64) -> f64 {
        let k = row * self.cols + col;
        match &self.direct {
            Some(d) => self.biased[k] - c * d[k],
            None => self.biased[k],
        }
    }

    pub fn row_scores(&self, row: usize, c: f64) -> Vec<f64> {
        (0..self.cols).map(|j| self.score(row, j, c)).collect()
    }
}

/// A model together with the parameters it owns.
pub struct Recommender {
    config: ModelConfig,
    num_users: usize,
    num_items: usize,
    store: ParamStore,
    net: Net,
}

impl std::fmt::Debug for Recommender {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Recommender")
            .field("mode", &self.config.mode)
            .field("num_users", &self.num_users)
            .field("num_items", &self.num_items)
            .field("parameters", &self.store.num_parameters())
            .finish()
    }
}

impl Recommender {
    pub fn new(config: ModelConfig, num_users: usize, num_items: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if num_items == 0 {
            return Err(Error::Empty("item catalogue"));
        }
        let mut store = ParamStore::new(seed, config.precision);
        let net = if config.mode.is_dcr_family() {
            Net::Dcr(DcrNet::new(&mut store, &config, num_users, num_items)?)
        } else {
            Net::Baseline(BaselineNet::new(&mut store, &config, num_items)?)
        };
        Ok(Self {
            config,
            num_users,
            num_items,
            store,
            net,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Changes the inference constant; no parameter depends on it.
    pub fn set_c(&mut self, c: f64) -> Result<()> {
        if !c.is_finite() || c < 0.0 {
            return Err(Error::Config(format!("c = {c} must be finite and >= 0")));
        }
        self.config.c = c;
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn net(&self) -> &Net {
        &self.net
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    /// Item id tensor; padding allowed only when `allow_pad`.
    pub fn item_ids(&self, ids: &[u32], dims: &[usize], allow_pad: bool) -> Result<Tensor> {
        let limit = self.num_items + usize::from(allow_pad);
        ids_tensor(ids, dims, limit, &candle_core::Device::Cpu)
    }

    pub fn input(&self, histories: &[&[ItemIdx]], users: &[u32]) -> Result<SeqInput> {
        SeqInput::from_histories(
            histories,
            users,
            self.config.max_len,
            self.num_items,
            self.num_users,
            self.dtype(),
        )
    }

    /// `targets` is `(B, P, C)`; `P` must equal `L` for [`Positions::All`] and 1 otherwise.
    pub fn forward(&self, input: &SeqInput, targets: &Tensor, positions: Positions, ctx: Option<&TrainCtx>) -> Result<Outputs> {
        Ok(match &self.net {
            Net::Dcr(n) => Outputs::Dcr(n.forward(input, targets, positions, ctx)?),
            Net::Baseline(n) => Outputs::Baseline(n.forward(input, targets, positions, ctx)?),
        })
    }

    /// Inference scores for each history against its own `per_row` candidates.
    pub fn score_parts(&self, histories: &[&[ItemIdx]], users: &[u32], candidates: &[ItemIdx], per_row: usize) -> Result<ScoreParts> {
        let rows = histories.len();
        if per_row == 0 || candidates.len() != rows * per_row {
            return Err(Error::Precondition(format!(
                "expected {rows} x {per_row} candidates, got {}",
                candidates.len()
            )));
        }
        if histories.iter().any(|h| h.is_empty()) {
            return Err(Error::Precondition("scoring needs at least one history item".into()));
        }
        let input = self.input(histories, users)?;
        let targets = self.item_ids(candidates, &[rows, 1, per_row], false)?;
        let out = self.forward(&input, &targets, Positions::Last, None)?;
        let flat = |t: &Tensor| -> Result<Vec<f64>> { Ok(t.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?) };
        let biased = flat(out.biased())?;
        let direct = out.direct()?.map(|d| flat(&d)).transpose()?;
        Ok(ScoreParts {
            rows,
            cols: per_row,
            biased,
            direct,
        })
    }

    /// Candidates ranked by score at constant `c`, ties to the lower item index.
    pub fn score_candidates(&self, history: &[ItemIdx], user: u32, candidates: &[ItemIdx], c: f64) -> Result<Vec<(ItemIdx, f64)>> {
        if candidates.is_empty() {
            return Err(Error::Precondition("no candidates to score".into()));
        }
        let parts = self.score_parts(&[history], &[user], candidates, candidates.len())?;
        let scores = parts.row_scores(0, c);
        Ok(sort_candidates(candidates, &scores)
            .into_iter()
            .map(|k| (candidates[k], scores[k]))
            .collect())
    }
}

#[cfg(test)]
mod tests;
