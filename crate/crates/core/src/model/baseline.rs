use candle_core::{Tensor, D};
use candle_nn::ops::sigmoid;

use super::{Mode, ModelConfig, Positions, SeqInput};
use crate::nn::{ItemEmbedding, Linear, ParamStore, SequenceEncoder, TrainCtx};
use crate::{Error, Result};

/// Scores of a single-representation model, `(B, P, C)` unless noted.
#[derive(Debug, Clone)]
pub struct BaselineOutputs {
    /// `dot(e_i, pref)`.
    pub dot: Tensor,
    /// Item-tower bias, training only.
    pub bias: Option<Tensor>,
    /// Multiplicative-fusion branches: user `(B, P)`, item and fused score `(B, P, C)`.
    pub y_u: Option<Tensor>,
    pub y_i: Option<Tensor>,
    pub y_hat: Option<Tensor>,
    /// `(B, P, d)`.
    pub pref: Tensor,
}

impl BaselineOutputs {
    /// Score used for training losses.
    pub fn train_score(&self) -> Result<Tensor> {
        Ok(match (&self.y_hat, &self.bias) {
            (Some(y), _) => y.clone(),
            (None, Some(b)) => (&self.dot + b)?,
            (None, None) => self.dot.clone(),
        })
    }
}

/// Base recommender: one embedding table, one encoder, dot-product match.
#[derive(Clone, Debug)]
pub struct BaselineNet {
    mode: Mode,
    items: ItemEmbedding,
    seq: SequenceEncoder,
    item_tower: Option<Linear>,
    user_branch: Option<Linear>,
    item_branch: Option<Linear>,
}

impl BaselineNet {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, num_items: usize) -> Result<Self> {
        if cfg.mode.is_dcr_family() {
            return Err(Error::Config(format!("{} is not a baseline mode", cfg.mode)));
        }
        let d = cfg.dim;
        let items = ItemEmbedding::new(store, "item_embedding", num_items, d)?;
        let seq = SequenceEncoder::new(store, "seq", &cfg.encoder_config())?;
        let item_tower = match cfg.mode {
            Mode::BiasTower => Some(Linear::new(store, "item_tower", d, 1)?),
            _ => None,
        };
        let (user_branch, item_branch) = match cfg.mode {
            Mode::Macr => (
                Some(Linear::new(store, "user_branch", d, 1)?),
                Some(Linear::new(store, "item_branch", d, 1)?),
            ),
            _ => (None, None),
        };
        Ok(Self {
            mode: cfg.mode,
            items,
            seq,
            item_tower,
            user_branch,
            item_branch,
        })
    }

    pub fn items(&self) -> &ItemEmbedding {
        &self.items
    }

    pub fn forward(
        &self,
        input: &SeqInput,
        targets: &Tensor,
        positions: Positions,
        ctx: Option<&TrainCtx>,
    ) -> Result<BaselineOutputs> {
        let e_seq = self.items.lookup(&input.history)?;
        let pref = self.seq.forward(&e_seq, &input.mask, ctx)?;
        let pref = match positions {
            Positions::All => pref,
            Positions::Last => {
                let l = pref.dim(1)?;
                pref.narrow(1, l - 1, 1)?
            }
        };
        let e_t = self.items.lookup(targets)?;
        let dot = e_t.broadcast_mul(&pref.unsqueeze(2)?)?.sum(D::Minus1)?;
        let bias = match &self.item_tower {
            Some(t) => Some(t.forward(&e_t)?.squeeze(D::Minus1)?),
            None => None,
        };
        let (y_u, y_i, y_hat) = match (&self.user_branch, &self.item_branch) {
            (Some(ub), Some(ib)) => {
                let y_u = ub.forward(&pref)?.squeeze(D::Minus1)?;
                let y_i = ib.forward(&e_t)?.squeeze(D::Minus1)?;
                let su = sigmoid(&y_u)?.unsqueeze(D::Minus1)?;
                let y_hat = (&dot * sigmoid(&y_i)?)?.broadcast_mul(&su)?;
                (Some(y_u), Some(y_i), Some(y_hat))
            }
            _ => (None, None, None),
        };
        debug_assert_eq!(self.mode == Mode::Macr, y_hat.is_some());
        Ok(BaselineOutputs {
            dot,
            bias,
            y_u,
            y_i,
            y_hat,
            pref,
        })
    }
}
