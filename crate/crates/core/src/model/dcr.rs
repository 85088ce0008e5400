use candle_core::{Tensor, D};
use candle_nn::ops::sigmoid;

use super::{Mode, ModelConfig, Positions, SeqInput};
use crate::nn::{EmbeddingTable, ItemEmbedding, Linear, Merge, Mlp, ParamStore, SequenceEncoder, TrainCtx};
use crate::Result;

/// Every intermediate of one scoring pass.
///
/// Score tensors are `(B, P, C)` for `B` users, `P` read-out positions and
/// `C` candidates per position; `y_u` is `(B, P)` and broadcasts over `C`.
#[derive(Debug, Clone)]
pub struct ForwardOutputs {
    /// `y_m * σ(y_u) * σ(y_i)`.
    pub y_hat: Tensor,
    /// `w_int * y_m_int + (1 - w_int) * y_m_con`, or the plain sum without attention.
    pub y_m: Tensor,
    pub y_m_int: Tensor,
    pub y_m_con: Tensor,
    pub y_i: Tensor,
    pub y_u: Tensor,
    /// Blend weight; `None` for the additive variants.
    pub w_int: Option<Tensor>,
    /// `(B, P, C, d)`.
    pub e_pop_i: Tensor,
    pub e_int_i: Tensor,
    /// `(B, P, d)`.
    pub pref_con: Tensor,
    pub pref_int: Tensor,
    /// `(B, d)`, present with explicit user embeddings.
    pub e_con_u: Option<Tensor>,
    pub e_int_u: Option<Tensor>,
}

impl ForwardOutputs {
    /// `σ(y_u) * σ(y_i)`, the part removed at inference.
    pub fn direct_effect(&self) -> Result<Tensor> {
        let su = sigmoid(&self.y_u)?.unsqueeze(D::Minus1)?;
        Ok(sigmoid(&self.y_i)?.broadcast_mul(&su)?)
    }

    pub fn counterfactual(&self, c: f64) -> Result<Tensor> {
        counterfactual_score(&self.y_hat, &self.y_u, &self.y_i, c)
    }
}

/// `y_hat - c * σ(y_u) * σ(y_i)`; `y_u` is `(B, P)` and `y_hat`, `y_i` are `(B, P, C)`.
pub fn counterfactual_score(y_hat: &Tensor, y_u: &Tensor, y_i: &Tensor, c: f64) -> Result<Tensor> {
    let su = sigmoid(y_u)?.unsqueeze(D::Minus1)?;
    let direct = sigmoid(y_i)?.broadcast_mul(&su)?;
    Ok((y_hat - (direct * c)?)?)
}

/// Two-layer scorer over `[e_int_i, pref_int, e_pop_i, pref_con]`.
///
/// The first layer's weight is kept as four row blocks so the preference
/// halves are projected once per position rather than once per candidate.
#[derive(Clone, Debug)]
struct AttenNet {
    blocks: [Tensor; 4],
    bias: Tensor,
    out: Linear,
}

impl AttenNet {
    fn new(store: &mut ParamStore, name: &str, dim: usize, hidden: usize) -> Result<Self> {
        let bound = 1.0 / ((4 * dim) as f64).sqrt();
        let mut block = |k: &str| store.uniform(&format!("{name}.w_{k}"), &[dim, hidden], bound);
        let blocks = [block("int_i")?, block("pref_int")?, block("pop_i")?, block("pref_con")?];
        let bias = store.uniform(&format!("{name}.bias"), &[hidden], bound)?;
        let out = Linear::new(store, &format!("{name}.out"), hidden, 1)?;
        Ok(Self { blocks, bias, out })
    }

    fn project(x: &Tensor, w: &Tensor) -> Result<Tensor> {
        let mut dims = x.dims().to_vec();
        let d = dims.pop().expect("rank >= 1");
        let rows = x.elem_count() / d;
        dims.push(w.dim(1)?);
        Ok(x.reshape((rows, d))?.matmul(w)?.reshape(dims)?)
    }

    /// Logit `(B, P, C)`.
    fn forward(&self, e_int_i: &Tensor, pref_int: &Tensor, e_pop_i: &Tensor, pref_con: &Tensor) -> Result<Tensor> {
        let items = (Self::project(e_int_i, &self.blocks[0])? + Self::project(e_pop_i, &self.blocks[2])?)?;
        let prefs = (Self::project(pref_int, &self.blocks[1])? + Self::project(pref_con, &self.blocks[3])?)?
            .broadcast_add(&self.bias)?
            .unsqueeze(2)?;
        let h = items.broadcast_add(&prefs)?.relu()?;
        Ok(self.out.forward(&h)?.squeeze(D::Minus1)?)
    }
}

/// The disentangled model and its three ablation variants.
#[derive(Clone, Debug)]
pub struct DcrNet {
    mode: Mode,
    items: ItemEmbedding,
    users: Option<EmbeddingTable>,
    item_popularity: Mlp,
    item_interest: Mlp,
    user_conformity: Option<Mlp>,
    user_interest: Option<Mlp>,
    seq_con: SequenceEncoder,
    seq_int: SequenceEncoder,
    merge_con: Merge,
    merge_int: Merge,
    atten: AttenNet,
    item_direct: Linear,
    user_direct: Linear,
}

impl DcrNet {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, num_users: usize, num_items: usize) -> Result<Self> {
        let d = cfg.dim;
        let items = ItemEmbedding::new(store, "item_embedding", num_items, d)?;
        let item_popularity = Mlp::new(store, "item_popularity", d, &[cfg.popularity_hidden, d])?;
        let item_interest = Mlp::new(store, "item_interest", d, &[cfg.interest_hidden, d])?;
        let (users, user_conformity, user_interest, merge_con, merge_int) = if cfg.user_dim > 0 {
            let du = cfg.user_dim;
            let users = EmbeddingTable::new(store, "user_embedding", num_users, du)?;
            let uc = Mlp::new(store, "user_conformity", du, &[cfg.popularity_hidden, d])?;
            let ui = Mlp::new(store, "user_interest", du, &[cfg.interest_hidden, d])?;
            let sizes = [cfg.merge_hidden, d];
            let mc = Merge::mlp(store, "merge_con", d, d, &sizes)?;
            let mi = Merge::mlp(store, "merge_int", d, d, &sizes)?;
            (Some(users), Some(uc), Some(ui), mc, mi)
        } else {
            (None, None, None, Merge::Identity, Merge::Identity)
        };
        let enc = cfg.encoder_config();
        let seq_con = SequenceEncoder::new(store, "seq_con", &enc)?;
        let seq_int = SequenceEncoder::new(store, "seq_int", &enc)?;
        let atten = AttenNet::new(store, "atten", d, cfg.atten_hidden)?;
        let item_direct = Linear::new(store, "item_direct", d, 1)?;
        let user_direct = Linear::new(store, "user_direct", d, 1)?;
        Ok(Self {
            mode: cfg.mode,
            items,
            users,
            item_popularity,
            item_interest,
            user_conformity,
            user_interest,
            seq_con,
            seq_int,
            merge_con,
            merge_int,
            atten,
            item_direct,
            user_direct,
        })
    }

    pub fn items(&self) -> &ItemEmbedding {
        &self.items
    }

    pub fn has_user_embeddings(&self) -> bool {
        self.users.is_some()
    }

    /// `(e_con_u, e_int_u)` for a `(B,)` user id tensor; `None` without user embeddings.
    pub fn disentangle_user(&self, users: &Tensor) -> Result<Option<(Tensor, Tensor)>> {
        match (&self.users, &self.user_conformity, &self.user_interest) {
            (Some(table), Some(con), Some(int)) => {
                let e_u = table.lookup(users)?;
                Ok(Some((con.forward(&e_u)?, int.forward(&e_u)?)))
            }
            _ => Ok(None),
        }
    }

    /// `(e_pop, e_int)` for item embeddings of any leading shape.
    pub fn disentangle_item(&self, e: &Tensor) -> Result<(Tensor, Tensor)> {
        Ok((self.item_popularity.forward(e)?, self.item_interest.forward(e)?))
    }

    /// `(pref_con, pref_int)` at every position, `(B, L, d)`.
    pub fn mine_preferences(
        &self,
        input: &SeqInput,
        user: Option<&(Tensor, Tensor)>,
        ctx: Option<&TrainCtx>,
    ) -> Result<(Tensor, Tensor)> {
        let mask = &input.mask;
        let m = mask.unsqueeze(D::Minus1)?;
        let e_seq = self.items.lookup(&input.history)?;
        let (pop_seq, int_seq) = self.disentangle_item(&e_seq)?;
        let dyn_con = self.seq_con.forward(&pop_seq.broadcast_mul(&m)?, mask, ctx)?;
        let dyn_int = self.seq_int.forward(&int_seq.broadcast_mul(&m)?, mask, ctx)?;
        let pref_con = self.merge_con.forward(&dyn_con, user.map(|u| &u.0))?;
        let pref_int = self.merge_int.forward(&dyn_int, user.map(|u| &u.1))?;
        Ok((pref_con, pref_int))
    }

    /// `(y_m_con, y_m_int, w_int, y_m)`.
    pub fn match_and_fuse(
        &self,
        pref_con: &Tensor,
        pref_int: &Tensor,
        e_pop_i: &Tensor,
        e_int_i: &Tensor,
    ) -> Result<(Tensor, Tensor, Option<Tensor>, Tensor)> {
        let y_con = e_pop_i.broadcast_mul(&pref_con.unsqueeze(2)?)?.sum(D::Minus1)?;
        let y_int = e_int_i.broadcast_mul(&pref_int.unsqueeze(2)?)?.sum(D::Minus1)?;
        let w = match self.mode {
            Mode::Var0 => Some(y_int.ones_like()?),
            Mode::Var1 | Mode::Var2 => None,
            _ => Some(sigmoid(&self.atten.forward(e_int_i, pref_int, e_pop_i, pref_con)?)?),
        };
        let y_m = match &w {
            Some(w) => ((w * &y_int)? + ((w.ones_like()? - w)? * &y_con)?)?,
            None => (&y_con + &y_int)?,
        };
        Ok((y_con, y_int, w, y_m))
    }

    /// `(y_i, y_u)`: item popularity effect `(B, P, C)` and user conformity effect `(B, P)`.
    pub fn direct_effects(&self, e_pop_i: &Tensor, pref_con: &Tensor) -> Result<(Tensor, Tensor)> {
        let y_i = self.item_direct.forward(e_pop_i)?.squeeze(D::Minus1)?;
        let y_u = self.user_direct.forward(pref_con)?.squeeze(D::Minus1)?;
        Ok((y_i, y_u))
    }

    pub fn forward(
        &self,
        input: &SeqInput,
        targets: &Tensor,
        positions: Positions,
        ctx: Option<&TrainCtx>,
    ) -> Result<ForwardOutputs> {
        let user = self.disentangle_user(&input.users)?;
        let (pref_con, pref_int) = self.mine_preferences(input, user.as_ref(), ctx)?;
        let (pref_con, pref_int) = match positions {
            Positions::All => (pref_con, pref_int),
            Positions::Last => {
                let l = pref_con.dim(1)?;
                (pref_con.narrow(1, l - 1, 1)?, pref_int.narrow(1, l - 1, 1)?)
            }
        };
        let e_t = self.items.lookup(targets)?;
        let (e_pop_i, e_int_i) = self.disentangle_item(&e_t)?;
        let (y_m_con, y_m_int, w_int, y_m) = self.match_and_fuse(&pref_con, &pref_int, &e_pop_i, &e_int_i)?;
        let (y_i, y_u) = self.direct_effects(&e_pop_i, &pref_con)?;
        let su = sigmoid(&y_u)?.unsqueeze(D::Minus1)?;
        let y_hat = (&y_m * sigmoid(&y_i)?)?.broadcast_mul(&su)?;
        let (e_con_u, e_int_u) = match user {
            Some((c, i)) => (Some(c), Some(i)),
            None => (None, None),
        };
        Ok(ForwardOutputs {
            y_hat,
            y_m,
            y_m_int,
            y_m_con,
            y_i,
            y_u,
            w_int,
            e_pop_i,
            e_int_i,
            pref_con,
            pref_int,
            e_con_u,
            e_int_u,
        })
    }
}
