use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::data::{ItemIdx, UserIdx};
use crate::loss::orthogonality;
use crate::model::{Net, Recommender};
use crate::{Error, Result};

/// Mean absolute cosine between the conformity and interest halves of a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disentanglement {
    /// Over users: `(e_con_u, e_int_u)` with user embeddings, else
    /// `(pref_con, pref_int)` at the last history position.
    pub user: f64,
    /// Over the catalogue: `(e_pop_i, e_int_i)`.
    pub item: f64,
    pub num_users: usize,
}

impl Disentanglement {
    /// Average of the user and item side, the quantity the orthogonality loss drives down.
    pub fn mean(&self) -> f64 {
        0.5 * (self.user + self.item)
    }
}

/// Measures how orthogonal the disentangled pairs are, in inference mode.
pub fn disentanglement(model: &Recommender, users: &[(UserIdx, &[ItemIdx])], batch_users: usize) -> Result<Disentanglement> {
    let Net::Dcr(net) = model.net() else {
        return Err(Error::Precondition("only DCR-family models have disentangled embeddings".into()));
    };
    if users.is_empty() {
        return Err(Error::Empty("user list"));
    }
    let all: Vec<u32> = (0..model.num_items() as u32).collect();
    let e = net.items().lookup(&model.item_ids(&all, &[all.len()], false)?)?;
    let (e_pop, e_int) = net.disentangle_item(&e)?;
    let item = orthogonality(&e_pop, &e_int, None)?.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;

    let mut total = 0.0;
    for chunk in users.chunks(batch_users.max(1)) {
        let ids: Vec<u32> = chunk.iter().map(|(u, _)| *u).collect();
        let hist: Vec<&[ItemIdx]> = chunk.iter().map(|(_, h)| *h).collect();
        let input = model.input(&hist, &ids)?;
        let user_pair = net.disentangle_user(&input.users)?;
        let (a, b) = match user_pair {
            Some(pair) => pair,
            None => {
                let (pc, pi) = net.mine_preferences(&input, None, None)?;
                let l = pc.dim(1)?;
                (last(&pc, l)?, last(&pi, l)?)
            }
        };
        total += orthogonality(&a, &b, None)?.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()? * chunk.len() as f64;
    }
    Ok(Disentanglement {
        user: total / users.len() as f64,
        item,
        num_users: users.len(),
    })
}

fn last(t: &Tensor, l: usize) -> Result<Tensor> {
    Ok(t.narrow(1, l - 1, 1)?.squeeze(1)?)
}
