use candle_core::{DType, Tensor, D};

use super::{BaselineOutputs, ForwardOutputs, MainLoss, Mode, Outputs, Positions, Recommender, SeqInput};
use crate::data::PropensityTable;
use crate::loss::{bce, bpr, ipw_bce, orthogonality, LossComponents};
use crate::nn::TrainCtx;
use crate::{Error, Result};

/// Propensities laid out for gathering by item id, padding id included with weight 1.
#[derive(Debug, Clone)]
pub struct PropensityTensors {
    theta_pos: Tensor,
    theta_neg: Tensor,
    eps: f64,
}

impl PropensityTensors {
    pub fn new(table: &PropensityTable, dtype: DType) -> Result<Self> {
        let ext = |v: &[f64]| -> Result<Tensor> {
            let mut v = v.to_vec();
            v.push(1.0);
            let n = v.len();
            Ok(Tensor::from_vec(v, n, &candle_core::Device::Cpu)?.to_dtype(dtype)?)
        };
        Ok(Self {
            theta_pos: ext(&table.theta_pos)?,
            theta_neg: ext(&table.theta_neg)?,
            eps: table.params.eps,
        })
    }

    fn gather(t: &Tensor, ids: &Tensor) -> Result<Tensor> {
        Ok(t.index_select(&ids.flatten_all()?, 0)?.reshape(ids.dims())?)
    }

    pub fn theta_pos(&self, ids: &Tensor) -> Result<Tensor> {
        Self::gather(&self.theta_pos, ids)
    }

    pub fn theta_neg(&self, ids: &Tensor) -> Result<Tensor> {
        Self::gather(&self.theta_neg, ids)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }
}

struct Samples {
    targets: Tensor,
    labels: Tensor,
    /// `(B, L, 2)`.
    mask: Tensor,
    /// `(B, L)`.
    pos_mask: Tensor,
    n: f64,
    n_pos: f64,
}

/// Per-batch mean losses for next-item training.
///
/// `pos` and `neg` are `(B, L)`: the item following each history position and
/// one sampled negative, both set to the padding id where no example exists.
pub fn batch_loss(
    model: &Recommender,
    input: &SeqInput,
    pos: &Tensor,
    neg: &Tensor,
    props: &PropensityTensors,
    ctx: Option<&TrainCtx>,
) -> Result<LossComponents> {
    let dtype = model.dtype();
    let pad = model.num_items() as u32;
    let (b, l) = pos.dims2()?;
    let pos_mask = pos.ne(pad)?.to_dtype(dtype)?;
    let n_pos = pos_mask.to_dtype(DType::F64)?.sum_all()?.to_scalar::<f64>()?;
    if n_pos == 0.0 {
        return Err(Error::Precondition("batch holds no training examples".into()));
    }
    let targets = Tensor::stack(&[pos, neg], 2)?;
    let labels = Tensor::new(&[1.0f64, 0.0], pos.device())?
        .to_dtype(dtype)?
        .broadcast_as((b, l, 2))?
        .contiguous()?;
    let mask = pos_mask.unsqueeze(2)?.broadcast_as((b, l, 2))?.contiguous()?;
    let s = Samples {
        targets,
        labels,
        mask,
        pos_mask,
        n: 2.0 * n_pos,
        n_pos,
    };
    match model.forward(input, &s.targets, Positions::All, ctx)? {
        Outputs::Dcr(o) => dcr_loss(model, &o, &s, props),
        Outputs::Baseline(o) => baseline_loss(model.config().mode, &o, &s, props),
    }
}

fn pair(t: &Tensor) -> Result<(Tensor, Tensor)> {
    Ok((t.narrow(2, 0, 1)?.squeeze(2)?, t.narrow(2, 1, 1)?.squeeze(2)?))
}

fn dcr_loss(model: &Recommender, o: &ForwardOutputs, s: &Samples, props: &PropensityTensors) -> Result<LossComponents> {
    let mean = |t: Tensor, n: f64| -> Result<Tensor> { Ok((t / n)?) };
    let main = match model.config().main_loss {
        MainLoss::Bce => mean(bce(&o.y_hat, &s.labels, Some(&s.mask))?, s.n)?,
        MainLoss::Bpr => {
            let (p, q) = pair(&o.y_hat)?;
            mean(bpr(&p, &q, None, Some(&s.pos_mask))?, s.n_pos)?
        }
    };
    let interest = ipw_bce(
        &o.y_m_int,
        &s.labels,
        &props.theta_pos(&s.targets)?,
        &props.theta_neg(&s.targets)?,
        props.eps(),
        Some(&s.mask),
    )?;
    let ortho_user = match (&o.e_con_u, &o.e_int_u) {
        (Some(c), Some(i)) => orthogonality(c, i, None)?,
        _ => orthogonality(&o.pref_con, &o.pref_int, Some(&s.pos_mask))?,
    };
    Ok(LossComponents {
        main: Some(main),
        interest: Some(mean(interest, s.n)?),
        conformity: Some(mean(bce(&o.y_m_con, &s.labels, Some(&s.mask))?, s.n)?),
        item: Some(mean(bce(&o.y_i, &s.labels, Some(&s.mask))?, s.n)?),
        user: None,
        ortho_user: Some(ortho_user),
        ortho_item: Some(orthogonality(&o.e_pop_i, &o.e_int_i, Some(&s.mask))?),
    })
}

fn baseline_loss(mode: Mode, o: &BaselineOutputs, s: &Samples, props: &PropensityTensors) -> Result<LossComponents> {
    let score = o.train_score()?;
    let main = match mode {
        Mode::BaseBce | Mode::BiasTower | Mode::Macr => bce(&score, &s.labels, Some(&s.mask))? / s.n,
        Mode::IpwBce => {
            ipw_bce(
                &score,
                &s.labels,
                &props.theta_pos(&s.targets)?,
                &props.theta_neg(&s.targets)?,
                props.eps(),
                Some(&s.mask),
            )? / s.n
        }
        Mode::BaseBpr | Mode::IpwBpr => {
            let (p, q) = pair(&score)?;
            let w = if mode == Mode::IpwBpr {
                let (pos_ids, _) = pair(&s.targets)?;
                Some(props.theta_pos(&pos_ids)?.recip()?)
            } else {
                None
            };
            bpr(&p, &q, w.as_ref(), Some(&s.pos_mask))? / s.n_pos
        }
        m => return Err(Error::Config(format!("{m} is not a baseline mode"))),
    }?;
    let mut out = LossComponents {
        main: Some(main),
        ..Default::default()
    };
    if let (Some(y_u), Some(y_i)) = (&o.y_u, &o.y_i) {
        let y_u = y_u.unsqueeze(D::Minus1)?.broadcast_as(s.labels.dims())?.contiguous()?;
        out.user = Some((bce(&y_u, &s.labels, Some(&s.mask))? / s.n)?);
        out.item = Some((bce(y_i, &s.labels, Some(&s.mask))? / s.n)?);
    }
    Ok(out)
}
