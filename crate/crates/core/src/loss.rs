//! Training objectives.
//!
//! The cross-entropy family returns sums over the batch; callers divide by the
//! number of samples. Every mask argument is a float tensor with 1 at entries
//! that count and 0 elsewhere.

use candle_core::{DType, Tensor, D};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `ln(1 + e^x)` without overflow.
///
/// Written as `x * p + ln(1 + e^{-x s})` with `p = [x >= 0]` and `s = 2p - 1`
/// held constant, so the gradient at `x = 0` is the correct `1/2` rather than
/// the zero subgradient an `abs`/`relu` split would give.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let p = x.ge(0.0)?.to_dtype(x.dtype())?;
    let s = ((&p * 2.0)? - 1.0)?;
    let tail = ((x * &s)?.neg()?.exp()? + 1.0)?.log()?;
    Ok(((x * p)? + tail)?)
}

fn apply_mask(t: Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
    Ok(match mask {
        Some(m) => (t * m)?,
        None => t,
    })
}

/// `-Σ [w_pos ln σ(s) + w_neg ln(1 - σ(s))]`.
fn weighted_logloss(scores: &Tensor, w_pos: &Tensor, w_neg: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
    let per = ((w_pos * softplus(&scores.neg()?)?)? + (w_neg * softplus(scores)?)?)?;
    Ok(apply_mask(per, mask)?.sum_all()?)
}

/// Binary cross-entropy on logits, summed.
pub fn bce(scores: &Tensor, labels: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
    let neg = (labels.ones_like()? - labels)?;
    weighted_logloss(scores, labels, &neg, mask)
}

/// Propensity-weighted cross-entropy: positives weighted by `1/θ+`, negatives by `1/θ-`.
///
/// `theta_pos` and `theta_neg` are per-entry propensities of the scored item.
/// Anything below `eps` is rejected since clamping belongs to the table.
pub fn ipw_bce(
    scores: &Tensor,
    labels: &Tensor,
    theta_pos: &Tensor,
    theta_neg: &Tensor,
    eps: f64,
    mask: Option<&Tensor>,
) -> Result<Tensor> {
    for (name, t) in [("theta_pos", theta_pos), ("theta_neg", theta_neg)] {
        let min = t.to_dtype(DType::F64)?.flatten_all()?.min(0)?.to_scalar::<f64>()?;
        if !(min >= eps) {
            return Err(Error::Precondition(format!("{name} minimum {min} below eps {eps}")));
        }
    }
    let neg = (labels.ones_like()? - labels)?;
    weighted_logloss(scores, &(labels / theta_pos)?, &(neg / theta_neg)?, mask)
}

/// `-Σ w ln σ(pos - neg)`, with `w = 1` when `weights` is absent.
pub fn bpr(pos: &Tensor, neg: &Tensor, weights: Option<&Tensor>, mask: Option<&Tensor>) -> Result<Tensor> {
    let per = softplus(&(neg - pos)?)?;
    let per = match weights {
        Some(w) => (per * w)?,
        None => per,
    };
    Ok(apply_mask(per, mask)?.sum_all()?)
}

/// Mean `|cos(a_k, b_k)|` over the rows of `a` and `b` (last axis is the vector).
///
/// A row where either vector has norm below `1e-12` contributes 0 but still
/// counts in the mean. Masked rows are left out entirely; an empty mask gives 0.
pub fn orthogonality(a: &Tensor, b: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
    if a.dims() != b.dims() {
        return Err(Error::Precondition(format!(
            "orthogonality shapes differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let sa = a.sqr()?.sum(D::Minus1)?;
    let sb = b.sqr()?.sum(D::Minus1)?;
    let ok = (sa.ge(1e-24)?.to_dtype(a.dtype())? * sb.ge(1e-24)?.to_dtype(a.dtype())?)?;
    // guarded rows get denominator 1 so neither value nor gradient becomes NaN
    let denom = (((&sa * &sb)? * &ok)? + (ok.ones_like()? - &ok)?)?.sqrt()?;
    let cos = ((a * b)?.sum(D::Minus1)? / denom)?;
    let per = (cos.abs()? * &ok)?;
    let (sum, count) = match mask {
        Some(m) => ((per * m)?.sum_all()?, m.to_dtype(DType::F64)?.sum_all()?.to_scalar::<f64>()?),
        None => (per.sum_all()?, per.elem_count() as f64),
    };
    if count == 0.0 {
        return Ok(sum.zeros_like()?);
    }
    Ok((sum / count)?)
}

/// Multi-task weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (n, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("loss weight {n} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Per-batch loss terms, each a scalar tensor already reduced to a batch mean.
///
/// Terms a model does not use are `None`. `user` is the user-branch term of
/// the multiplicative-fusion baseline and shares the `alpha` slot.
#[derive(Debug, Clone, Default)]
pub struct LossComponents {
    pub main: Option<Tensor>,
    pub interest: Option<Tensor>,
    pub conformity: Option<Tensor>,
    pub item: Option<Tensor>,
    pub user: Option<Tensor>,
    pub ortho_user: Option<Tensor>,
    pub ortho_item: Option<Tensor>,
}

impl LossComponents {
    pub const NAMES: [&'static str; 7] = ["main", "interest", "conformity", "item", "user", "ortho_user", "ortho_item"];

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, Option<&Tensor>)> {
        Self::NAMES.into_iter().zip([
            self.main.as_ref(),
            self.interest.as_ref(),
            self.conformity.as_ref(),
            self.item.as_ref(),
            self.user.as_ref(),
            self.ortho_user.as_ref(),
            self.ortho_item.as_ref(),
        ])
    }

    /// `main + α(interest + conformity + user) + β item + γ(ortho_user + ortho_item)`.
    pub fn total(&self, w: LossWeights) -> Result<Tensor> {
        let main = self
            .main
            .clone()
            .ok_or_else(|| Error::Precondition("loss has no main term".into()))?;
        let mut total = main;
        let mut add = |t: &Option<Tensor>, k: f64| -> Result<()> {
            if let Some(t) = t {
                if k != 0.0 {
                    total = (&total + (t * k)?)?;
                }
            }
            Ok(())
        };
        add(&self.interest, w.alpha)?;
        add(&self.conformity, w.alpha)?;
        add(&self.user, w.alpha)?;
        add(&self.item, w.beta)?;
        add(&self.ortho_user, w.gamma)?;
        add(&self.ortho_item, w.gamma)?;
        Ok(total)
    }

    /// Plain values for logging.
    pub fn values(&self) -> Result<Vec<(&'static str, Option<f64>)>> {
        self.iter()
            .map(|(n, t)| {
                let v = t.map(|t| t.to_dtype(DType::F64)?.to_scalar::<f64>()).transpose()?;
                Ok((n, v))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{Device, Var};
    use std::f64::consts::LN_2;

    fn t(v: &[f64]) -> Tensor {
        Tensor::new(v, &Device::Cpu).unwrap()
    }

    fn scalar(x: Tensor) -> f64 {
        x.to_scalar::<f64>().unwrap()
    }

    #[test]
    fn bce_examples() {
        assert!((scalar(bce(&t(&[0.0]), &t(&[1.0]), None).unwrap()) - LN_2).abs() < 1e-15);
        let sat = scalar(bce(&t(&[40.0]), &t(&[1.0]), None).unwrap());
        assert!(sat.is_finite() && sat < 1e-15);
        let both = scalar(bce(&t(&[0.0, 0.0]), &t(&[1.0, 0.0]), None).unwrap());
        assert!((both - 2.0 * LN_2).abs() < 1e-15);
        let huge = scalar(bce(&t(&[-1e4, 1e4]), &t(&[1.0, 0.0]), None).unwrap());
        assert!((huge - 2e4).abs() < 1e-9);
    }

    #[test]
    fn ipw_examples() {
        let v = scalar(ipw_bce(&t(&[0.0]), &t(&[1.0]), &t(&[0.5]), &t(&[1.0]), 1e-3, None).unwrap());
        assert!((v - 2.0 * LN_2).abs() < 1e-15);
        let bad = ipw_bce(&t(&[0.0]), &t(&[1.0]), &t(&[1e-4]), &t(&[1.0]), 1e-3, None);
        assert!(matches!(bad, Err(Error::Precondition(_))));
    }

    #[test]
    fn bpr_examples() {
        assert!((scalar(bpr(&t(&[1.5]), &t(&[1.5]), None, None).unwrap()) - LN_2).abs() < 1e-15);
        assert!(scalar(bpr(&t(&[40.0]), &t(&[0.0]), None, None).unwrap()) < 1e-15);
        let w = scalar(bpr(&t(&[0.0]), &t(&[0.0]), Some(&t(&[3.0])), None).unwrap());
        assert!((w - 3.0 * LN_2).abs() < 1e-15);
    }

    #[test]
    fn orthogonality_examples_and_guard() {
        let a = Tensor::new(&[[1.0f64, 0.0], [2.0, 3.0], [1.0, 1.0], [0.0, 0.0]], &Device::Cpu).unwrap();
        let b = Tensor::new(&[[0.0f64, 5.0], [2.0, 3.0], [-1.0, -1.0], [1.0, 0.0]], &Device::Cpu).unwrap();
        let rows = |m: &[f64]| scalar(orthogonality(&a, &b, Some(&t(m))).unwrap());
        assert_eq!(rows(&[1.0, 0.0, 0.0, 0.0]), 0.0);
        assert!((rows(&[0.0, 1.0, 0.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!((rows(&[0.0, 0.0, 1.0, 0.0]) - 1.0).abs() < 1e-12);
        assert_eq!(rows(&[0.0, 0.0, 0.0, 1.0]), 0.0);
        assert_eq!(rows(&[0.0; 4]), 0.0);
        // zero row: value 0 and finite gradient
        let za = Var::from_tensor(&a).unwrap();
        let loss = orthogonality(za.as_tensor(), &b, None).unwrap();
        let g = loss.backward().unwrap();
        let ga = g.get(za.as_tensor()).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        assert!(ga.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softplus_gradient_at_zero() {
        let x = Var::new(&[0.0f64], &Device::Cpu).unwrap();
        let g = softplus(x.as_tensor()).unwrap().sum_all().unwrap().backward().unwrap();
        assert_eq!(g.get(x.as_tensor()).unwrap().to_vec1::<f64>().unwrap(), vec![0.5]);
    }

    #[test]
    fn total_combines_terms() {
        let c = LossComponents {
            main: Some(t(&[1.0]).sum_all().unwrap()),
            interest: Some(t(&[2.0]).sum_all().unwrap()),
            conformity: Some(t(&[3.0]).sum_all().unwrap()),
            item: Some(t(&[4.0]).sum_all().unwrap()),
            ortho_user: Some(t(&[0.5]).sum_all().unwrap()),
            ortho_item: Some(t(&[0.25]).sum_all().unwrap()),
            ..Default::default()
        };
        let w = LossWeights {
            alpha: 0.1,
            beta: 0.2,
            gamma: 2.0,
        };
        let v = scalar(c.total(w).unwrap());
        assert!((v - (1.0 + 0.1 * 5.0 + 0.2 * 4.0 + 2.0 * 0.75)).abs() < 1e-12);
        let zero = LossWeights {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
        };
        assert_eq!(scalar(c.total(zero).unwrap()), 1.0);
    }
}
