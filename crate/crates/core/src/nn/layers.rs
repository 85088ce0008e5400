use candle_core::{Tensor, D};

use super::{ParamStore, TrainCtx};
use crate::Result;

/// Affine map `x W + b` over the last dimension; `W` is stored `(in, out)`.
#[derive(Clone, Debug)]
pub struct Linear {
    weight: Tensor,
    bias: Option<Tensor>,
    in_dim: usize,
    out_dim: usize,
}

impl Linear {
    /// Uniform init in `±1/sqrt(in)` for weights and bias.
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize) -> Result<Self> {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = store.uniform(&format!("{name}.weight"), &[in_dim, out_dim], bound)?;
        let bias = Some(store.uniform(&format!("{name}.bias"), &[out_dim], bound)?);
        Ok(Self {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn no_bias(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize) -> Result<Self> {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = store.uniform(&format!("{name}.weight"), &[in_dim, out_dim], bound)?;
        Ok(Self {
            weight,
            bias: None,
            in_dim,
            out_dim,
        })
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> Option<&Tensor> {
        self.bias.as_ref()
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let rows = x.elem_count() / self.in_dim;
        let y = x.reshape((rows, self.in_dim))?.matmul(&self.weight)?;
        let y = match &self.bias {
            Some(b) => y.broadcast_add(b)?,
            None => y,
        };
        let mut out_dims = dims;
        *out_dims.last_mut().expect("rank >= 1") = self.out_dim;
        Ok(y.reshape(out_dims)?)
    }
}

/// Perceptron with ReLU between layers and a linear output layer.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    /// `sizes` lists the output width of every layer, e.g. `[150, 50]`.
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, sizes: &[usize]) -> Result<Self> {
        let mut layers = Vec::with_capacity(sizes.len());
        let mut d = in_dim;
        for (k, &s) in sizes.iter().enumerate() {
            layers.push(Linear::new(store, &format!("{name}.{k}"), d, s)?);
            d = s;
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            h = l.forward(&h)?;
            if k < last {
                h = h.relu()?;
            }
        }
        Ok(h)
    }
}

/// Layer normalisation over the last dimension, written with differentiable ops.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let mean = x.mean_keepdim(D::Minus1)?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    let normed = centered.broadcast_div(&(var + eps)?.sqrt()?)?;
    Ok(normed.broadcast_mul(gamma)?.broadcast_add(beta)?)
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    gamma: Tensor,
    beta: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.constant(&format!("{name}.gamma"), &[dim], 1.0)?,
            beta: store.constant(&format!("{name}.beta"), &[dim], 0.0)?,
            eps: 1e-8,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        layer_norm(x, &self.gamma, &self.beta, self.eps)
    }
}

/// Inverted dropout; identity in evaluation mode or when `p == 0`.
pub fn dropout(x: &Tensor, p: f64, ctx: Option<&TrainCtx>) -> Result<Tensor> {
    match ctx {
        Some(ctx) if p > 0.0 => {
            let mask = ctx.dropout_mask(x.dims(), p, x.dtype(), x.device())?;
            Ok((x * mask)?)
        }
        _ => Ok(x.clone()),
    }
}

/// Combines a dynamic (sequence) preference with an optional static user vector.
#[derive(Clone, Debug)]
pub enum Merge {
    /// Returns the dynamic preference unchanged.
    Identity,
    /// Two-layer perceptron over `[dynamic, user]`.
    Mlp(Mlp),
}

impl Merge {
    pub fn mlp(store: &mut ParamStore, name: &str, dyn_dim: usize, user_dim: usize, sizes: &[usize]) -> Result<Self> {
        Ok(Merge::Mlp(Mlp::new(store, name, dyn_dim + user_dim, sizes)?))
    }

    /// `dynamic` is `(B, P, d)`, `user` is `(B, d_u)`.
    pub fn forward(&self, dynamic: &Tensor, user: Option<&Tensor>) -> Result<Tensor> {
        match (self, user) {
            (Merge::Identity, _) => Ok(dynamic.clone()),
            (Merge::Mlp(mlp), Some(user)) => {
                let (b, p, _) = dynamic.dims3()?;
                let du = user.dim(D::Minus1)?;
                let user = user.unsqueeze(1)?.broadcast_as((b, p, du))?;
                let joined = Tensor::cat(&[dynamic, &user], D::Minus1)?;
                mlp.forward(&joined)
            }
            (Merge::Mlp(_), None) => Err(crate::Error::Config(
                "merge network configured but no user embedding supplied".into(),
            )),
        }
    }
}
