use candle_core::{Tensor, D};
use serde::{Deserialize, Serialize};

use super::{dropout, LayerNorm, Linear, ParamStore, TrainCtx};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Stacked GRU layers.
    Recurrent,
    /// Residual blocks of dilated causal convolutions.
    DilatedConv,
    /// Causal single-head transformer blocks with learned positions.
    SelfAttention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub dim: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub rnn_layers: usize,
    pub attention_layers: usize,
    pub conv_kernel: usize,
    pub conv_dilations: Vec<usize>,
}

impl EncoderConfig {
    pub fn new(kind: EncoderKind, dim: usize, max_len: usize) -> Self {
        Self {
            kind,
            dim,
            max_len,
            dropout: 0.2,
            rnn_layers: 2,
            attention_layers: 2,
            conv_kernel: 3,
            conv_dilations: vec![1, 2, 4, 8, 1, 2, 4, 8],
        }
    }
}

/// A causal sequence network mapping `(B, L, d)` inputs to `(B, L, d)` states.
///
/// Inputs are left-padded, so position `L - 1` always holds the most recent
/// item and its state is the preference for the next step. The state at
/// position `p` depends only on inputs at positions `<= p`.
#[derive(Clone, Debug)]
pub enum SequenceEncoder {
    Recurrent(Gru),
    DilatedConv(NextItNet),
    SelfAttention(SasRec),
}

impl SequenceEncoder {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &EncoderConfig) -> Result<Self> {
        if cfg.dim == 0 || cfg.max_len == 0 {
            return Err(Error::Config("encoder dim and max_len must be positive".into()));
        }
        if !(0.0..1.0).contains(&cfg.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", cfg.dropout)));
        }
        Ok(match cfg.kind {
            EncoderKind::Recurrent => SequenceEncoder::Recurrent(Gru::new(store, name, cfg)?),
            EncoderKind::DilatedConv => SequenceEncoder::DilatedConv(NextItNet::new(store, name, cfg)?),
            EncoderKind::SelfAttention => SequenceEncoder::SelfAttention(SasRec::new(store, name, cfg)?),
        })
    }

    pub fn kind(&self) -> EncoderKind {
        match self {
            SequenceEncoder::Recurrent(_) => EncoderKind::Recurrent,
            SequenceEncoder::DilatedConv(_) => EncoderKind::DilatedConv,
            SequenceEncoder::SelfAttention(_) => EncoderKind::SelfAttention,
        }
    }

    /// States at every position. `mask` is `(B, L)` with 1 at real items.
    /// Padded positions come back as zero vectors.
    pub fn forward(&self, x: &Tensor, mask: &Tensor, ctx: Option<&TrainCtx>) -> Result<Tensor> {
        let out = match self {
            SequenceEncoder::Recurrent(m) => m.forward(x, mask, ctx)?,
            SequenceEncoder::DilatedConv(m) => m.forward(x, mask)?,
            SequenceEncoder::SelfAttention(m) => m.forward(x, mask, ctx)?,
        };
        Ok(out.broadcast_mul(&mask.unsqueeze(D::Minus1)?)?)
    }

    /// State at the last position, `(B, d)`. Every row needs at least one item.
    pub fn encode(&self, x: &Tensor, mask: &Tensor, ctx: Option<&TrainCtx>) -> Result<Tensor> {
        let l = mask.dim(1)?;
        let last = mask.narrow(1, l - 1, 1)?.flatten_all()?.to_dtype(candle_core::DType::F64)?;
        if last.to_vec1::<f64>()?.contains(&0.0) {
            return Err(Error::Precondition("encode needs at least one history item per row".into()));
        }
        Ok(self.forward(x, mask, ctx)?.narrow(1, l - 1, 1)?.squeeze(1)?)
    }
}

#[derive(Clone, Debug)]
struct GruLayer {
    input: Linear,
    hidden: Linear,
    dim: usize,
}

/// Stacked GRU with torch-style gates:
///
/// ```text
/// r = σ(W_ir x + b_ir + W_hr h + b_hr)
/// z = σ(W_iz x + b_iz + W_hz h + b_hz)
/// n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
/// h' = (1 - z) * n + z * h
/// ```
///
/// Padded steps leave the hidden state untouched, so left padding does not
/// change the final state. Dropout is applied between layers.
#[derive(Clone, Debug)]
pub struct Gru {
    layers: Vec<GruLayer>,
    dropout: f64,
}

impl Gru {
    fn new(store: &mut ParamStore, name: &str, cfg: &EncoderConfig) -> Result<Self> {
        let layers = (0..cfg.rnn_layers.max(1))
            .map(|k| {
                Ok(GruLayer {
                    input: Linear::new(store, &format!("{name}.gru{k}.input"), cfg.dim, 3 * cfg.dim)?,
                    hidden: Linear::new(store, &format!("{name}.gru{k}.hidden"), cfg.dim, 3 * cfg.dim)?,
                    dim: cfg.dim,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            layers,
            dropout: cfg.dropout,
        })
    }

    fn forward(&self, x: &Tensor, mask: &Tensor, ctx: Option<&TrainCtx>) -> Result<Tensor> {
        let (b, l, _) = x.dims3()?;
        let mut h_seq = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            if k > 0 {
                h_seq = dropout(&h_seq, self.dropout, ctx)?;
            }
            let hd = layer.dim;
            let gx = layer.input.forward(&h_seq)?;
            let mut h = Tensor::zeros((b, hd), x.dtype(), x.device())?;
            let mut outs = Vec::with_capacity(l);
            for t in 0..l {
                let gxt = gx.narrow(1, t, 1)?.squeeze(1)?;
                let gh = layer.hidden.forward(&h)?;
                let r = candle_nn::ops::sigmoid(&(gxt.narrow(1, 0, hd)? + gh.narrow(1, 0, hd)?)?)?;
                let z = candle_nn::ops::sigmoid(&(gxt.narrow(1, hd, hd)? + gh.narrow(1, hd, hd)?)?)?;
                let n = (gxt.narrow(1, 2 * hd, hd)? + (r * gh.narrow(1, 2 * hd, hd)?)?)?.tanh()?;
                let h_new = (&n + (z * (&h - &n)?)?)?;
                let m = mask.narrow(1, t, 1)?;
                h = (&h + (h_new - &h)?.broadcast_mul(&m)?)?;
                outs.push(h.clone());
            }
            h_seq = Tensor::stack(&outs, 1)?;
        }
        Ok(h_seq)
    }
}

#[derive(Clone, Debug)]
struct CausalConv {
    taps: Vec<Tensor>,
    bias: Tensor,
    dilation: usize,
}

impl CausalConv {
    fn new(store: &mut ParamStore, name: &str, channels: usize, kernel: usize, dilation: usize) -> Result<Self> {
        let bound = 1.0 / ((channels * kernel) as f64).sqrt();
        let taps = (0..kernel)
            .map(|j| store.uniform(&format!("{name}.tap{j}"), &[channels, channels], bound))
            .collect::<Result<_>>()?;
        let bias = store.uniform(&format!("{name}.bias"), &[channels], bound)?;
        Ok(Self { taps, bias, dilation })
    }

    /// `y[t] = b + sum_j x[t - (k-1-j) * dilation] W_j`, zeros before the start.
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, l, c) = x.dims3()?;
        let k = self.taps.len();
        let mut acc: Option<Tensor> = None;
        for (j, w) in self.taps.iter().enumerate() {
            let shift = (k - 1 - j) * self.dilation;
            if shift >= l {
                continue;
            }
            let shifted = if shift == 0 {
                x.clone()
            } else {
                x.narrow(1, 0, l - shift)?.pad_with_zeros(1, shift, 0)?
            };
            let term = shifted.reshape((b * l, c))?.matmul(w)?;
            acc = Some(match acc {
                Some(a) => (a + term)?,
                None => term,
            });
        }
        let acc = acc.expect("tap with zero shift always contributes");
        Ok(acc.broadcast_add(&self.bias)?.reshape((b, l, c))?)
    }
}

#[derive(Clone, Debug)]
struct ResidualBlock {
    conv1: CausalConv,
    norm1: LayerNorm,
    conv2: CausalConv,
    norm2: LayerNorm,
}

/// Dilated causal convolution stack in the NextItNet layout.
///
/// Each entry `d` of the dilation list is one residual block:
///
/// ```text
/// h = relu(LN(conv_{dilation d}(x)))
/// h = relu(LN(conv_{dilation 2d}(h)))
/// out = (x + h) * mask
/// ```
///
/// Re-masking after every block keeps padded positions at zero, so they look
/// exactly like the implicit zeros before the sequence start.
#[derive(Clone, Debug)]
pub struct NextItNet {
    blocks: Vec<ResidualBlock>,
}

impl NextItNet {
    fn new(store: &mut ParamStore, name: &str, cfg: &EncoderConfig) -> Result<Self> {
        if cfg.conv_kernel == 0 || cfg.conv_dilations.contains(&0) {
            return Err(Error::Config("kernel size and dilations must be positive".into()));
        }
        let blocks = cfg
            .conv_dilations
            .iter()
            .enumerate()
            .map(|(k, &d)| {
                let p = format!("{name}.block{k}");
                Ok(ResidualBlock {
                    conv1: CausalConv::new(store, &format!("{p}.conv1"), cfg.dim, cfg.conv_kernel, d)?,
                    norm1: LayerNorm::new(store, &format!("{p}.ln1"), cfg.dim)?,
                    conv2: CausalConv::new(store, &format!("{p}.conv2"), cfg.dim, cfg.conv_kernel, 2 * d)?,
                    norm2: LayerNorm::new(store, &format!("{p}.ln2"), cfg.dim)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { blocks })
    }

    fn forward(&self, x: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let m = mask.unsqueeze(D::Minus1)?;
        let mut h = x.broadcast_mul(&m)?;
        for blk in &self.blocks {
            let y = blk.norm1.forward(&blk.conv1.forward(&h)?)?.relu()?;
            let y = blk.norm2.forward(&blk.conv2.forward(&y)?)?.relu()?;
            h = (h + y)?.broadcast_mul(&m)?;
        }
        Ok(h)
    }
}

#[derive(Clone, Debug)]
struct AttentionBlock {
    norm_attn: LayerNorm,
    query: Linear,
    key: Linear,
    value: Linear,
    out: Linear,
    norm_ffn: LayerNorm,
    ffn1: Linear,
    ffn2: Linear,
}

/// SASRec-style encoder.
///
/// ```text
/// x = (e * sqrt(d) + pos) -> dropout -> * mask
/// per block:
///   q = LN(x)
///   x = q + Wo softmax(q Wq (x Wk)^T / sqrt(d) + causal_mask) x Wv
///   x = LN(x)
///   x = (x + dropout(W2 dropout(relu(W1 x)))) * mask
/// out = LN(x)
/// ```
///
/// Attention weights are dropped out as well. Keys at padded positions and
/// keys after the query are masked with a large negative bias.
#[derive(Clone, Debug)]
pub struct SasRec {
    positions: Tensor,
    blocks: Vec<AttentionBlock>,
    norm_out: LayerNorm,
    dim: usize,
    max_len: usize,
    dropout: f64,
}

impl SasRec {
    fn new(store: &mut ParamStore, name: &str, cfg: &EncoderConfig) -> Result<Self> {
        let d = cfg.dim;
        let positions = store.normal(&format!("{name}.positions"), &[cfg.max_len, d], 1.0 / (d as f64).sqrt())?;
        let blocks = (0..cfg.attention_layers.max(1))
            .map(|k| {
                let p = format!("{name}.block{k}");
                Ok(AttentionBlock {
                    norm_attn: LayerNorm::new(store, &format!("{p}.ln_attn"), d)?,
                    query: Linear::new(store, &format!("{p}.query"), d, d)?,
                    key: Linear::new(store, &format!("{p}.key"), d, d)?,
                    value: Linear::new(store, &format!("{p}.value"), d, d)?,
                    out: Linear::new(store, &format!("{p}.out"), d, d)?,
                    norm_ffn: LayerNorm::new(store, &format!("{p}.ln_ffn"), d)?,
                    ffn1: Linear::new(store, &format!("{p}.ffn1"), d, d)?,
                    ffn2: Linear::new(store, &format!("{p}.ffn2"), d, d)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            positions,
            blocks,
            norm_out: LayerNorm::new(store, &format!("{name}.ln_out"), d)?,
            dim: d,
            max_len: cfg.max_len,
            dropout: cfg.dropout,
        })
    }

    fn forward(&self, x: &Tensor, mask: &Tensor, ctx: Option<&TrainCtx>) -> Result<Tensor> {
        let (b, l, d) = x.dims3()?;
        if l > self.max_len {
            return Err(Error::Precondition(format!(
                "sequence length {l} exceeds positional table {}",
                self.max_len
            )));
        }
        let m = mask.unsqueeze(D::Minus1)?;
        // positions are aligned to the right edge, matching left padding
        let pos = self.positions.narrow(0, self.max_len - l, l)?;
        let mut h = ((x * (d as f64).sqrt())?.broadcast_add(&pos)?).broadcast_mul(&m)?;
        h = dropout(&h, self.dropout, ctx)?.broadcast_mul(&m)?;

        let allowed = causal_allowed(mask, l)?;
        let bias = ((allowed - 1.0)? * 1e9)?;
        let scale = 1.0 / (self.dim as f64).sqrt();
        for blk in &self.blocks {
            let q_in = blk.norm_attn.forward(&h)?;
            let q = blk.query.forward(&q_in)?;
            let k = blk.key.forward(&h)?;
            let v = blk.value.forward(&h)?;
            let scores = (q.matmul(&k.t()?.contiguous()?)? * scale)?.broadcast_add(&bias)?;
            let attn = candle_nn::ops::softmax(&scores, D::Minus1)?;
            let attn = dropout(&attn, self.dropout, ctx)?;
            let ctx_vec = blk.out.forward(&attn.matmul(&v)?)?;
            h = (q_in + ctx_vec)?;
            h = blk.norm_ffn.forward(&h)?;
            let f = dropout(&blk.ffn1.forward(&h)?.relu()?, self.dropout, ctx)?;
            let f = dropout(&blk.ffn2.forward(&f)?, self.dropout, ctx)?;
            h = (h + f)?.broadcast_mul(&m)?;
        }
        let _ = b;
        self.norm_out.forward(&h)
    }
}

/// `(B, L, L)` with 1 where query `i` may attend key `j`: `j <= i` and key `j` is real.
fn causal_allowed(mask: &Tensor, l: usize) -> Result<Tensor> {
    let tri: Vec<f64> = (0..l)
        .flat_map(|i| (0..l).map(move |j| if j <= i { 1.0 } else { 0.0 }))
        .collect();
    let tri = Tensor::from_vec(tri, (1, l, l), mask.device())?.to_dtype(mask.dtype())?;
    Ok(tri.broadcast_mul(&mask.unsqueeze(1)?)?)
}
