use serde::{Deserialize, Serialize};

use crate::loss::LossWeights;
use crate::nn::{EncoderConfig, EncoderKind, Precision};
use crate::{Error, Result};

/// Which model a [`super::Recommender`] implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Full disentangled model with attention blending.
    #[default]
    Dcr,
    /// Interest match only (`w_int = 1`).
    Var0,
    /// Matches added, no auxiliary match losses (`alpha` forced to 0).
    Var1,
    /// Matches added, auxiliary match losses kept.
    Var2,
    BaseBce,
    BaseBpr,
    BiasTower,
    IpwBce,
    IpwBpr,
    Macr,
}

impl Mode {
    pub const ALL: [Mode; 10] = [
        Mode::Dcr,
        Mode::Var0,
        Mode::Var1,
        Mode::Var2,
        Mode::BaseBce,
        Mode::BaseBpr,
        Mode::BiasTower,
        Mode::IpwBce,
        Mode::IpwBpr,
        Mode::Macr,
    ];

    pub fn is_dcr_family(self) -> bool {
        matches!(self, Mode::Dcr | Mode::Var0 | Mode::Var1 | Mode::Var2)
    }

    /// Whether inference subtracts `c` times the direct-effect product.
    pub fn uses_counterfactual(self) -> bool {
        self.is_dcr_family() || self == Mode::Macr
    }

    pub fn is_pairwise(self) -> bool {
        matches!(self, Mode::BaseBpr | Mode::IpwBpr)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Dcr => "dcr",
            Mode::Var0 => "var0",
            Mode::Var1 => "var1",
            Mode::Var2 => "var2",
            Mode::BaseBce => "base_bce",
            Mode::BaseBpr => "base_bpr",
            Mode::BiasTower => "bias_tower",
            Mode::IpwBce => "ipw_bce",
            Mode::IpwBpr => "ipw_bpr",
            Mode::Macr => "macr",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model mode `{s}`")))
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Main-loss family for the disentangled model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MainLoss {
    #[default]
    Bce,
    Bpr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub mode: Mode,
    pub encoder: EncoderKind,
    /// Item embedding and representation width.
    pub dim: usize,
    /// Histories are truncated to their most recent `max_len` items.
    pub max_len: usize,
    pub dropout: f64,
    pub rnn_layers: usize,
    pub attention_layers: usize,
    pub conv_kernel: usize,
    pub conv_dilations: Vec<usize>,
    /// Explicit user embedding width; 0 disables user embeddings and merge networks.
    pub user_dim: usize,
    pub interest_hidden: usize,
    pub popularity_hidden: usize,
    pub atten_hidden: usize,
    pub merge_hidden: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Reference constant subtracted at inference.
    pub c: f64,
    pub main_loss: MainLoss,
    pub precision: Precision,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Dcr,
            encoder: EncoderKind::SelfAttention,
            dim: 50,
            max_len: 200,
            dropout: 0.2,
            rnn_layers: 2,
            attention_layers: 2,
            conv_kernel: 3,
            conv_dilations: vec![1, 2, 4, 8, 1, 2, 4, 8],
            user_dim: 0,
            interest_hidden: 150,
            popularity_hidden: 100,
            atten_hidden: 50,
            merge_hidden: 50,
            alpha: 2e-2,
            beta: 2e-2,
            gamma: 5e-1,
            c: 30.0,
            main_loss: MainLoss::Bce,
            precision: Precision::F32,
        }
    }
}

impl ModelConfig {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            kind: self.encoder,
            dim: self.dim,
            max_len: self.max_len,
            dropout: self.dropout,
            rnn_layers: self.rnn_layers,
            attention_layers: self.attention_layers,
            conv_kernel: self.conv_kernel,
            conv_dilations: self.conv_dilations.clone(),
        }
    }

    /// Loss weights in effect; `var1` trains without the match losses.
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            alpha: if self.mode == Mode::Var1 { 0.0 } else { self.alpha },
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("max_len", self.max_len),
            ("interest_hidden", self.interest_hidden),
            ("popularity_hidden", self.popularity_hidden),
            ("atten_hidden", self.atten_hidden),
            ("merge_hidden", self.merge_hidden),
        ];
        if let Some((n, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{n} must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("model.dropout {} outside [0, 1)", self.dropout)));
        }
        if !self.c.is_finite() || self.c < 0.0 {
            return Err(Error::Config(format!("model.c {} must be finite and >= 0", self.c)));
        }
        if self.main_loss == MainLoss::Bpr && !self.mode.is_dcr_family() {
            return Err(Error::Config("model.main_loss only applies to dcr and its variants".into()));
        }
        if self.user_dim > 0 && !self.mode.is_dcr_family() {
            return Err(Error::Config("explicit user embeddings are only supported for dcr modes".into()));
        }
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
        }
        .validate()
    }
}
