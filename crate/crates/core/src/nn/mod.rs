//! Parameters, layers, shared embeddings and sequence backbones.
//!
//! Everything here is built on `candle` tensors. Parameters are created from a
//! seeded ChaCha stream so that a seed fully determines the initial weights,
//! and dropout masks come from the same kind of stream through [`TrainCtx`].

mod embedding;
mod encoder;
mod layers;
mod params;

pub use embedding::{ids_tensor, EmbeddingTable, ItemEmbedding};
pub use encoder::{EncoderConfig, EncoderKind, SequenceEncoder};
pub use layers::{dropout, layer_norm, LayerNorm, Linear, Merge, Mlp};
pub use params::{ParamStore, Precision, TrainCtx};
