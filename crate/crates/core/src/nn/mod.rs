//! Dense double-precision layers with analytic gradients and Adam.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod params;
pub mod positions;
pub mod tensor;

pub use layers::{
    embedding_lookup, Activation, Embedding, LayerNorm, Linear, Mlp, MultiHeadAttention,
    SeqLayout, TransformerLayer,
};
pub use loss::{rmse_loss, softmax_cross_entropy};
pub use params::{AdamConfig, ParamId, ParameterStore};
pub use positions::sinusoidal_positions;
pub use tensor::Tensor2D;

#[cfg(test)]
mod tests;
