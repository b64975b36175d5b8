//! Small differentiable-computation layer: matrices, a reverse-mode tape,
//! the parameterised blocks the agents are built from, and Adam.

mod adam;
mod layers;
mod matrix;
mod params;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use layers::{
    attention_forward, categorical_head, linear_forward, AttentionMask, AttentionOutput, Categorical, Embedding,
    Linear, Mlp, MultiHeadAttention,
};
pub use matrix::Matrix;
pub use params::{normal, orthogonal, Grads, ParamId, ParamStore, Parameter};
pub use tape::{Tape, Var};
