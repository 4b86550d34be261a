//! Dense tensors with reverse-mode differentiation and the network blocks
//! used by the value-factorization learners: MLPs, a GRU cell, multi-head
//! attention over agents with a pooled embedding, and a monotone mixer.
//!
//! All arithmetic is `f64`. A [`Tape`] records one forward pass; parameters
//! live in a [`ParameterStore`] and are bound to a tape by id.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tape;
pub mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, write_checkpoint};
pub use error::NnError;
pub use gradcheck::{check_parameter_gradients, relative_error, GradCheckReport};
pub use layers::{
    attention_heads, gru_step, mlp_forward, qmix_mix, rec_embed, Activation, Attention,
    AttentionConfig, GruCell, Head, Linear, Mixer, MixerConfig, Mlp, RecEmbed,
};
pub use params::{clip_grad_norm, ParamId, ParameterStore, RmsPropConfig};
pub use tape::{Grads, Tape, Var};
pub use tensor::Tensor;
