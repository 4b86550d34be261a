//! Network blocks built on the tape.
//!
//! Every block owns only [`ParamId`](crate::ParamId) handles; the values live
//! in a [`ParameterStore`](crate::ParameterStore) so that online and target
//! networks can share one layout and be copied wholesale.

mod attention;
mod gru;
mod linear;
mod mixer;

pub use attention::{attention_heads, rec_embed, Attention, AttentionConfig, Head, RecEmbed};
pub use gru::{gru_step, GruCell};
pub use linear::{mlp_forward, Activation, Linear, Mlp};
pub use mixer::{qmix_mix, Mixer, MixerConfig};

use crate::error::NnError;
use crate::tape::{Tape, Var};

pub(crate) fn expect_cols(tape: &Tape, x: Var, cols: usize, op: &'static str) -> Result<(), NnError> {
    let v = tape.value(x);
    if v.shape().len() != 2 || v.cols() != cols {
        return Err(NnError::ShapeMismatch {
            op,
            left: v.shape().to_vec(),
            right: vec![v.rows(), cols],
        });
    }
    Ok(())
}
