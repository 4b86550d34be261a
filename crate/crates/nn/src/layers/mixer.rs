use aerial_core::RngStream;
use serde::{Deserialize, Serialize};

use super::expect_cols;
use super::linear::{Activation, Mlp};
use crate::error::NnError;
use crate::params::ParameterStore;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixerConfig {
    /// Width of the mixing hidden layer.
    pub embed: usize,
    /// Hidden width of the weight hypernetworks.
    pub hyper_hidden: usize,
}

impl Default for MixerConfig {
    fn default() -> Self {
        Self {
            embed: 32,
            hyper_hidden: 64,
        }
    }
}

/// Monotone two-layer mixing of agent utilities:
///
/// ```text
/// hidden = elu(q |W1(c)| + b1(c))        W1(c): N × E
/// Q_tot  = hidden · |w2(c)| + V(c)
/// ```
///
/// `W1`, `w2` and `V` are `Linear → ReLU → Linear` maps of the conditioner
/// `c`; `b1` is a single affine map.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixer {
    pub hyper_w1: Mlp,
    pub hyper_b1: Mlp,
    pub hyper_w2: Mlp,
    pub value: Mlp,
    pub agents: usize,
    pub conditioner: usize,
    pub embed: usize,
}

impl Mixer {
    pub fn new(
        store: &mut ParameterStore,
        name: &str,
        agents: usize,
        conditioner: usize,
        cfg: &MixerConfig,
        rng: &mut RngStream,
    ) -> Result<Self, NnError> {
        let (e, h) = (cfg.embed, cfg.hyper_hidden);
        let two = [Activation::Relu, Activation::Identity];
        Ok(Self {
            hyper_w1: Mlp::new(store, &format!("{name}.hyper_w1"), &[conditioner, h, agents * e], &two, rng)?,
            hyper_b1: Mlp::new(store, &format!("{name}.hyper_b1"), &[conditioner, e], &[Activation::Identity], rng)?,
            hyper_w2: Mlp::new(store, &format!("{name}.hyper_w2"), &[conditioner, h, e], &two, rng)?,
            value: Mlp::new(store, &format!("{name}.value"), &[conditioner, e, 1], &two, rng)?,
            agents,
            conditioner,
            embed: e,
        })
    }

    /// `utilities` is `M × N`, `conditioner` is `M × c`; returns `M × 1`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        utilities: Var,
        conditioner: Var,
    ) -> Result<Var, NnError> {
        expect_cols(tape, utilities, self.agents, "mixer utilities")?;
        expect_cols(tape, conditioner, self.conditioner, "mixer conditioner")?;
        if tape.value(utilities).rows() != tape.value(conditioner).rows() {
            return Err(NnError::ShapeMismatch {
                op: "mixer rows",
                left: tape.value(utilities).shape().to_vec(),
                right: tape.value(conditioner).shape().to_vec(),
            });
        }
        let w1 = self.hyper_w1.forward(tape, store, conditioner)?;
        let w1 = tape.abs(w1);
        let b1 = self.hyper_b1.forward(tape, store, conditioner)?;
        let hidden = tape.batch_vec_mat(utilities, w1, self.embed);
        let hidden = tape.add(hidden, b1);
        let hidden = tape.elu(hidden);
        let w2 = self.hyper_w2.forward(tape, store, conditioner)?;
        let w2 = tape.abs(w2);
        let weighted = tape.mul(hidden, w2);
        let mixed = tape.sum_cols(weighted);
        let v = self.value.forward(tape, store, conditioner)?;
        Ok(tape.add(mixed, v))
    }
}

pub fn qmix_mix(
    mixer: &Mixer,
    tape: &mut Tape,
    store: &ParameterStore,
    utilities: Var,
    conditioner: Var,
) -> Result<Var, NnError> {
    mixer.forward(tape, store, utilities, conditioner)
}
