use aerial_core::RngStream;
use serde::{Deserialize, Serialize};

use super::expect_cols;
use crate::error::NnError;
use crate::params::{ParamId, ParameterStore};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    Elu,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Elu => tape.elu(x),
        }
    }
}

/// `y = x W + b` with `W` of shape `in × out` and `b` of shape `1 × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParameterStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut RngStream,
    ) -> Result<Self, NnError> {
        let weight = store.add_uniform(&format!("{name}.weight"), &[inputs, outputs], inputs, rng)?;
        let bias = store.add_uniform(&format!("{name}.bias"), &[1, outputs], inputs, rng)?;
        Ok(Self {
            weight,
            bias,
            inputs,
            outputs,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var, NnError> {
        expect_cols(tape, x, self.inputs, "linear")?;
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let xw = tape.matmul(x, w);
        Ok(tape.add_row(xw, b))
    }
}

/// A stack of affine layers, each followed by its own activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activations: Vec<Activation>,
}

impl Mlp {
    /// `dims` lists the widths from input to output; `activations` has one
    /// entry per layer.
    pub fn new(
        store: &mut ParameterStore,
        name: &str,
        dims: &[usize],
        activations: &[Activation],
        rng: &mut RngStream,
    ) -> Result<Self, NnError> {
        assert_eq!(dims.len(), activations.len() + 1, "one activation per layer");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            layers,
            activations: activations.to_vec(),
        })
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var, NnError> {
        let mut h = x;
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            let z = layer.forward(tape, store, h)?;
            h = act.apply(tape, z);
        }
        Ok(h)
    }
}

pub fn mlp_forward(mlp: &Mlp, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var, NnError> {
    mlp.forward(tape, store, x)
}
