use aerial_core::RngStream;
use serde::{Deserialize, Serialize};

use super::expect_cols;
use super::linear::{Activation, Mlp};
use crate::error::NnError;
use crate::params::ParameterStore;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttentionConfig {
    pub heads: usize,
    pub width: usize,
    /// Width of the per-row layers applied after attention.
    pub embed_width: usize,
    pub embed_layers: usize,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            heads: 4,
            width: 64,
            embed_width: 64,
            embed_layers: 3,
        }
    }
}

/// Query, key and value maps of one head, each `Linear → ReLU → Linear`.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub query: Mlp,
    pub key: Mlp,
    pub value: Mlp,
}

/// Multi-head self-attention over the agent axis. Input rows are grouped in
/// consecutive blocks of `N` agents; attention never crosses blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub heads: Vec<Head>,
    pub inputs: usize,
    pub width: usize,
}

impl Attention {
    pub fn new(
        store: &mut ParameterStore,
        name: &str,
        inputs: usize,
        cfg: &AttentionConfig,
        rng: &mut RngStream,
    ) -> Result<Self, NnError> {
        let dims = [inputs, cfg.width, cfg.width];
        let acts = [Activation::Relu, Activation::Identity];
        let heads = (0..cfg.heads)
            .map(|c| {
                Ok(Head {
                    query: Mlp::new(store, &format!("{name}.head{c}.q"), &dims, &acts, rng)?,
                    key: Mlp::new(store, &format!("{name}.head{c}.k"), &dims, &acts, rng)?,
                    value: Mlp::new(store, &format!("{name}.head{c}.v"), &dims, &acts, rng)?,
                })
            })
            .collect::<Result<_, NnError>>()?;
        Ok(Self {
            heads,
            inputs,
            width: cfg.width,
        })
    }

    /// `Σ_c softmax(Q_c K_cᵀ / √d_att) V_c` within each block of `agents` rows.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        memory: Var,
        agents: usize,
    ) -> Result<Var, NnError> {
        expect_cols(tape, memory, self.inputs, "attention")?;
        if agents == 0 || tape.value(memory).rows() % agents != 0 {
            return Err(NnError::ShapeMismatch {
                op: "attention groups",
                left: tape.value(memory).shape().to_vec(),
                right: vec![agents],
            });
        }
        let mut total: Option<Var> = None;
        for head in &self.heads {
            let q = head.query.forward(tape, store, memory)?;
            let k = head.key.forward(tape, store, memory)?;
            let v = head.value.forward(tape, store, memory)?;
            let out = tape.group_attention(q, k, v, agents);
            total = Some(match total {
                Some(t) => tape.add(t, out),
                None => out,
            });
        }
        Ok(total.expect("at least one head"))
    }
}

pub fn attention_heads(
    att: &Attention,
    tape: &mut Tape,
    store: &ParameterStore,
    memory: Var,
    agents: usize,
) -> Result<Var, NnError> {
    att.forward(tape, store, memory, agents)
}

/// Attention followed by a per-row ReLU stack and a mean over agents.
#[derive(Debug, Clone, PartialEq)]
pub struct RecEmbed {
    pub attention: Attention,
    pub post: Mlp,
}

impl RecEmbed {
    pub fn new(
        store: &mut ParameterStore,
        name: &str,
        inputs: usize,
        cfg: &AttentionConfig,
        rng: &mut RngStream,
    ) -> Result<Self, NnError> {
        let attention = Attention::new(store, &format!("{name}.attention"), inputs, cfg, rng)?;
        let mut dims = vec![cfg.width];
        dims.extend(std::iter::repeat(cfg.embed_width).take(cfg.embed_layers));
        let acts = vec![Activation::Relu; cfg.embed_layers];
        let post = Mlp::new(store, &format!("{name}.post"), &dims, &acts, rng)?;
        Ok(Self { attention, post })
    }

    pub fn outputs(&self) -> usize {
        self.post.outputs()
    }

    /// Maps `(G·N) × d` memory to one `G × d_emb` embedding row per block.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        memory: Var,
        agents: usize,
    ) -> Result<Var, NnError> {
        let att = self.attention.forward(tape, store, memory, agents)?;
        let rows = self.post.forward(tape, store, att)?;
        Ok(tape.group_mean(rows, agents))
    }
}

pub fn rec_embed(
    embed: &RecEmbed,
    tape: &mut Tape,
    store: &ParameterStore,
    memory: Var,
    agents: usize,
) -> Result<Var, NnError> {
    embed.forward(tape, store, memory, agents)
}
