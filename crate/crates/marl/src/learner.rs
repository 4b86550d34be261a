//! Shared recurrent agent network, mixer conditioners and the TD update.

use aerial_core::RngStream;
use aerial_nn::{
    clip_grad_norm, GruCell, Linear, Mixer, ParameterStore, RecEmbed, Tape, Tensor, Var,
};

use crate::batch::{Batch, EnvDims};
use crate::config::{NetConfig, TrainConfig};
use crate::error::MarlError;
use crate::variant::VariantKind;

/// `input → Linear → ReLU → GRU → Linear → utilities`, shared by all agents.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNet {
    pub encoder: Linear,
    pub gru: GruCell,
    pub head: Linear,
    pub hidden: usize,
}

impl AgentNet {
    pub fn new(
        store: &mut ParameterStore,
        dims: &EnvDims,
        hidden: usize,
        rng: &mut RngStream,
    ) -> Result<Self, MarlError> {
        Ok(Self {
            encoder: Linear::new(store, "agent.fc1", dims.agent_input(), hidden, rng)?,
            gru: GruCell::new(store, "agent.gru", hidden, hidden, rng)?,
            head: Linear::new(store, "agent.fc2", hidden, dims.actions, rng)?,
            hidden,
        })
    }

    /// One decision point for a block of agent rows: returns `(utilities, h')`.
    pub fn step(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        input: Var,
        hidden: Var,
    ) -> Result<(Var, Var), MarlError> {
        let x = self.encoder.forward(tape, store, input)?;
        let x = tape.relu(x);
        let h = self.gru.step(tape, store, x, hidden)?;
        let q = self.head.forward(tape, store, h)?;
        Ok((q, h))
    }
}

/// Per-agent ε-greedy choice over available actions. Greedy choices take the
/// lowest index among maximal utilities; exploratory ones are uniform over
/// the available actions.
pub fn epsilon_greedy(
    utilities: &[f64],
    avail: &[bool],
    agents: usize,
    epsilon: f64,
    rng: &mut RngStream,
) -> Vec<usize> {
    let a = utilities.len() / agents;
    (0..agents)
        .map(|i| {
            let q = &utilities[i * a..(i + 1) * a];
            let ok = &avail[i * a..(i + 1) * a];
            let explore = rng.bernoulli(epsilon);
            if explore {
                let choices: Vec<usize> = (0..a).filter(|&j| ok[j]).collect();
                if choices.is_empty() {
                    0
                } else {
                    choices[rng.below(choices.len())]
                }
            } else {
                masked_argmax(q, ok)
            }
        })
        .collect()
}

/// Lowest-index maximum over entries with `avail` set (index 0 if none are).
pub fn masked_argmax(q: &[f64], avail: &[bool]) -> usize {
    let mut best: Option<usize> = None;
    for (j, (&v, &ok)) in q.iter().zip(avail).enumerate() {
        if ok && best.map_or(true, |b| v > q[b]) {
            best = Some(j);
        }
    }
    best.unwrap_or(0)
}

/// Online and target networks for one variant.
#[derive(Debug, Clone)]
pub struct Learner {
    pub variant: VariantKind,
    pub dims: EnvDims,
    pub net: NetConfig,
    pub agent: AgentNet,
    pub rec: Option<RecEmbed>,
    pub mixer: Mixer,
    pub params: ParameterStore,
    pub target: ParameterStore,
    pub train_steps: usize,
}

/// Result of building the TD loss on a tape.
#[derive(Debug)]
pub struct TdLoss {
    pub loss: Var,
    /// `(T·B) × 1` online mixed values.
    pub q_tot: Var,
    /// `T·B` TD targets.
    pub targets: Vec<f64>,
    /// Detached `(T·B·N) × H` agent memory fed to the conditioner, if any.
    pub memory: Option<Tensor>,
}

impl Learner {
    pub fn new(
        dims: EnvDims,
        variant: VariantKind,
        net: &NetConfig,
        rng: &mut RngStream,
    ) -> Result<Self, MarlError> {
        let mut params = ParameterStore::new();
        let agent = AgentNet::new(&mut params, &dims, net.hidden, rng)?;
        let (rec, cond) = match variant {
            VariantKind::Aerial => {
                let rec = RecEmbed::new(&mut params, "rec", net.hidden, &net.attention, rng)?;
                let width = rec.outputs();
                (Some(rec), width)
            }
            VariantKind::NoAttention => (None, dims.agents * net.hidden),
            VariantKind::StateBased => (None, dims.state_dim),
            VariantKind::RawHistory => (None, dims.raw_history_width()),
        };
        let mixer = Mixer::new(&mut params, "mixer", dims.agents, cond, &net.mixer, rng)?;
        let target = params.clone();
        Ok(Self {
            variant,
            dims,
            net: *net,
            agent,
            rec,
            mixer,
            params,
            target,
            train_steps: 0,
        })
    }

    pub fn conditioner_width(&self) -> usize {
        self.mixer.conditioner
    }

    pub fn update_target(&mut self) -> Result<(), MarlError> {
        self.target.copy_values_from(&self.params)?;
        Ok(())
    }

    pub fn initial_hidden(&self) -> Tensor {
        Tensor::zeros(&[self.dims.agents, self.net.hidden])
    }

    /// One greedy forward pass for the `N` agents of a single episode:
    /// returns utilities `N × A` and the next hidden state.
    pub fn act_forward(&self, input: &Tensor, hidden: &Tensor) -> Result<(Tensor, Tensor), MarlError> {
        let mut tape = Tape::frozen();
        let x = tape.constant(input.clone());
        let h = tape.constant(hidden.clone());
        let (q, h2) = self.agent.step(&mut tape, &self.params, x, h)?;
        Ok((tape.value(q).clone(), tape.value(h2).clone()))
    }

    /// `rec_t` of one episode's joint memory (`N × H`).
    pub fn embed_memory(&self, memory: &Tensor) -> Result<Option<Vec<f64>>, MarlError> {
        let Some(rec) = &self.rec else { return Ok(None) };
        let mut tape = Tape::frozen();
        let m = tape.constant(memory.clone());
        let e = rec.forward(&mut tape, &self.params, m, self.dims.agents)?;
        Ok(Some(tape.value(e).data().to_vec()))
    }

    /// Unrolls the agent network over decision points `0..=last`, returning
    /// utilities and hidden states per decision point.
    pub fn unroll(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        batch: &Batch,
        last: usize,
    ) -> Result<(Vec<Var>, Vec<Var>), MarlError> {
        let rows = batch.size * self.dims.agents;
        let mut h = tape.constant(Tensor::zeros(&[rows, self.net.hidden]));
        let mut qs = Vec::with_capacity(last + 1);
        let mut hs = Vec::with_capacity(last + 1);
        for input in &batch.inputs[..=last] {
            let x = tape.constant(input.clone());
            let (q, h2) = self.agent.step(tape, store, x, h)?;
            h = h2;
            qs.push(q);
            hs.push(h);
        }
        Ok((qs, hs))
    }

    /// Mixer conditioner for decision points `range`, as `(|range|·B) × c`.
    /// `hs` are the hidden states of those decision points.
    fn conditioner(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        batch: &Batch,
        range: std::ops::Range<usize>,
        hs: &[Var],
        memory_override: Option<&Tensor>,
    ) -> Result<(Var, Option<Tensor>), MarlError> {
        let steps = range.len();
        let b = batch.size;
        let memory = |tape: &mut Tape| -> (Var, Tensor) {
            let m = match memory_override {
                Some(m) => tape.constant(m.clone()),
                None => {
                    let all = tape.concat_rows(hs);
                    tape.detach(all)
                }
            };
            let value = tape.value(m).clone();
            (m, value)
        };
        match self.variant {
            VariantKind::Aerial => {
                let (m, value) = memory(tape);
                let rec = self.rec.as_ref().expect("aerial learner has an embedding");
                let c = rec.forward(tape, store, m, self.dims.agents)?;
                Ok((c, Some(value)))
            }
            VariantKind::NoAttention => {
                let (m, value) = memory(tape);
                let c = tape.reshape(m, &[steps * b, self.dims.agents * self.net.hidden]);
                Ok((c, Some(value)))
            }
            VariantKind::StateBased => {
                let states = batch
                    .states
                    .as_ref()
                    .ok_or_else(|| MarlError::InvalidConfig("state_based batch without states".into()))?;
                let parts: Vec<Var> = states[range].iter().map(|s| tape.constant(s.clone())).collect();
                Ok((tape.concat_rows(&parts), None))
            }
            VariantKind::RawHistory => {
                let raw = batch
                    .raw
                    .as_ref()
                    .ok_or_else(|| MarlError::InvalidConfig("raw_history batch without history".into()))?;
                let parts: Vec<Var> = raw[range].iter().map(|s| tape.constant(s.clone())).collect();
                Ok((tape.concat_rows(&parts), None))
            }
        }
    }

    /// TD targets `y = r + γ · bootstrap · Q_tot^target(next, greedy)` with
    /// greedy actions from the target (or, for double Q, the online) utilities.
    pub fn td_targets(&self, batch: &Batch, gamma: f64, double_q: bool) -> Result<Vec<f64>, MarlError> {
        let (b, n, a, steps) = (batch.size, self.dims.agents, self.dims.actions, batch.steps);
        let mut tape = Tape::frozen();
        let (qs, hs) = self.unroll(&mut tape, &self.target, batch, steps)?;
        let chooser: Vec<Tensor> = if double_q {
            let mut online = Tape::frozen();
            let (oq, _) = self.unroll(&mut online, &self.params, batch, steps)?;
            oq[1..].iter().map(|&q| online.value(q).clone()).collect()
        } else {
            qs[1..].iter().map(|&q| tape.value(q).clone()).collect()
        };
        let mut picks = Vec::with_capacity(steps * b * n);
        for (k, q) in chooser.iter().enumerate() {
            let t = k + 1;
            for r in 0..b * n {
                let avail = &batch.avail[(t * b * n + r) * a..(t * b * n + r + 1) * a];
                picks.push(masked_argmax(q.row_slice(r), avail));
            }
        }
        let next_q = tape.concat_rows(&qs[1..]);
        let chosen = tape.gather_cols(next_q, &picks);
        let chosen = tape.reshape(chosen, &[steps * b, n]);
        let (cond, _) = self.conditioner(&mut tape, &self.target, batch, 1..steps + 1, &hs[1..], None)?;
        let q_next = self.mixer.forward(&mut tape, &self.target, chosen, cond)?;
        let q_next = tape.value(q_next).data();
        Ok((0..steps * b)
            .map(|i| batch.rewards[i] + gamma * batch.bootstrap[i] * q_next[i])
            .collect())
    }

    /// Masked mean squared TD error on `tape`, differentiable in `store`.
    /// `memory_override` replaces the detached agent memory that feeds the
    /// conditioner (used to hold it fixed under finite differences).
    pub fn td_loss(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        batch: &Batch,
        targets: &[f64],
        memory_override: Option<&Tensor>,
    ) -> Result<TdLoss, MarlError> {
        if batch.size == 0 || batch.steps == 0 {
            return Err(MarlError::EmptyBatch);
        }
        let (b, n, steps) = (batch.size, self.dims.agents, batch.steps);
        let (qs, hs) = self.unroll(tape, store, batch, steps - 1)?;
        let q_all = tape.concat_rows(&qs);
        let chosen = tape.gather_cols(q_all, &batch.actions);
        let chosen = tape.reshape(chosen, &[steps * b, n]);
        let (cond, memory) = self.conditioner(tape, store, batch, 0..steps, &hs, memory_override)?;
        let q_tot = self.mixer.forward(tape, store, chosen, cond)?;
        let y = tape.constant(Tensor::matrix(steps * b, 1, targets.to_vec()));
        let mask = tape.constant(Tensor::matrix(steps * b, 1, batch.mask.clone()));
        let diff = tape.sub(q_tot, y);
        let diff = tape.mul(diff, mask);
        let sq = tape.mul(diff, diff);
        let total = tape.sum(sq);
        let loss = tape.scale(total, 1.0 / batch.transitions());
        Ok(TdLoss {
            loss,
            q_tot,
            targets: targets.to_vec(),
            memory,
        })
    }

    /// One optimizer step on `batch`; returns the loss before the update.
    pub fn td_train_step(&mut self, batch: &Batch, cfg: &TrainConfig) -> Result<f64, MarlError> {
        let targets = self.td_targets(batch, cfg.gamma, cfg.double_q)?;
        let mut tape = Tape::new();
        let out = self.td_loss(&mut tape, &self.params, batch, &targets, None)?;
        let loss = tape.value(out.loss).item();
        if !loss.is_finite() {
            return Err(MarlError::Diverged(self.train_steps));
        }
        let mut grads = tape.backward(out.loss)?.into_param_grads(&self.params);
        clip_grad_norm(&mut grads, cfg.grad_clip);
        self.params.rmsprop_update(&grads, &cfg.rmsprop())?;
        self.train_steps += 1;
        if self.train_steps % cfg.target_update_interval == 0 {
            self.update_target()?;
        }
        Ok(loss)
    }

    /// `Q_tot` for explicit per-agent utilities and conditioner rows.
    pub fn mix(&self, utilities: &Tensor, conditioner: &Tensor) -> Result<Vec<f64>, MarlError> {
        let mut tape = Tape::frozen();
        let q = tape.constant(utilities.clone());
        let c = tape.constant(conditioner.clone());
        let out = self.mixer.forward(&mut tape, &self.params, q, c)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Online utilities `(T·B·N) × A` and conditioner rows `(T·B) × c` for
    /// every real or padded decision point `0..steps` of a batch.
    pub fn utilities_and_conditioner(&self, batch: &Batch) -> Result<(Tensor, Tensor), MarlError> {
        let mut tape = Tape::frozen();
        let steps = batch.steps.max(1);
        let (qs, hs) = self.unroll(&mut tape, &self.params, batch, steps - 1)?;
        let q = tape.concat_rows(&qs);
        let (c, _) = self.conditioner(&mut tape, &self.params, batch, 0..steps, &hs, None)?;
        Ok((tape.value(q).clone(), tape.value(c).clone()))
    }
}
