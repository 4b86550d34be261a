//! Numeric episode storage and padded training batches.

use aerial_core::{DecPomdp, EpisodeTrace};
use aerial_nn::Tensor;

/// Sizes of a model as seen by the learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvDims {
    pub agents: usize,
    pub obs_dim: usize,
    pub actions: usize,
    pub state_dim: usize,
    pub horizon: usize,
}

impl EnvDims {
    pub fn of<M: DecPomdp + ?Sized>(model: &M) -> Self {
        let actions = model.num_actions(0);
        assert!(
            (0..model.num_agents()).all(|i| model.num_actions(i) == actions),
            "parameter sharing needs equal action counts"
        );
        Self {
            agents: model.num_agents(),
            obs_dim: model.obs_dim(),
            actions,
            state_dim: model.state_dim(),
            horizon: model.horizon(),
        }
    }

    /// Agent network input: observation, previous action one-hot, agent id one-hot.
    pub fn agent_input(&self) -> usize {
        self.obs_dim + self.actions + self.agents
    }

    /// One decision point of the flattened joint history.
    pub fn history_slot(&self) -> usize {
        self.agents * (self.obs_dim + self.actions)
    }

    pub fn raw_history_width(&self) -> usize {
        (self.horizon + 1) * self.history_slot() + self.state_dim
    }
}

/// Agent-network inputs for one decision point of one episode: an `N × in`
/// tensor of `[observation, previous action one-hot, agent id one-hot]`.
pub fn agent_inputs(dims: &EnvDims, obs: &[f64], last_action: Option<&[usize]>) -> Tensor {
    let width = dims.agent_input();
    let mut data = vec![0.0; dims.agents * width];
    for i in 0..dims.agents {
        fill_input_row(dims, &mut data[i * width..(i + 1) * width], obs, last_action, i);
    }
    Tensor::matrix(dims.agents, width, data)
}

fn fill_input_row(dims: &EnvDims, row: &mut [f64], obs: &[f64], last_action: Option<&[usize]>, i: usize) {
    let (o, a) = (dims.obs_dim, dims.actions);
    row[..o].copy_from_slice(&obs[i * o..(i + 1) * o]);
    if let Some(last) = last_action {
        row[o + last[i]] = 1.0;
    }
    row[o + a + i] = 1.0;
}

/// An episode reduced to the numbers the learner needs. Decision points
/// `0..=len` carry observations and action masks; transitions `0..len`
/// carry joint actions and rewards. The last transition is always terminal:
/// the episode either ended or reached the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedEpisode {
    pub len: usize,
    /// `(len + 1)` rows of `agents · obs_dim`.
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<usize>>,
    /// `(len + 1)` rows of `agents · actions`.
    pub avail: Vec<Vec<bool>>,
    pub rewards: Vec<f64>,
    /// `(len + 1)` rows of state features, when recorded.
    pub states: Option<Vec<Vec<f64>>>,
}

impl EncodedEpisode {
    pub fn from_trace<M: DecPomdp + ?Sized>(model: &M, trace: &EpisodeTrace<M::Obs>) -> Self {
        let len = trace.len();
        let obs = trace
            .steps
            .iter()
            .map(|s| s.observations.iter().flat_map(|o| model.encode_obs(o)).collect())
            .collect();
        let avail = trace
            .steps
            .iter()
            .map(|s| s.available.iter().flatten().copied().collect())
            .collect();
        let actions = (0..len).map(|t| trace.history.joint_action(t)).collect();
        Self {
            len,
            obs,
            actions,
            avail,
            rewards: trace.rewards.clone(),
            states: trace.state_features.clone(),
        }
    }
}

/// `B` episodes padded to the longest one (`steps` transitions).
///
/// Row layouts: per decision point, agent rows are `b · N + i`; stacked
/// over time they become `t · B · N + b · N + i`, and per-episode rows
/// `t · B + b`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub dims: EnvDims,
    pub size: usize,
    pub steps: usize,
    /// `steps + 1` tensors of `(B·N) × agent_input`.
    pub inputs: Vec<Tensor>,
    /// `steps · B · N` chosen actions (0 on padding).
    pub actions: Vec<usize>,
    /// `(steps + 1) · B · N · A` action masks (all true on padding).
    pub avail: Vec<bool>,
    /// `steps · B` rewards.
    pub rewards: Vec<f64>,
    /// `steps · B`: 1 on real transitions.
    pub mask: Vec<f64>,
    /// `steps · B`: 1 where the next decision point exists and is not terminal.
    pub bootstrap: Vec<f64>,
    /// `steps + 1` tensors of `B × state_dim`, when every episode has states.
    pub states: Option<Vec<Tensor>>,
    /// `steps + 1` tensors of `B × raw_history_width`, when requested.
    pub raw: Option<Vec<Tensor>>,
}

impl Batch {
    pub fn new(dims: EnvDims, episodes: &[&EncodedEpisode], with_raw: bool) -> Self {
        let b = episodes.len();
        let n = dims.agents;
        let a = dims.actions;
        let steps = episodes.iter().map(|e| e.len).max().unwrap_or(0);
        let width = dims.agent_input();

        let mut inputs = Vec::with_capacity(steps + 1);
        for t in 0..=steps {
            let mut data = vec![0.0; b * n * width];
            for (bi, ep) in episodes.iter().enumerate() {
                if t > ep.len {
                    continue;
                }
                let last = if t > 0 { Some(ep.actions[t - 1].as_slice()) } else { None };
                for i in 0..n {
                    let row = &mut data[(bi * n + i) * width..(bi * n + i + 1) * width];
                    fill_input_row(&dims, row, &ep.obs[t], last, i);
                }
            }
            inputs.push(Tensor::matrix(b * n, width, data));
        }

        let mut actions = vec![0; steps * b * n];
        let mut rewards = vec![0.0; steps * b];
        let mut mask = vec![0.0; steps * b];
        let mut bootstrap = vec![0.0; steps * b];
        let mut avail = vec![true; (steps + 1) * b * n * a];
        for (bi, ep) in episodes.iter().enumerate() {
            for t in 0..ep.len {
                for i in 0..n {
                    actions[(t * b + bi) * n + i] = ep.actions[t][i];
                }
                rewards[t * b + bi] = ep.rewards[t];
                mask[t * b + bi] = 1.0;
                if t + 1 < ep.len {
                    bootstrap[t * b + bi] = 1.0;
                }
            }
            for t in 0..=ep.len {
                let dst = &mut avail[(t * b + bi) * n * a..(t * b + bi + 1) * n * a];
                dst.copy_from_slice(&ep.avail[t]);
                // A dead agent with nothing available still needs an argmax.
                for i in 0..n {
                    let agent = &mut dst[i * a..(i + 1) * a];
                    if agent.iter().all(|v| !v) {
                        agent[0] = true;
                    }
                }
            }
        }

        let states = if episodes.iter().all(|e| e.states.is_some()) && b > 0 {
            Some(
                (0..=steps)
                    .map(|t| {
                        let mut data = vec![0.0; b * dims.state_dim];
                        for (bi, ep) in episodes.iter().enumerate() {
                            if t <= ep.len {
                                let s = &ep.states.as_ref().unwrap()[t];
                                data[bi * dims.state_dim..(bi + 1) * dims.state_dim].copy_from_slice(s);
                            }
                        }
                        Tensor::matrix(b, dims.state_dim, data)
                    })
                    .collect(),
            )
        } else {
            None
        };

        let raw = if with_raw {
            Some(raw_history(&dims, episodes, steps))
        } else {
            None
        };

        Self {
            dims,
            size: b,
            steps,
            inputs,
            actions,
            avail,
            rewards,
            mask,
            bootstrap,
            states,
            raw,
        }
    }

    pub fn transitions(&self) -> f64 {
        self.mask.iter().sum()
    }
}

/// Flattened joint history `(z_0, a_0, z_1, ..., a_{t-1}, z_t)` per decision
/// point, zero-padded to the horizon, followed by the state features.
fn raw_history(dims: &EnvDims, episodes: &[&EncodedEpisode], steps: usize) -> Vec<Tensor> {
    let b = episodes.len();
    let (n, o, a) = (dims.agents, dims.obs_dim, dims.actions);
    let slot = dims.history_slot();
    let width = dims.raw_history_width();
    let hist_width = width - dims.state_dim;
    (0..=steps)
        .map(|t| {
            let mut data = vec![0.0; b * width];
            for (bi, ep) in episodes.iter().enumerate() {
                if t > ep.len {
                    continue;
                }
                let row = &mut data[bi * width..(bi + 1) * width];
                for k in 0..=t.min(dims.horizon) {
                    for i in 0..n {
                        let base = k * slot + i * (o + a);
                        row[base..base + o].copy_from_slice(&ep.obs[k][i * o..(i + 1) * o]);
                        if k > 0 {
                            row[base + o + ep.actions[k - 1][i]] = 1.0;
                        }
                    }
                }
                if let Some(states) = &ep.states {
                    row[hist_width..].copy_from_slice(&states[t]);
                }
            }
            Tensor::matrix(b, width, data)
        })
        .collect()
}
