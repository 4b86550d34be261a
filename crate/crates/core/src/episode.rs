//! Episode simulation and returns.

use crate::error::ModelError;
use crate::history::JointHistory;
use crate::model::DecPomdp;
use crate::rng::RngStream;

/// `G_t = Σ_c γ^c r_{t+c}` for every `t`, computed backwards.
pub fn discounted_return(rewards: &[f64], discount: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, &r) in rewards.iter().enumerate().rev() {
        acc = r + discount * acc;
        out[t] = acc;
    }
    out
}

/// What the decentralized agents see at one decision point.
#[derive(Debug, Clone)]
pub struct StepRecord<O> {
    pub observations: Vec<O>,
    pub available: Vec<Vec<bool>>,
}

/// A rolled-out episode. `steps` has one more entry than `rewards`: it holds
/// the observations the agents acted on at every step plus the final ones.
#[derive(Debug, Clone)]
pub struct EpisodeTrace<O> {
    pub history: JointHistory<O>,
    pub steps: Vec<StepRecord<O>>,
    pub rewards: Vec<f64>,
    pub returns: Vec<f64>,
    /// Learned recurrence embedding per executed step, when recorded.
    pub embeddings: Option<Vec<Vec<f64>>>,
    /// True-state features per decision point (`steps.len()` rows), when recorded.
    pub state_features: Option<Vec<Vec<f64>>>,
    pub terminated: bool,
    pub win: bool,
}

impl<O: Clone> EpisodeTrace<O> {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn total_return(&self) -> f64 {
        self.returns.first().copied().unwrap_or(0.0)
    }
}

/// Rolls out one episode from a given start state. `policy` only sees the
/// per-agent observations and action masks, never the state.
pub fn rollout_from<M, P>(
    model: &M,
    start: M::State,
    initial_obs: Vec<M::Obs>,
    mut policy: P,
    rng: &mut RngStream,
) -> Result<EpisodeTrace<M::Obs>, ModelError>
where
    M: DecPomdp,
    P: FnMut(&StepRecord<M::Obs>, &mut RngStream) -> Vec<usize>,
{
    let n = model.num_agents();
    let mut state = start;
    let mut history = JointHistory::new(n);
    let mut rewards = Vec::new();
    let mut steps = vec![StepRecord {
        observations: initial_obs,
        available: (0..n).map(|i| model.available_actions(&state, i)).collect(),
    }];
    let mut terminated = model.is_terminal(&state);
    while !terminated && rewards.len() < model.horizon() {
        let action = policy(steps.last().unwrap(), rng);
        let tr = model.step(&state, &action, rng)?;
        history.push(&action, &tr.observations)?;
        rewards.push(tr.reward);
        state = tr.next_state;
        terminated = model.is_terminal(&state);
        steps.push(StepRecord {
            observations: tr.observations,
            available: (0..n).map(|i| model.available_actions(&state, i)).collect(),
        });
    }
    let returns = discounted_return(&rewards, model.discount());
    Ok(EpisodeTrace {
        history,
        steps,
        rewards,
        returns,
        embeddings: None,
        state_features: None,
        terminated,
        win: terminated && model.is_win(&state),
    })
}

/// Resets the model and rolls out one episode.
pub fn rollout<M, P>(model: &M, policy: P, rng: &mut RngStream) -> Result<EpisodeTrace<M::Obs>, ModelError>
where
    M: DecPomdp,
    P: FnMut(&StepRecord<M::Obs>, &mut RngStream) -> Vec<usize>,
{
    let (s0, z0) = model.reset(rng)?;
    rollout_from(model, s0, z0, policy, rng)
}
