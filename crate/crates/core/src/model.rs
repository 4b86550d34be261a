//! Dec-POMDP interfaces.
//!
//! [`DecPomdp`] is the generative interface every environment implements:
//! sample an initial state, step it, and encode what each agent perceives.
//! [`Enumerable`] adds explicit transition, observation and reward tables and
//! is required by the exact solvers.

use std::fmt::Debug;

use crate::belief::Belief;
use crate::error::ModelError;
use crate::rng::RngStream;

/// Observation symbol of a discrete model. `Null` is the uninformative
/// observation emitted before the first action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiscreteObs {
    Null,
    Symbol(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S, O> {
    pub next_state: S,
    pub observations: Vec<O>,
    pub reward: f64,
}

pub trait DecPomdp {
    type State: Clone + Debug + PartialEq;
    type Obs: Clone + Debug + PartialEq;

    fn num_agents(&self) -> usize;
    fn num_actions(&self, agent: usize) -> usize;
    fn horizon(&self) -> usize;
    fn discount(&self) -> f64;

    /// Draws `s_0 ~ b_0`.
    fn sample_initial_state(&self, rng: &mut RngStream) -> Self::State;

    /// Observations emitted when an episode starts in `state`.
    fn initial_observations(&self, state: &Self::State, rng: &mut RngStream) -> Vec<Self::Obs>;

    /// Starts an episode: `s_0 ~ b_0` plus the observations emitted at the start.
    fn reset(&self, rng: &mut RngStream) -> Result<(Self::State, Vec<Self::Obs>), ModelError> {
        let s0 = self.sample_initial_state(rng);
        let z0 = self.initial_observations(&s0, rng);
        Ok((s0, z0))
    }

    /// Samples one transition from a non-terminal state with a valid joint action.
    fn sample_transition(
        &self,
        state: &Self::State,
        action: &[usize],
        rng: &mut RngStream,
    ) -> Transition<Self::State, Self::Obs>;

    fn is_terminal(&self, state: &Self::State) -> bool;

    /// Length of the per-agent observation feature vector.
    fn obs_dim(&self) -> usize;

    fn encode_obs(&self, obs: &Self::Obs) -> Vec<f64>;

    /// The corrupted version of an observation: elementwise negation for
    /// real-valued observations, a symbol flip for discrete ones.
    fn negate_obs(&self, obs: &Self::Obs) -> Self::Obs;

    /// Per-scalar corruption: each measured value is negated independently
    /// with probability `phi`. Discrete observations have no scalar parts and
    /// fall back to a single whole-observation draw.
    fn negate_obs_elementwise(&self, obs: &Self::Obs, phi: f64, rng: &mut RngStream) -> Self::Obs {
        if rng.bernoulli(phi) {
            self.negate_obs(obs)
        } else {
            obs.clone()
        }
    }

    /// Length of the true-state feature vector.
    fn state_dim(&self) -> usize;

    /// True-state features used by state-conditioned value functions.
    fn state_features(&self, state: &Self::State) -> Vec<f64>;

    fn available_actions(&self, _state: &Self::State, agent: usize) -> Vec<bool> {
        vec![true; self.num_actions(agent)]
    }

    /// Whether a terminal state counts as a win. Only meaningful for battle
    /// environments.
    fn is_win(&self, _state: &Self::State) -> bool {
        false
    }

    /// Checked transition: rejects terminal states and malformed joint actions.
    fn step(
        &self,
        state: &Self::State,
        action: &[usize],
        rng: &mut RngStream,
    ) -> Result<Transition<Self::State, Self::Obs>, ModelError> {
        if self.is_terminal(state) {
            return Err(ModelError::EpisodeEnded);
        }
        validate_joint_action(self, action)?;
        Ok(self.sample_transition(state, action, rng))
    }
}

pub(crate) fn validate_joint_action<M: DecPomdp + ?Sized>(
    model: &M,
    action: &[usize],
) -> Result<(), ModelError> {
    if action.len() != model.num_agents() {
        return Err(ModelError::JointArity {
            expected: model.num_agents(),
            got: action.len(),
        });
    }
    for (agent, &a) in action.iter().enumerate() {
        let n = model.num_actions(agent);
        if a >= n {
            return Err(ModelError::InvalidAction {
                agent,
                action: a,
                num_actions: n,
            });
        }
    }
    Ok(())
}

/// Explicit tables of a finite Dec-POMDP. States are indexed `0..num_states`
/// and observations of agent `i` are indexed `0..num_observations(i)`.
pub trait Enumerable: DecPomdp<State = usize, Obs = DiscreteObs> {
    fn num_states(&self) -> usize;
    fn num_observations(&self, agent: usize) -> usize;

    /// `T(s' | s, a)` for every `s'`.
    fn transition_probs(&self, state: usize, action: &[usize]) -> Vec<f64>;

    /// `Ω(z | a, s')` for a joint observation `z`.
    fn observation_prob(&self, action: &[usize], next_state: usize, obs: &[usize]) -> f64;

    fn reward(&self, state: usize, action: &[usize]) -> f64;

    fn initial_belief(&self) -> Belief;

    fn num_joint_actions(&self) -> usize {
        (0..self.num_agents()).map(|i| self.num_actions(i)).product()
    }

    fn num_joint_observations(&self) -> usize {
        (0..self.num_agents())
            .map(|i| self.num_observations(i))
            .product()
    }

    fn action_radices(&self) -> Vec<usize> {
        (0..self.num_agents()).map(|i| self.num_actions(i)).collect()
    }

    fn observation_radices(&self) -> Vec<usize> {
        (0..self.num_agents())
            .map(|i| self.num_observations(i))
            .collect()
    }
}

/// Mixed-radix index with the first component most significant, so joint
/// actions enumerate as `<0,0>, <0,1>, ..., <1,0>, ...`.
pub fn encode_joint(components: &[usize], radices: &[usize]) -> usize {
    components
        .iter()
        .zip(radices)
        .fold(0, |acc, (&c, &r)| acc * r + c)
}

pub fn decode_joint(mut index: usize, radices: &[usize]) -> Vec<usize> {
    let mut out = vec![0; radices.len()];
    for (slot, &r) in out.iter_mut().zip(radices).rev() {
        *slot = index % r;
        index /= r;
    }
    out
}

/// Checks that every conditional distribution of an enumerable model sums to
/// one within `tol` and that all entries are non-negative.
pub fn check_distributions<M: Enumerable + ?Sized>(model: &M, tol: f64) -> Result<(), ModelError> {
    let n_states = model.num_states();
    let a_rad = model.action_radices();
    let z_rad = model.observation_radices();
    let b0 = model.initial_belief();
    let total: f64 = b0.probs().iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(ModelError::InvalidDistribution(format!(
            "initial belief sums to {total}"
        )));
    }
    for ja in 0..model.num_joint_actions() {
        let a = decode_joint(ja, &a_rad);
        for s in 0..n_states {
            let t = model.transition_probs(s, &a);
            let sum: f64 = t.iter().sum();
            if t.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > tol {
                return Err(ModelError::InvalidDistribution(format!(
                    "T(.|s={s}, a={a:?}) sums to {sum}"
                )));
            }
            let mut osum = 0.0;
            for jz in 0..model.num_joint_observations() {
                let z = decode_joint(jz, &z_rad);
                let p = model.observation_prob(&a, s, &z);
                if p < 0.0 {
                    return Err(ModelError::InvalidDistribution(format!(
                        "negative Ω(z={z:?} | a={a:?}, s'={s})"
                    )));
                }
                osum += p;
            }
            if (osum - 1.0).abs() > tol {
                return Err(ModelError::InvalidDistribution(format!(
                    "Ω(. | a={a:?}, s'={s}) sums to {osum}"
                )));
            }
            if !model.reward(s, &a).is_finite() {
                return Err(ModelError::InvalidDistribution(format!(
                    "R(s={s}, a={a:?}) undefined"
                )));
            }
        }
    }
    Ok(())
}
