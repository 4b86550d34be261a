//! Dec-Tiger.
//!
//! Two agents face two doors; a tiger hides behind one. Listening costs 1 per
//! agent and reports the tiger's side correctly with probability 0.85,
//! independently per agent. Opening doors ends the current "round": in the
//! classical [`DecTigerVariant::ResetOnOpen`] dynamics the tiger is re-placed
//! uniformly and play continues, in [`DecTigerVariant::TerminateOnOpen`] the
//! episode moves to an absorbing terminal state.

use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::error::ModelError;
use crate::model::{DecPomdp, DiscreteObs, Enumerable, Transition};
use crate::rng::RngStream;

pub const S_L: usize = 0;
pub const S_R: usize = 1;
/// Absorbing state of the terminating variant.
pub const S_DONE: usize = 2;

pub const LISTEN: usize = 0;
pub const OPEN_LEFT: usize = 1;
pub const OPEN_RIGHT: usize = 2;

pub const Z_L: usize = 0;
pub const Z_R: usize = 1;

pub const LISTEN_ACCURACY: f64 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecTigerVariant {
    #[default]
    ResetOnOpen,
    TerminateOnOpen,
}

#[derive(Debug, Clone)]
pub struct DecTiger {
    variant: DecTigerVariant,
    horizon: usize,
    discount: f64,
}

pub fn dectiger_model(
    variant: DecTigerVariant,
    horizon: usize,
    discount: f64,
) -> Result<DecTiger, ModelError> {
    if horizon == 0 {
        return Err(ModelError::InvalidConfig("horizon must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&discount) {
        return Err(ModelError::InvalidConfig(format!(
            "discount {discount} outside [0, 1]"
        )));
    }
    Ok(DecTiger {
        variant,
        horizon,
        discount,
    })
}

impl DecTiger {
    pub fn variant(&self) -> DecTigerVariant {
        self.variant
    }

    fn tiger_door(state: usize) -> usize {
        if state == S_L {
            OPEN_LEFT
        } else {
            OPEN_RIGHT
        }
    }
}

impl DecPomdp for DecTiger {
    type State = usize;
    type Obs = DiscreteObs;

    fn num_agents(&self) -> usize {
        2
    }

    fn num_actions(&self, _agent: usize) -> usize {
        3
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn sample_initial_state(&self, rng: &mut RngStream) -> usize {
        rng.below(2)
    }

    fn initial_observations(&self, _state: &usize, _rng: &mut RngStream) -> Vec<DiscreteObs> {
        vec![DiscreteObs::Null; 2]
    }

    fn sample_transition(
        &self,
        state: &usize,
        action: &[usize],
        rng: &mut RngStream,
    ) -> Transition<usize, DiscreteObs> {
        let next_state = rng.categorical(&self.transition_probs(*state, action));
        let observations = (0..2)
            .map(|i| {
                let p_left = self.agent_obs_prob(action, next_state, i, Z_L);
                if rng.uniform() < p_left {
                    DiscreteObs::Symbol(Z_L)
                } else {
                    DiscreteObs::Symbol(Z_R)
                }
            })
            .collect();
        Transition {
            next_state,
            observations,
            reward: self.reward(*state, action),
        }
    }

    fn is_terminal(&self, state: &usize) -> bool {
        *state == S_DONE
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn encode_obs(&self, obs: &DiscreteObs) -> Vec<f64> {
        match obs {
            DiscreteObs::Null => vec![0.0, 0.0],
            DiscreteObs::Symbol(z) => {
                let mut v = vec![0.0, 0.0];
                v[*z] = 1.0;
                v
            }
        }
    }

    fn negate_obs(&self, obs: &DiscreteObs) -> DiscreteObs {
        match obs {
            DiscreteObs::Null => DiscreteObs::Null,
            DiscreteObs::Symbol(z) => DiscreteObs::Symbol(1 - z),
        }
    }

    fn state_dim(&self) -> usize {
        self.num_states()
    }

    fn state_features(&self, state: &usize) -> Vec<f64> {
        let mut v = vec![0.0; self.num_states()];
        v[*state] = 1.0;
        v
    }
}

impl DecTiger {
    /// Marginal probability that agent `agent` hears `z`; agents are independent given `s'`.
    fn agent_obs_prob(&self, action: &[usize], next_state: usize, _agent: usize, z: usize) -> f64 {
        let both_listen = action.iter().all(|&a| a == LISTEN);
        if !both_listen || next_state == S_DONE {
            return 0.5;
        }
        let correct = if next_state == S_L { Z_L } else { Z_R };
        if z == correct {
            LISTEN_ACCURACY
        } else {
            1.0 - LISTEN_ACCURACY
        }
    }
}

impl Enumerable for DecTiger {
    fn num_states(&self) -> usize {
        match self.variant {
            DecTigerVariant::ResetOnOpen => 2,
            DecTigerVariant::TerminateOnOpen => 3,
        }
    }

    fn num_observations(&self, _agent: usize) -> usize {
        2
    }

    fn transition_probs(&self, state: usize, action: &[usize]) -> Vec<f64> {
        let mut t = vec![0.0; self.num_states()];
        if state == S_DONE {
            t[S_DONE] = 1.0;
            return t;
        }
        let any_open = action.iter().any(|&a| a != LISTEN);
        match (any_open, self.variant) {
            (false, _) => t[state] = 1.0,
            (true, DecTigerVariant::ResetOnOpen) => {
                t[S_L] = 0.5;
                t[S_R] = 0.5;
            }
            (true, DecTigerVariant::TerminateOnOpen) => t[S_DONE] = 1.0,
        }
        t
    }

    fn observation_prob(&self, action: &[usize], next_state: usize, obs: &[usize]) -> f64 {
        obs.iter()
            .enumerate()
            .map(|(i, &z)| self.agent_obs_prob(action, next_state, i, z))
            .product()
    }

    fn reward(&self, state: usize, action: &[usize]) -> f64 {
        if state == S_DONE {
            return 0.0;
        }
        let tiger = Self::tiger_door(state);
        match (action[0], action[1]) {
            (LISTEN, LISTEN) => -2.0,
            (LISTEN, door) | (door, LISTEN) => {
                if door == tiger {
                    -101.0
                } else {
                    9.0
                }
            }
            (d1, d2) if d1 == d2 => {
                if d1 == tiger {
                    -50.0
                } else {
                    20.0
                }
            }
            _ => -100.0,
        }
    }

    fn initial_belief(&self) -> Belief {
        let mut p = vec![0.5, 0.5];
        if self.variant == DecTigerVariant::TerminateOnOpen {
            p.push(0.0);
        }
        Belief::new(p).expect("uniform prior")
    }
}
