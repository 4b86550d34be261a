//! Observation and initialization stochasticity on top of any model.
//!
//! * Observation stochasticity: every emitted observation is negated with
//!   probability `phi`, one Bernoulli draw per agent and step.
//! * Initialization stochasticity: before the episode officially starts, `K`
//!   uniformly random joint actions are executed. Warm-up steps are not part
//!   of the episode (no rewards, no horizon consumption).

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{DecPomdp, Transition};
use crate::rng::RngStream;

pub const MAX_WARMUP_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NegationMode {
    /// One draw per agent observation, flipping the whole vector.
    #[default]
    WholeObservation,
    /// One draw per scalar.
    PerScalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MessyConfig {
    pub phi: f64,
    pub k_init: usize,
    pub negation: NegationMode,
}

impl Default for MessyConfig {
    fn default() -> Self {
        Self {
            phi: 0.15,
            k_init: 10,
            negation: NegationMode::WholeObservation,
        }
    }
}

impl MessyConfig {
    pub fn new(phi: f64, k_init: usize) -> Result<Self, ModelError> {
        let cfg = Self {
            phi,
            k_init,
            negation: NegationMode::WholeObservation,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Configuration that leaves the base model untouched.
    pub fn identity() -> Self {
        Self {
            phi: 0.0,
            k_init: 0,
            negation: NegationMode::WholeObservation,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..1.0).contains(&self.phi) {
            return Err(ModelError::InvalidConfig(format!(
                "phi = {} outside [0, 1)",
                self.phi
            )));
        }
        Ok(())
    }
}

/// Elementwise negation. `0.0 - v` keeps zeros as `+0.0`.
pub fn negate(obs: &[f64]) -> Vec<f64> {
    obs.iter().map(|&v| 0.0 - v).collect()
}

/// Returns the negated vector with probability `phi`, else the input.
pub fn messy_observe(obs: &[f64], phi: f64, rng: &mut RngStream) -> Vec<f64> {
    if rng.bernoulli(phi) {
        negate(obs)
    } else {
        obs.to_vec()
    }
}

/// Samples `s_0 ~ b_0` and executes `k_init` uniformly random joint actions.
/// Warm-ups that hit a terminal state are restarted from a fresh `s_0`.
pub fn messy_init<M: DecPomdp + ?Sized>(
    model: &M,
    k_init: usize,
    rng: &mut RngStream,
) -> Result<(M::State, Vec<M::Obs>), ModelError> {
    let n = model.num_agents();
    for _ in 0..MAX_WARMUP_RETRIES {
        let (mut state, mut obs) = model.reset(rng)?;
        let mut ok = true;
        for _ in 0..k_init {
            if model.is_terminal(&state) {
                ok = false;
                break;
            }
            let action: Vec<usize> = (0..n).map(|i| rng.below(model.num_actions(i))).collect();
            let tr = model.step(&state, &action, rng)?;
            state = tr.next_state;
            obs = tr.observations;
        }
        if ok && !model.is_terminal(&state) {
            return Ok((state, obs));
        }
    }
    Err(ModelError::DegenerateWarmup(MAX_WARMUP_RETRIES))
}

#[derive(Debug, Clone)]
pub struct Messy<M> {
    base: M,
    cfg: MessyConfig,
}

pub fn messy_wrap<M: DecPomdp>(model: M, cfg: MessyConfig) -> Result<Messy<M>, ModelError> {
    cfg.validate()?;
    Ok(Messy { base: model, cfg })
}

impl<M: DecPomdp> Messy<M> {
    pub fn base(&self) -> &M {
        &self.base
    }

    pub fn config(&self) -> &MessyConfig {
        &self.cfg
    }

    fn corrupt(&self, obs: Vec<M::Obs>, rng: &mut RngStream) -> Vec<M::Obs> {
        // No draws at phi = 0, so the identity wrapper replays base traces exactly.
        if self.cfg.phi == 0.0 {
            return obs;
        }
        obs.iter()
            .map(|o| match self.cfg.negation {
                NegationMode::WholeObservation => {
                    if rng.bernoulli(self.cfg.phi) {
                        self.base.negate_obs(o)
                    } else {
                        o.clone()
                    }
                }
                NegationMode::PerScalar => self.base.negate_obs_elementwise(o, self.cfg.phi, rng),
            })
            .collect()
    }
}

impl<M: DecPomdp> DecPomdp for Messy<M> {
    type State = M::State;
    type Obs = M::Obs;

    fn num_agents(&self) -> usize {
        self.base.num_agents()
    }

    fn num_actions(&self, agent: usize) -> usize {
        self.base.num_actions(agent)
    }

    fn horizon(&self) -> usize {
        self.base.horizon()
    }

    fn discount(&self) -> f64 {
        self.base.discount()
    }

    fn sample_initial_state(&self, rng: &mut RngStream) -> M::State {
        self.base.sample_initial_state(rng)
    }

    fn initial_observations(&self, state: &M::State, rng: &mut RngStream) -> Vec<M::Obs> {
        let z = self.base.initial_observations(state, rng);
        self.corrupt(z, rng)
    }

    fn reset(&self, rng: &mut RngStream) -> Result<(M::State, Vec<M::Obs>), ModelError> {
        let (s, z) = messy_init(&self.base, self.cfg.k_init, rng)?;
        Ok((s, self.corrupt(z, rng)))
    }

    fn sample_transition(
        &self,
        state: &M::State,
        action: &[usize],
        rng: &mut RngStream,
    ) -> Transition<M::State, M::Obs> {
        let mut tr = self.base.sample_transition(state, action, rng);
        tr.observations = self.corrupt(tr.observations, rng);
        tr
    }

    fn is_terminal(&self, state: &M::State) -> bool {
        self.base.is_terminal(state)
    }

    fn obs_dim(&self) -> usize {
        self.base.obs_dim()
    }

    fn encode_obs(&self, obs: &M::Obs) -> Vec<f64> {
        self.base.encode_obs(obs)
    }

    fn negate_obs(&self, obs: &M::Obs) -> M::Obs {
        self.base.negate_obs(obs)
    }

    fn state_dim(&self) -> usize {
        self.base.state_dim()
    }

    fn state_features(&self, state: &M::State) -> Vec<f64> {
        self.base.state_features(state)
    }

    fn available_actions(&self, state: &M::State, agent: usize) -> Vec<bool> {
        self.base.available_actions(state, agent)
    }

    fn is_win(&self, state: &M::State) -> bool {
        self.base.is_win(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::battle::{battle_model, MessyBattleConfig};
    use crate::env::dectiger::{dectiger_model, DecTigerVariant, LISTEN, S_L};
    use crate::episode::rollout;
    use crate::model::DiscreteObs;

    #[test]
    fn zero_phi_is_identity() {
        let mut rng = RngStream::new(9);
        let obs = [1.0, -3.5, 0.0];
        for _ in 0..100 {
            assert_eq!(messy_observe(&obs, 0.0, &mut rng), obs.to_vec());
        }
    }

    #[test]
    fn negation_flips_signs_and_keeps_zero() {
        // Find a seed whose first draw falls below 0.15.
        let seed = (0..1000u64)
            .find(|&s| RngStream::new(s).uniform() < 0.15)
            .unwrap();
        let mut rng = RngStream::new(seed);
        let out = messy_observe(&[1.0, -2.0, 0.0], 0.15, &mut rng);
        assert_eq!(out, vec![-1.0, 2.0, 0.0]);
        assert!(out[2].is_sign_positive());
    }

    #[test]
    fn double_negation_is_identity() {
        let v = vec![0.3, -1.0, 0.0, 7.0];
        assert_eq!(negate(&negate(&v)), v);
    }

    #[test]
    fn negation_frequency() {
        let mut rng = RngStream::new(2024);
        let n = 100_000;
        let flips = (0..n)
            .filter(|_| messy_observe(&[1.0], 0.15, &mut rng)[0] < 0.0)
            .count();
        let freq = flips as f64 / n as f64;
        assert!((freq - 0.15).abs() < 0.005, "{freq}");
    }

    #[test]
    fn phi_must_be_below_one() {
        assert!(MessyConfig::new(1.0, 0).is_err());
        assert!(MessyConfig::new(-0.1, 0).is_err());
        assert!(MessyConfig::new(0.15, 10).is_ok());
    }

    #[test]
    fn identity_wrapper_replays_base_traces() {
        let base = battle_model(MessyBattleConfig::default(), 0.99).unwrap();
        let wrapped = messy_wrap(base.clone(), MessyConfig::identity()).unwrap();
        for seed in 0..20 {
            let policy = |rec: &crate::episode::StepRecord<Vec<f64>>, rng: &mut RngStream| {
                rec.available
                    .iter()
                    .map(|m| {
                        let idx: Vec<usize> = (0..m.len()).filter(|&a| m[a]).collect();
                        idx[rng.below(idx.len())]
                    })
                    .collect::<Vec<_>>()
            };
            let a = rollout(&base, policy, &mut RngStream::new(seed)).unwrap();
            let b = rollout(&wrapped, policy, &mut RngStream::new(seed)).unwrap();
            assert_eq!(a.rewards, b.rewards);
            assert_eq!(a.history, b.history);
        }
    }

    #[test]
    fn dectiger_negation_flips_symbols() {
        let base = dectiger_model(DecTigerVariant::ResetOnOpen, 4, 1.0).unwrap();
        let m = messy_wrap(base.clone(), MessyConfig::new(0.5, 0).unwrap()).unwrap();
        let mut rng = RngStream::new(3);
        let mut flipped = 0;
        let n = 20_000;
        for _ in 0..n {
            // Under s_L the base sensor reports z_L with probability 0.85; the
            // channel mixes that to 0.85 (1 - φ) + 0.15 φ = 0.5 at φ = 0.5.
            let tr = m.step(&S_L, &[LISTEN, LISTEN], &mut rng).unwrap();
            if tr.observations[0] == DiscreteObs::Symbol(1) {
                flipped += 1;
            }
        }
        assert!((flipped as f64 / n as f64 - 0.5).abs() < 0.02);
        assert_eq!(m.negate_obs(&DiscreteObs::Symbol(0)), DiscreteObs::Symbol(1));
        assert_eq!(m.negate_obs(&DiscreteObs::Null), DiscreteObs::Null);
    }

    #[test]
    fn zero_warmup_matches_plain_reset() {
        let base = dectiger_model(DecTigerVariant::ResetOnOpen, 4, 1.0).unwrap();
        for seed in 0..50 {
            let a = base.reset(&mut RngStream::new(seed)).unwrap();
            let b = messy_init(&base, 0, &mut RngStream::new(seed)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn warmup_replays_seeded_random_actions() {
        let base = dectiger_model(DecTigerVariant::ResetOnOpen, 4, 1.0).unwrap();
        let seed = 77;
        let (state, _) = messy_init(&base, 3, &mut RngStream::new(seed)).unwrap();
        // Independent replay of the same draws.
        let mut rng = RngStream::new(seed);
        let mut s = base.sample_initial_state(&mut rng);
        let _ = base.initial_observations(&s, &mut rng);
        for _ in 0..3 {
            let a = vec![rng.below(3), rng.below(3)];
            s = base.sample_transition(&s, &a, &mut rng).next_state;
        }
        assert_eq!(state, s);
        let (again, _) = messy_init(&base, 3, &mut RngStream::new(seed)).unwrap();
        assert_eq!(state, again);
    }

    #[test]
    fn degenerate_warmup_errors() {
        let base = dectiger_model(DecTigerVariant::TerminateOnOpen, 4, 1.0).unwrap();
        // With 200 random steps some agent opens a door almost surely.
        let err = messy_init(&base, 200, &mut RngStream::new(0)).unwrap_err();
        assert_eq!(err, ModelError::DegenerateWarmup(MAX_WARMUP_RETRIES));
    }
}
