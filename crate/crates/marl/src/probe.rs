use std::sync::atomic::{AtomicUsize, Ordering};

use aerial_core::{DecPomdp, ModelError, RngStream, Transition};

/// Wraps a model and counts reads of the true state through
/// [`DecPomdp::state_features`].
#[derive(Debug)]
pub struct StateProbe<M> {
    inner: M,
    reads: AtomicUsize,
}

impl<M> StateProbe<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            reads: AtomicUsize::new(0),
        }
    }

    pub fn state_reads(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: DecPomdp> DecPomdp for StateProbe<M> {
    type State = M::State;
    type Obs = M::Obs;

    fn num_agents(&self) -> usize {
        self.inner.num_agents()
    }

    fn num_actions(&self, agent: usize) -> usize {
        self.inner.num_actions(agent)
    }

    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    fn discount(&self) -> f64 {
        self.inner.discount()
    }

    fn sample_initial_state(&self, rng: &mut RngStream) -> M::State {
        self.inner.sample_initial_state(rng)
    }

    fn initial_observations(&self, state: &M::State, rng: &mut RngStream) -> Vec<M::Obs> {
        self.inner.initial_observations(state, rng)
    }

    fn reset(&self, rng: &mut RngStream) -> Result<(M::State, Vec<M::Obs>), ModelError> {
        self.inner.reset(rng)
    }

    fn sample_transition(&self, state: &M::State, action: &[usize], rng: &mut RngStream) -> Transition<M::State, M::Obs> {
        self.inner.sample_transition(state, action, rng)
    }

    fn is_terminal(&self, state: &M::State) -> bool {
        self.inner.is_terminal(state)
    }

    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }

    fn encode_obs(&self, obs: &M::Obs) -> Vec<f64> {
        self.inner.encode_obs(obs)
    }

    fn negate_obs(&self, obs: &M::Obs) -> M::Obs {
        self.inner.negate_obs(obs)
    }

    fn negate_obs_elementwise(&self, obs: &M::Obs, phi: f64, rng: &mut RngStream) -> M::Obs {
        self.inner.negate_obs_elementwise(obs, phi, rng)
    }

    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn state_features(&self, state: &M::State) -> Vec<f64> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        self.inner.state_features(state)
    }

    fn available_actions(&self, state: &M::State, agent: usize) -> Vec<bool> {
        self.inner.available_actions(state, agent)
    }

    fn is_win(&self, state: &M::State) -> bool {
        self.inner.is_win(state)
    }

    fn step(&self, state: &M::State, action: &[usize], rng: &mut RngStream) -> Result<Transition<M::State, M::Obs>, ModelError> {
        self.inner.step(state, action, rng)
    }
}
