//! Cooperative multi-agent value learning with a monotone mixer.
//!
//! Agents share one recurrent network (observation, previous action and
//! agent id in; per-action utilities out) and act greedily on their own
//! utilities. A monotone mixer combines the chosen utilities into `Q_tot`
//! during training only; what conditions the mixer is the
//! [`VariantKind`]: a pooled attention embedding of the detached agent
//! memories, the raw memories, the true state, or the raw joint history
//! plus the state.

pub mod batch;
pub mod buffer;
pub mod config;
pub mod error;
pub mod learner;
pub mod probe;
pub mod rollout;
pub mod variant;

pub use batch::{agent_inputs, Batch, EncodedEpisode, EnvDims};
pub use buffer::ReplayBuffer;
pub use config::{NetConfig, TrainConfig};
pub use error::MarlError;
pub use learner::{epsilon_greedy, masked_argmax, AgentNet, Learner, TdLoss};
pub use probe::StateProbe;
pub use rollout::{
    evaluate, mean_ci, run_episode, train, train_with, EvalPoint, EvalResult, RunStreams, TrainOutcome,
};
pub use variant::VariantKind;
