//! Dec-POMDP modelling toolkit.
//!
//! The crate is split into three layers:
//!
//! * [`model`], [`belief`], [`history`], [`episode`] and [`rng`] define the
//!   shared abstractions: generative and enumerable Dec-POMDPs, Bayes
//!   filtering, joint histories, episode traces and reproducible random
//!   streams.
//! * [`env`] provides Dec-Tiger, the MessyBattle micro-combat environment and
//!   the `Messy` wrapper that adds observation negation and random warm-up.
//! * [`solver`] computes exact values on enumerable models: `Q_MDP`,
//!   history-conditioned `Q`, recurrence probabilities, brute-force policy
//!   enumeration and MAA* search.

pub mod belief;
pub mod env;
pub mod episode;
pub mod error;
pub mod history;
pub mod model;
pub mod rng;
pub mod solver;

pub use belief::{belief_update, Belief};
pub use episode::{discounted_return, rollout, EpisodeTrace, StepRecord};
pub use error::ModelError;
pub use history::{JointHistory, LocalStep};
pub use model::{
    decode_joint, encode_joint, DecPomdp, DiscreteObs, Enumerable, Transition,
};
pub use rng::RngStream;
