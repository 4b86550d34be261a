//! Exact solvers for enumerable Dec-POMDPs.

mod brute;
mod maa;
mod policy;
mod qmdp;
mod recurrence;
mod tables;
mod value;

use thiserror::Error;

pub use brute::{brute_force_optimal, enumeration_size, ENUMERATION_BUDGET};
pub use maa::{maa_star, maa_star_with, Heuristic, MaaOptions, MaaStats, SearchNode};
pub use policy::{tree_size, PolicyTree};
pub use qmdp::{mdp_policy, q_mdp, QMdpTable};
pub use recurrence::{
    belief_from_history, forward_message, individual_recurrence, joint_recurrence,
    policy_histories,
};
pub use tables::Tables;
pub use value::{policy_value, q_under_policy};

use crate::error::ModelError;

#[derive(Debug, Clone, Error)]
pub enum SolverError {
    #[error("enumeration budget exceeded: {required:.3e} joint policies > {budget:.0e}")]
    EnumerationBudgetExceeded { required: f64, budget: f64 },
    #[error("node budget exceeded after {expanded} expansions (incumbent value: {})",
        incumbent.as_ref().map_or("none".to_string(), |(_, v)| format!("{v}")))]
    NodeBudgetExceeded {
        expanded: usize,
        incumbent: Option<(PolicyTree, f64)>,
    },
    #[error("heuristic table too large: {0} entries")]
    HeuristicTooLarge(usize),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error(transparent)]
    Model(#[from] ModelError),
}
