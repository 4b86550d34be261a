use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("impossible observation: evidence probability is zero")]
    ImpossibleObservation,

    #[error("episode ended: state is terminal")]
    EpisodeEnded,

    #[error("invalid action {action} for agent {agent} (has {num_actions} actions)")]
    InvalidAction {
        agent: usize,
        action: usize,
        num_actions: usize,
    },

    #[error("joint action has {got} entries, model has {expected} agents")]
    JointArity { expected: usize, got: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("degenerate warm-up: {0} consecutive warm-ups ended in a terminal state")]
    DegenerateWarmup(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
