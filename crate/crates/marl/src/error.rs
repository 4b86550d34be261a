use aerial_core::ModelError;
use aerial_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarlError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training batch is empty")]
    EmptyBatch,
    #[error("loss became non-finite at train step {0}")]
    Diverged(usize),
}
