//! Masked actor-critic policy, REINFORCE-with-baseline training and
//! evaluation rollouts.

mod adam;
mod checkpoint;
mod policy;
mod train;

use thiserror::Error;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, read_curve_csv, save_checkpoint, write_curve_csv, Checkpoint};
pub use policy::{masked_softmax, sample_index, Activation, LossWeights, Policy, PolicySpec, Sample};
pub use train::{
    discounted_returns, evaluate, gae, rollout, train, CurvePoint, Rollout, TrainConfig, TrainOutcome,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("no legal action in the mask")]
    NoLegalAction,
    #[error("training diverged at update {update}: non-finite {what}")]
    DivergenceDetected { update: usize, what: &'static str },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
}
