//! Learning stack for the block-bridge designer: a small tensor autodiff
//! core, the shared attention encoder with factored actor, critic, and
//! inverse-dynamics heads, the prioritized reset store, and the phasic
//! policy gradient training loop.

pub mod checkpoint;
pub mod config;
pub mod dist;
pub mod gae;
pub mod gradcheck;
pub mod graph;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod pmr;
pub mod tensor;
pub mod trainer;

pub use config::{Executor, PriorityMetric, TrainConfig, Variant};
pub use dist::ActionDistribution;
pub use metrics::{IterationMetrics, METRICS_CSV_HEADER};
pub use nn::{Adam, NetConfig, Params};
pub use pmr::{choose_reset, compute_priority, PriorityEntry, ResetStore};
pub use tensor::Tensor;
pub use trainer::{
    evaluate, finetune, policy_dist, rollout_episode, train, value_of, EpisodeTrace,
    EvalExecutor, FinetuneOutput, Trainer, TrainOutput,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] bridge_sim::SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("non-finite loss in the {phase} phase at iteration {iter}")]
    NonFinite { phase: &'static str, iter: u32 },
}
