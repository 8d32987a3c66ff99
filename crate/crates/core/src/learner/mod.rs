//! Off-policy deterministic actor-critic over the grasping environment.

pub mod checkpoint;
pub mod ddpg;
pub mod gradcheck;
pub mod net;
pub mod replay;
pub mod train;

use std::path::Path;

use thiserror::Error;

use crate::sim_env::EnvError;

pub use checkpoint::{Checkpoint, TensorRecord};
pub use ddpg::{add_exploration_noise, bellman_target, phase_index, Agent, CriticStep};
pub use net::{Activation, Network, NetworkSpec};
pub use replay::ReplayBuffer;
pub use train::{
    evaluate, format_curve, train, AgentPolicy, CurvePoint, EvalReport, InitScheme, TrainConfig, TrainOutcome,
    CURVE_HEADER,
};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training fault at step {step}: {msg}")]
    Fault { step: usize, msg: String },
    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl LearnError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Turns numeric faults into training faults tagged with `step`.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            LearnError::Fault { msg, .. } => LearnError::Fault { step, msg },
            LearnError::Domain(msg) => LearnError::Fault { step, msg },
            other => other,
        }
    }
}
