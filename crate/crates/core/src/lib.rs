//! Scent-driven, memory-bounded navigation in hierarchical information
//! architectures.
//!
//! The crate is organised bottom-up:
//!
//! * [`layout`] and [`conditions`]: hierarchical menus, benchmark layouts,
//!   true scent and action-path distances.
//! * [`memory`]: decaying memory traces, the retrieval threshold and the
//!   global-memory panel.
//! * [`env`]: the partially observable navigation environment.
//! * [`agent`]: masked policy network, policy-gradient training and evaluation.
//! * [`metrics`]: per-episode behavioural metrics and group statistics.
//! * [`experiments`]: benchmark studies, ablations, sweeps, sensitivity and
//!   calibration.

pub mod agent;
pub mod conditions;
pub mod embedding;
pub mod env;
pub mod experiments;
pub mod layout;
pub mod memory;
pub mod metrics;
pub mod rng;

pub use agent::{Policy, PolicySpec, TrainConfig};
pub use conditions::{ConditionKind, ConditionSpec, GeneratorConfig};
pub use env::{Action, Env, EnvConfig, EpisodeLog, Observation, StepOutcome};
pub use layout::{Focus, Layout, Node, NodeId};
pub use memory::{MemoryParams, MemoryStore, MemoryTrace};
pub use metrics::MetricRecord;
