//! Benchmark studies, ablations, sweeps, sensitivity analysis and
//! parameter calibration.

use thiserror::Error;

mod ablation;
mod agreement;
mod calibrate;
mod config;
mod report;
mod sensitivity;
mod study;
mod sweep;

pub use ablation::{
    run_component_ablation, run_gamma_ablation, ComponentAblation, GammaAblation, GammaRow,
    Variant, VariantRow, RADAR_METRICS,
};
pub use agreement::{
    agreement_scores, difficulty_delta_change, AgreementScores, EffectSummary, ReferenceTrends,
};
pub use calibrate::{calibrate, param_space, Calibration, ParamDim, Trial};
pub use config::{ExperimentConfig, SearchMode, StudyConfig};
pub use report::{
    compare, comparison_pairs, fmt_f64, metric_value, regenerate, write_bundle, CellEntry,
    ComparisonRow, Manifest, Report, ResultRow, Table, METRICS,
};
pub use sensitivity::{aggregate_sensitivity, run_sensitivity, Sensitivity, SensitivityRow};
pub use study::{par_map, Cell, Lab, TrainedPolicy};
pub use sweep::{run_parameter_sweeps, SweepRow, Sweeps};

use crate::agent::AgentError;
use crate::conditions::GenerateError;
use crate::env::EnvError;
use crate::layout::LayoutError;
use crate::metrics::MetricsError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing condition: {0}")]
    MissingCondition(String),
    #[error("cannot parse stored data: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Env(#[from] EnvError),
}
