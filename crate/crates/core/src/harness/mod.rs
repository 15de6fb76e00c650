//! Closed-loop scenarios, metrics and controller comparisons.

mod compare;
mod metrics;
mod run;
mod scenario;

pub use compare::{compare, ComparisonReport, ComparisonRow, RunStatus};
pub use metrics::{compute_metrics, ise, settling_time, MetricsOptions, MetricsReport, Settling};
pub use run::{run_scenario, Trace, TraceRecord, TRACE_HEADER};
pub use scenario::{Axis, ControllerSpec, Reference, ScenarioConfig};

use thiserror::Error;

use crate::model::ModelError;
use crate::mpc::MpcError;
use crate::sliding::GainsError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gains(#[from] GainsError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error("run diverged at step {step}")]
    Diverged { step: usize, last: Option<TraceRecord> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
