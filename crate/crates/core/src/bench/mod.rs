//! Benchmark harness: metrics, the paired planner suite, the guidance and
//! bimanual studies, scenario files, and text exports.

pub mod io;
mod metrics;
pub mod scenario;
mod study;
mod suite;

pub use metrics::{compute_metrics, MetricsRecord};
pub use study::{
    run_bimanual_study, run_guidance_study, BimanualStudyConfig, BimanualStudyReport, GuidanceConfig, GuidanceReport,
    MethodRun, PostureReport,
};
pub use suite::{
    run_table1_suite, CaseKind, CaseRecord, PlannerKind, SuiteConfig, SuiteReport, SuiteSummary, TimingSummary,
};

use thiserror::Error;

use crate::execution::ExecError;
use crate::field::FieldError;
use crate::kinematics::KinematicsError;
use crate::planner::PlanError;
use crate::target::TargetError;
use crate::trajectory::TrajectoryError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("line {line}: {field}: {message}")]
    Parse { line: usize, field: String, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("trajectory has no samples")]
    EmptyTrajectory,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

pub type Result<T> = std::result::Result<T, BenchError>;
