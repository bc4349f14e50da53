//! Trajectory generators: field descent, goal-directed field planning, the
//! coupled two-arm planner, a grid search over the task-space field, and a
//! minimum-jerk point-to-point profile.

mod baseline;
mod bimanual;
mod csef;
mod min_jerk;

pub use baseline::{plan_tsef_baseline, BaselineOptions, FailureReason, NODE_BUDGET};
pub use bimanual::plan_bimanual;
pub use csef::{plan_csef_descent, plan_csef_to_goal};
pub use min_jerk::{min_jerk_profile, plan_min_jerk};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{ErgoSpec, FieldError};
use crate::kinematics::KinematicChain;
use crate::target::TargetError;
use crate::trajectory::{Trajectory, TrajectoryError};

/// Time between consecutive planner samples, seconds.
pub const PLAN_DT: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("invalid planner parameters: {0}")]
    InvalidParams(String),
    #[error("{what} lies outside the joint limits")]
    OutsideLimits { what: &'static str },
    #[error("{what}: expected dimension {expected}, got {found}")]
    Dimension { what: &'static str, expected: usize, found: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

pub type Result<T> = std::result::Result<T, PlanError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    pub step_size: f64,
    pub goal_weight: f64,
    pub ergo_weight: f64,
    pub perturb_scale: f64,
    pub max_steps: usize,
    pub goal_tol: f64,
    pub rng_seed: u64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            step_size: 0.01,
            goal_weight: 1.0,
            ergo_weight: 0.5,
            perturb_scale: 0.02,
            max_steps: 5000,
            goal_tol: 0.01,
            rng_seed: 0,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PlanError::InvalidParams(m));
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return bad(format!("step_size must be positive, got {}", self.step_size));
        }
        if self.max_steps < 1 {
            return bad("max_steps must be at least 1".into());
        }
        for (name, v) in [
            ("goal_weight", self.goal_weight),
            ("ergo_weight", self.ergo_weight),
            ("perturb_scale", self.perturb_scale),
            ("goal_tol", self.goal_tol),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(self.goal_weight + self.ergo_weight > 0.0) {
            return bad("goal_weight + ergo_weight must be positive".into());
        }
        Ok(())
    }

    /// Largest per-joint change between consecutive samples.
    pub fn step_bound(&self) -> f64 {
        self.step_size * (1.0 + self.perturb_scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Success,
    MaxStepsExceeded,
    Infeasible,
}

impl PlanStatus {
    pub fn name(self) -> &'static str {
        match self {
            PlanStatus::Success => "success",
            PlanStatus::MaxStepsExceeded => "max_steps_exceeded",
            PlanStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub trajectory: Trajectory,
    pub status: PlanStatus,
    /// Set by planners that distinguish why a plan failed.
    pub failure: Option<FailureReason>,
    pub wall_time: f64,
}

impl PlanResult {
    pub fn succeeded(&self) -> bool {
        self.status == PlanStatus::Success
    }
}

pub(crate) fn check_config(spec: &ErgoSpec, q: &DVector<f64>, what: &'static str) -> Result<()> {
    if q.len() != spec.dim() {
        return Err(PlanError::Dimension { what, expected: spec.dim(), found: q.len() });
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(PlanError::InvalidParams(format!("{what} is not finite")));
    }
    if !spec.limits().contains(q, 0.0) {
        return Err(PlanError::OutsideLimits { what });
    }
    Ok(())
}

pub(crate) fn check_chain(spec: &ErgoSpec, chain: &KinematicChain) -> Result<()> {
    if chain.dof() != spec.dim() {
        return Err(PlanError::Dimension { what: "chain", expected: spec.dim(), found: chain.dof() });
    }
    Ok(())
}

/// Draws a perturbation uniform in `[-scale, scale]` per joint.
pub(crate) fn perturbation<R: rand::Rng>(rng: &mut R, n: usize, scale: f64) -> DVector<f64> {
    if scale == 0.0 {
        return DVector::zeros(n);
    }
    DVector::from_iterator(n, (0..n).map(|_| rng.gen_range(-scale..=scale)))
}

/// Moving-window stall detector on a scalar progress measure.
pub(crate) struct StallWindow {
    history: Vec<f64>,
}

pub(crate) const STALL_WINDOW: usize = 10;
pub(crate) const STALL_THRESHOLD: f64 = 1e-4;

impl StallWindow {
    pub(crate) fn new() -> Self {
        Self { history: Vec::new() }
    }

    /// Records the current distance and reports whether the decrease over
    /// the last window fell below the threshold.
    pub(crate) fn stalled(&mut self, distance: f64) -> bool {
        self.history.push(distance);
        let n = self.history.len();
        n > STALL_WINDOW && self.history[n - 1 - STALL_WINDOW] - distance < STALL_THRESHOLD
    }
}

/// Per-joint largest difference between consecutive samples.
pub fn max_joint_step(traj: &Trajectory) -> f64 {
    traj.points().windows(2).map(|w| (&w[1] - &w[0]).amax()).fold(0.0, f64::max)
}
