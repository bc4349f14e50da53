//! Robot-side execution: mapping human reference paths to end-effector
//! references, the task-space impedance model, and a simple human hand
//! follower used to close the loop in simulation.

mod follower;
mod frames;
mod impedance;

pub use follower::{simulate_human_follower, FollowerModel, FOLLOWER_IK_TOL, REACH_SLACK};
pub use frames::{
    bimanual_frames, build_bimanual_frame, embed_planar, map_bimanual_references, map_unimanual_reference,
    CouplingTransform, OrientationPolicy, Pose, PoseTrajectory, DEGENERACY_TOL,
};
pub use impedance::{impedance_energy, simulate_impedance, ForceInput, ImpedanceParams, ImpedanceRun};

use thiserror::Error;

use crate::trajectory::TrajectoryError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("sample {index}: degenerate frame ({reason})")]
    DegenerateFrame { index: usize, reason: &'static str },
    #[error("sample {index}: non-finite external force")]
    NonFiniteForce { index: usize },
    #[error("sample {index}: guidance point is outside the reachable workspace")]
    Unreachable { index: usize },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

pub type Result<T> = std::result::Result<T, ExecError>;
