use serde::Serialize;

use super::{BenchError, Result};
use crate::field::ErgoSpec;
use crate::kinematics::KinematicChain;
use crate::trajectory::{Space, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub avg_csef: f64,
    pub max_csef: f64,
    pub cartesian_path_length: f64,
    pub joint_path_length: f64,
    pub compute_time: f64,
    pub success: bool,
}

/// Field statistics and path lengths of a joint trajectory.
pub fn compute_metrics(
    spec: &ErgoSpec,
    chain: &KinematicChain,
    traj: &Trajectory,
    wall_time: f64,
    success: bool,
) -> Result<MetricsRecord> {
    if traj.is_empty() {
        return Err(BenchError::EmptyTrajectory);
    }
    if traj.space() != Space::Joint || traj.dim() != spec.dim() || chain.dof() != spec.dim() {
        return Err(BenchError::Invalid(format!(
            "metrics need a {}-joint trajectory for a matching chain",
            spec.dim()
        )));
    }
    let values: Vec<f64> = traj.points().iter().map(|q| spec.value_unchecked(q.as_slice())).collect();
    let avg_csef = values.iter().sum::<f64>() / values.len() as f64;
    let max_csef = values.iter().copied().fold(0.0, f64::max);
    let joint_path_length = traj.points().windows(2).map(|w| (&w[1] - &w[0]).norm()).sum();
    let task: Vec<_> = traj.points().iter().map(|q| chain.fk_vector(q)).collect();
    let cartesian_path_length = task.windows(2).map(|w| (&w[1] - &w[0]).norm()).sum();
    Ok(MetricsRecord {
        // the mean of equal values can round above their maximum
        avg_csef: avg_csef.min(max_csef),
        max_csef,
        cartesian_path_length,
        joint_path_length,
        compute_time: wall_time,
        success,
    })
}
