use super::{PlanError, Result};
use crate::kinematics::TaskPoint;
use crate::trajectory::{Space, Trajectory};

/// Quintic time scaling `10 s^3 - 15 s^4 + 6 s^5` on normalised time; zero
/// velocity and acceleration at both ends.
pub fn min_jerk_profile(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// Straight-line task trajectory from `x0` to `x_goal` over `duration`
/// seconds with `n_samples` evenly spaced samples.
pub fn plan_min_jerk(x0: &TaskPoint, x_goal: &TaskPoint, duration: f64, n_samples: usize) -> Result<Trajectory> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(PlanError::InvalidParams(format!("duration must be positive, got {duration}")));
    }
    if n_samples < 2 {
        return Err(PlanError::InvalidParams(format!("need at least 2 samples, got {n_samples}")));
    }
    if x0.dim() != x_goal.dim() {
        return Err(PlanError::Dimension { what: "goal", expected: x0.dim(), found: x_goal.dim() });
    }
    let last = (n_samples - 1) as f64;
    let delta = &**x_goal - &**x0;
    let mut times = Vec::with_capacity(n_samples);
    let mut points = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let tau = k as f64 / last;
        times.push(if k == n_samples - 1 { duration } else { duration * tau });
        points.push(if k == n_samples - 1 {
            x_goal.as_vector().clone()
        } else {
            &**x0 + &delta * min_jerk_profile(tau)
        });
    }
    Ok(Trajectory::new(Space::Task, times, points)?)
}
