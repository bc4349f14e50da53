use std::time::Instant;

use nalgebra::DVector;

use super::{check_config, perturbation, PlanResult, PlanStatus, PlannerParams, Result, StallWindow, PLAN_DT};
use crate::field::{ErgoSpec, REGION_TOL};
use crate::kinematics::JointConfig;
use crate::sampling::rng;
use crate::trajectory::{Space, Trajectory};

fn finish(points: Vec<DVector<f64>>, status: PlanStatus, started: Instant) -> Result<PlanResult> {
    Ok(PlanResult {
        trajectory: Trajectory::uniform(Space::Joint, points, PLAN_DT)?,
        status,
        failure: None,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// Projected gradient descent on the field until the posture enters the
/// zero-level set. The field value never increases along the output.
///
/// The step is scaled by `1 / max(1, |grad f|_inf)` so that no joint moves
/// more than `step_size` per sample, whatever the weights.
pub fn plan_csef_descent(spec: &ErgoSpec, q0: &JointConfig, params: &PlannerParams) -> Result<PlanResult> {
    let started = Instant::now();
    params.validate()?;
    check_config(spec, q0, "start")?;
    let mut q = q0.as_vector().clone();
    let mut points = vec![q.clone()];
    let mut f = spec.value_unchecked(q.as_slice());
    for _ in 0..params.max_steps {
        if f <= REGION_TOL {
            return finish(points, PlanStatus::Success, started);
        }
        let g = spec.gradient_unchecked(q.as_slice());
        let a = params.step_size / g.amax().max(1.0);
        let next = spec.projection_step_unchecked(&q, a);
        if next == q {
            // pinned against a joint limit; no further progress is possible
            return finish(points, PlanStatus::MaxStepsExceeded, started);
        }
        q = next;
        f = spec.value_unchecked(q.as_slice());
        points.push(q.clone());
    }
    let status = if f <= REGION_TOL { PlanStatus::Success } else { PlanStatus::MaxStepsExceeded };
    finish(points, status, started)
}

/// Goal-directed planning: each step follows
/// `goal_weight * unit(q_goal - q) - ergo_weight * grad f(q)`, normalised to
/// length `step_size`. When the goal distance has dropped by less than the
/// stall threshold over the last window, a seeded uniform perturbation of at
/// most `perturb_scale * step_size` per joint is added.
pub fn plan_csef_to_goal(
    spec: &ErgoSpec,
    q0: &JointConfig,
    q_goal: &JointConfig,
    params: &PlannerParams,
) -> Result<PlanResult> {
    let started = Instant::now();
    params.validate()?;
    check_config(spec, q0, "start")?;
    check_config(spec, q_goal, "goal")?;
    let goal = q_goal.as_vector();
    let n = spec.dim();
    let a = params.step_size;
    let mut rng = rng(params.rng_seed);
    let mut stall = StallWindow::new();
    let mut q = q0.as_vector().clone();
    let mut points = vec![q.clone()];
    for _ in 0..params.max_steps {
        let to_goal = goal - &q;
        let dist = to_goal.norm();
        if dist <= params.goal_tol {
            return finish(points, PlanStatus::Success, started);
        }
        if dist <= a {
            points.push(goal.clone());
            return finish(points, PlanStatus::Success, started);
        }
        let mut dir = &to_goal * (params.goal_weight / dist);
        if params.ergo_weight > 0.0 {
            dir -= spec.gradient_unchecked(q.as_slice()) * params.ergo_weight;
        }
        let norm = dir.norm();
        if norm > 0.0 {
            dir /= norm;
        }
        if stall.stalled(dist) {
            dir += perturbation(&mut rng, n, params.perturb_scale);
        }
        q += dir * a;
        spec.limits().clamp_in_place(&mut q);
        points.push(q.clone());
    }
    let status = if (goal - &q).norm() <= params.goal_tol { PlanStatus::Success } else { PlanStatus::MaxStepsExceeded };
    finish(points, status, started)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::JointLimits;
    use std::f64::consts::PI;

    #[test]
    fn inside_region_is_single_sample() {
        let spec = ErgoSpec::planar_default();
        let r = plan_csef_descent(&spec, spec.q_opt(), &PlannerParams::default()).unwrap();
        assert_eq!(r.status, PlanStatus::Success);
        assert_eq!(r.trajectory.len(), 1);
    }

    #[test]
    fn radial_descent_step_count() {
        let spec = ErgoSpec::ball(JointConfig::new([0.0, 0.0]), [1.0, 1.0], JointLimits::symmetric_pi(2), 0.0).unwrap();
        let d: f64 = 0.537;
        let q0 = JointConfig::new([d * 0.6, -d * 0.8]);
        let r = plan_csef_descent(&spec, &q0, &PlannerParams::default()).unwrap();
        assert_eq!(r.status, PlanStatus::Success);
        assert_eq!(r.trajectory.len() - 1, (d / 0.01).ceil() as usize);
    }

    #[test]
    fn goal_equal_start_is_immediate() {
        let spec = ErgoSpec::planar_default();
        let q = JointConfig::new([0.3, PI / 2.0]);
        let r = plan_csef_to_goal(&spec, &q, &q, &PlannerParams::default()).unwrap();
        assert_eq!(r.status, PlanStatus::Success);
        assert_eq!(r.trajectory.len(), 1);
    }

    #[test]
    fn rejects_start_outside_limits() {
        let spec = ErgoSpec::upper_limb_default();
        let q = JointConfig::new([0.0, 0.0, 0.0, 2.0]);
        assert!(plan_csef_descent(&spec, &q, &PlannerParams::default()).is_err());
    }
}
