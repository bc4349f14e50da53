use std::time::Instant;

use nalgebra::DVector;

use super::{
    check_config, perturbation, PlanError, PlanResult, PlanStatus, PlannerParams, Result, StallWindow, PLAN_DT,
};
use crate::kinematics::JointConfig;
use crate::sampling::rng;
use crate::target::{solve_bimanual, BimanualTarget, TargetError};
use crate::trajectory::{Space, Trajectory};

const MAX_CORRECTIONS: usize = 5;
const MAX_HALVINGS: usize = 30;

struct Coupling<'a> {
    target: &'a BimanualTarget,
    n_l: usize,
    /// Inverse squared field weights of both arms, stacked.
    metric: DVector<f64>,
}

impl Coupling<'_> {
    fn split(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (x.rows(0, self.n_l).into_owned(), x.rows(self.n_l, x.len() - self.n_l).into_owned())
    }

    fn residual(&self, x: &DVector<f64>) -> f64 {
        let (l, r) = self.split(x);
        self.target.coupling_residual(&l, &r)
    }

    fn cost_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (l, r) = self.split(x);
        let mut g = DVector::zeros(x.len());
        g.rows_mut(0, self.n_l).copy_from(&self.target.left.spec.gradient_unchecked(l.as_slice()));
        g.rows_mut(self.n_l, r.len()).copy_from(&self.target.right.spec.gradient_unchecked(r.as_slice()));
        g
    }

    fn clamp(&self, x: &mut DVector<f64>) {
        let mut l = x.rows(0, self.n_l).into_owned();
        let mut r = x.rows(self.n_l, x.len() - self.n_l).into_owned();
        self.target.left.chain.limits().clamp_in_place(&mut l);
        self.target.right.chain.limits().clamp_in_place(&mut r);
        x.rows_mut(0, self.n_l).copy_from(&l);
        let n_r = r.len();
        x.rows_mut(self.n_l, n_r).copy_from(&r);
    }

    /// Gauss-Newton corrections on the scalar coupling residual, split
    /// between the arms through their Jacobian transposes and the inverse
    /// weight metric.
    fn project(&self, x: &mut DVector<f64>) {
        for _ in 0..MAX_CORRECTIONS {
            let g = self.residual(x);
            if g.abs() <= 1e-12 {
                return;
            }
            let (l, r) = self.split(x);
            let grad = self.target.coupling_gradient(&l, &r);
            let m_grad = grad.component_mul(&self.metric);
            let denom = grad.dot(&m_grad);
            if denom <= 0.0 {
                return;
            }
            *x -= m_grad * (g / denom);
            self.clamp(x);
        }
    }
}

fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

/// Coupled planning for two arms holding a shared object.
///
/// Each step blends attraction toward the solved target pair with descent on
/// the summed field, then projects the pair back onto the distance
/// constraint. A step whose projection leaves the pair outside the coupling
/// tolerance, or moves any joint further than the step bound, is halved and
/// retried, so every emitted pair satisfies the coupling.
pub fn plan_bimanual(
    target: &BimanualTarget,
    q0_l: &JointConfig,
    q0_r: &JointConfig,
    params: &PlannerParams,
) -> Result<(PlanResult, PlanResult)> {
    let started = Instant::now();
    params.validate()?;
    if !(target.eps_task > 0.0) {
        return Err(PlanError::InvalidParams(format!("eps_task must be positive, got {}", target.eps_task)));
    }
    target.validate()?;
    check_config(&target.left.spec, q0_l, "left start")?;
    check_config(&target.right.spec, q0_r, "right start")?;

    let n_l = q0_l.dim();
    let split_results = |points: Vec<DVector<f64>>, status: PlanStatus| -> Result<(PlanResult, PlanResult)> {
        let wall_time = started.elapsed().as_secs_f64();
        let left: Vec<_> = points.iter().map(|x| x.rows(0, n_l).into_owned()).collect();
        let right: Vec<_> = points.iter().map(|x| x.rows(n_l, x.len() - n_l).into_owned()).collect();
        let make = |pts| -> Result<PlanResult> {
            Ok(PlanResult {
                trajectory: Trajectory::uniform(Space::Joint, pts, PLAN_DT)?,
                status,
                failure: None,
                wall_time,
            })
        };
        Ok((make(left)?, make(right)?))
    };

    let mut x = stack(q0_l.as_vector(), q0_r.as_vector());
    if target.coupling_residual(q0_l.as_vector(), q0_r.as_vector()).abs() >= target.eps_task {
        return split_results(vec![x], PlanStatus::Infeasible);
    }
    let (goal_l, goal_r) = match solve_bimanual(target) {
        Ok(pair) => pair,
        Err(TargetError::Infeasible(_)) | Err(TargetError::Unreachable { .. }) => {
            return split_results(vec![x], PlanStatus::Infeasible);
        }
        Err(e) => return Err(e.into()),
    };
    let goal = stack(goal_l.as_vector(), goal_r.as_vector());

    let weights = stack(target.left.spec.weights(), target.right.spec.weights());
    let coupling = Coupling { target, n_l, metric: weights.map(|w| 1.0 / (w * w)) };
    let a = params.step_size;
    let bound = params.step_bound();
    let mut rng = rng(params.rng_seed);
    let mut stall = StallWindow::new();
    let mut points = vec![x.clone()];
    for _ in 0..params.max_steps {
        let to_goal = &goal - &x;
        let dist = to_goal.norm();
        if dist <= params.goal_tol {
            return split_results(points, PlanStatus::Success);
        }
        if to_goal.amax() <= a {
            points.push(goal.clone());
            return split_results(points, PlanStatus::Success);
        }
        let mut dir = &to_goal * (params.goal_weight / dist);
        if params.ergo_weight > 0.0 {
            dir -= coupling.cost_gradient(&x) * params.ergo_weight;
        }
        let norm = dir.norm();
        if norm > 0.0 {
            dir /= norm;
        }
        if stall.stalled(dist) {
            dir += perturbation(&mut rng, x.len(), params.perturb_scale);
        }
        let mut scale = a;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let mut trial = &x + &dir * scale;
            coupling.clamp(&mut trial);
            coupling.project(&mut trial);
            if coupling.residual(&trial).abs() < target.eps_task && (&trial - &x).amax() <= bound {
                accepted = Some(trial);
                break;
            }
            scale *= 0.5;
        }
        let Some(next) = accepted else {
            return split_results(points, PlanStatus::MaxStepsExceeded);
        };
        x = next;
        points.push(x.clone());
    }
    let status =
        if (&goal - &x).norm() <= params.goal_tol { PlanStatus::Success } else { PlanStatus::MaxStepsExceeded };
    split_results(points, status)
}
