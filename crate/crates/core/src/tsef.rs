//! Task-space ergonomic field: the smallest configuration-space field value
//! over all in-limit IK solutions of a task point, its gradient through the
//! damped pseudoinverse, and dense grid sampling.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::field::{ErgoSpec, FieldError, Result};
use crate::grid::{FieldGrid, GridBounds};
use crate::kinematics::{ChainModel, IkConfig, JointConfig, KinematicChain, TaskPoint};
use crate::sampling::stratified_seeds;

/// Number of stratified IK seeds used on the redundant chain.
pub const TSEF_SEEDS: usize = 8;

const FIBER_TOL: f64 = 1e-11;

/// Result of minimising the field over the IK fibre of one task point.
#[derive(Debug, Clone, PartialEq)]
pub struct TsefEval {
    pub value: f64,
    /// Minimising configuration; `None` when the point is infeasible.
    pub q_star: Option<JointConfig>,
}

impl TsefEval {
    pub fn reachable(&self) -> bool {
        self.q_star.is_some()
    }
}

fn check_dims(spec: &ErgoSpec, chain: &KinematicChain, p: &TaskPoint) -> Result<()> {
    if spec.dim() != chain.dof() {
        return Err(FieldError::DimensionMismatch { expected: chain.dof(), found: spec.dim() });
    }
    chain.check_task_dim(p)?;
    Ok(())
}

pub fn tsef_value(spec: &ErgoSpec, chain: &KinematicChain, p: &TaskPoint) -> Result<f64> {
    Ok(tsef_eval(spec, chain, p)?.value)
}

/// Evaluates the field and its minimiser. Planar chains enumerate the
/// analytic branches; the upper limb runs multi-start numeric IK followed by
/// descent along the self-motion manifold, so its value is the best local
/// minimum found (an upper estimate of the true minimum).
pub fn tsef_eval(spec: &ErgoSpec, chain: &KinematicChain, p: &TaskPoint) -> Result<TsefEval> {
    check_dims(spec, chain, p)?;
    Ok(tsef_eval_unchecked(spec, chain, p))
}

pub(crate) fn tsef_eval_unchecked(spec: &ErgoSpec, chain: &KinematicChain, p: &TaskPoint) -> TsefEval {
    let best = match chain.model() {
        ChainModel::Planar2 => planar_argmin(spec, chain, p[0], p[1]),
        ChainModel::UpperLimb4 => {
            if (&**p - &**chain.base()).norm() > chain.reach() {
                None
            } else {
                let mut seeds = vec![spec.q_opt().clone()];
                seeds.extend(stratified_seeds(chain.limits(), TSEF_SEEDS));
                best_projection(spec, chain, p, &seeds)
            }
        }
    };
    match best {
        Some((q, value)) => TsefEval { value, q_star: Some(q) },
        None => TsefEval { value: spec.penalty_value(), q_star: None },
    }
}

/// In-limit analytic branch with the smallest field value; ties go to the
/// lexicographically smaller joint vector.
pub(crate) fn planar_argmin(spec: &ErgoSpec, chain: &KinematicChain, x: f64, y: f64) -> Option<(JointConfig, f64)> {
    let mut best: Option<([f64; 2], f64)> = None;
    for q in chain.planar_branches(x, y) {
        let qv = DVector::from_column_slice(&q);
        if !chain.limits().contains(&qv, 0.0) {
            continue;
        }
        let v = spec.value_unchecked(&q);
        let better = match &best {
            None => true,
            Some((bq, bv)) => v < *bv || (v == *bv && q < *bq),
        };
        if better {
            best = Some((q, v));
        }
    }
    best.map(|(q, v)| (JointConfig::new(q), v))
}

fn best_projection(
    spec: &ErgoSpec,
    chain: &KinematicChain,
    p: &TaskPoint,
    seeds: &[JointConfig],
) -> Option<(JointConfig, f64)> {
    let mut best: Option<(JointConfig, f64)> = None;
    for seed in seeds {
        if let Some((q, v)) = ergonomic_projection(spec, chain, p, seed) {
            if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
                best = Some((q, v));
            }
        }
    }
    best
}

/// Right pseudoinverse `J^T (J J^T + damping^2 I)^-1`.
pub fn damped_pseudoinverse(j: &DMatrix<f64>, damping: f64) -> Option<DMatrix<f64>> {
    let m = j.nrows();
    let mut jjt = j * j.transpose();
    for i in 0..m {
        jjt[(i, i)] += damping * damping;
    }
    let inv = jjt.try_inverse()?;
    Some(j.transpose() * inv)
}

/// Pulls `q` back onto the fibre `FK(q) = p` with clamped Gauss-Newton
/// steps. Returns `None` if the residual does not drop below the tolerance.
pub(crate) fn reproject(chain: &KinematicChain, p: &DVector<f64>, q: &mut DVector<f64>) -> bool {
    for _ in 0..30 {
        let e = p - chain.fk_vector(q);
        if e.norm() <= FIBER_TOL {
            return true;
        }
        let j = chain.jacobian_matrix(q);
        let Some(pinv) = damped_pseudoinverse(&j, 1e-7) else { return false };
        let mut dq = pinv * e;
        let largest = dq.amax();
        if largest > 0.2 {
            dq *= 0.2 / largest;
        }
        *q += dq;
        chain.limits().clamp_in_place(q);
    }
    (p - chain.fk_vector(q)).norm() <= FIBER_TOL
}

/// Descent direction for `spec` projected onto the self-motion manifold at
/// `q`, with joints pinned at a limit (and pushed outward) frozen.
pub(crate) fn nullspace_direction(spec: &ErgoSpec, chain: &KinematicChain, q: &DVector<f64>) -> DVector<f64> {
    let n = q.len();
    let g = spec.gradient_unchecked(q.as_slice());
    let j_full = chain.jacobian_matrix(q);
    let mut free = vec![true; n];
    for _ in 0..2 {
        let mut j = j_full.clone();
        let mut gg = g.clone();
        for (i, f) in free.iter().enumerate() {
            if !f {
                j.column_mut(i).fill(0.0);
                gg[i] = 0.0;
            }
        }
        let Some(pinv) = damped_pseudoinverse(&j, 1e-7) else { return DVector::zeros(n) };
        let d = -(&gg - pinv * (&j * &gg));
        let mut changed = false;
        let lo = chain.limits().lower();
        let hi = chain.limits().upper();
        for i in 0..n {
            if free[i] && ((q[i] <= lo[i] && d[i] < 0.0) || (q[i] >= hi[i] && d[i] > 0.0)) {
                free[i] = false;
                changed = true;
            }
        }
        if !changed {
            return d;
        }
    }
    DVector::zeros(n)
}

/// Solves `min f(q)` subject to `FK(q) = p` and the joint limits, starting
/// from `seed`: damped IK onto the fibre, then backtracking descent along
/// the null space of the Jacobian with re-projection after every step.
pub fn ergonomic_projection(
    spec: &ErgoSpec,
    chain: &KinematicChain,
    p: &TaskPoint,
    seed: &JointConfig,
) -> Option<(JointConfig, f64)> {
    let seed = JointConfig::from(chain.limits().clamp(seed));
    let ik = IkConfig::default();
    // a single local solve: the stratified seeds already cover restarts
    let start = chain.dls_descent(p, &seed, FIBER_TOL, &ik);
    if start.residual > FIBER_TOL {
        return None;
    }
    let target = p.as_vector();
    let mut q = start.q.into_vector();
    let mut f = spec.value_unchecked(q.as_slice());
    let mut alpha: f64 = 0.5;
    for _ in 0..400 {
        if f <= 0.0 {
            break;
        }
        let d = nullspace_direction(spec, chain, &q);
        let slope = d.norm_squared();
        if slope < 1e-24 {
            break;
        }
        let mut accepted = false;
        while alpha > 1e-12 {
            let mut trial = &q + &d * alpha;
            chain.limits().clamp_in_place(&mut trial);
            if reproject(chain, target, &mut trial) {
                let ft = spec.value_unchecked(trial.as_slice());
                if ft <= f - 1e-4 * alpha * slope {
                    q = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        alpha = (alpha * 2.0).min(1.0);
    }
    Some((JointConfig::from(q), f))
}

/// Task-space gradient `(grad f(q*))^T J^#_lambda` at the minimising branch.
///
/// With `lambda = 0` and a full-row-rank Jacobian this is the exact
/// pseudoinverse form. At branch switches the value is continuous but the
/// gradient belongs to whichever branch is currently minimal.
pub fn tsef_gradient(spec: &ErgoSpec, chain: &KinematicChain, p: &TaskPoint, lambda: f64) -> Result<DVector<f64>> {
    let eval = tsef_eval(spec, chain, p)?;
    let q = eval.q_star.ok_or(FieldError::Unreachable)?;
    gradient_at(spec, chain, &q, lambda)
}

/// Task-space gradient for a known minimiser `q`.
pub fn gradient_at(spec: &ErgoSpec, chain: &KinematicChain, q: &JointConfig, lambda: f64) -> Result<DVector<f64>> {
    chain.check_joint_dim(q)?;
    let g = spec.gradient_unchecked(q.as_slice());
    let j = chain.jacobian_matrix(q);
    let pinv = damped_pseudoinverse(&j, lambda).ok_or(FieldError::Unreachable)?;
    Ok(pinv.transpose() * g)
}

/// Dense evaluation of the task-space field on a lattice. Nodes are
/// evaluated in parallel and assembled in index order, so the result does
/// not depend on the worker count.
pub fn sample_tsef_grid(
    spec: &ErgoSpec,
    chain: &KinematicChain,
    bounds: GridBounds,
    resolution: &[usize],
) -> Result<FieldGrid> {
    if spec.dim() != chain.dof() {
        return Err(FieldError::DimensionMismatch { expected: chain.dof(), found: spec.dim() });
    }
    if bounds.dim() != chain.task_dim() {
        return Err(FieldError::DimensionMismatch { expected: chain.task_dim(), found: bounds.dim() });
    }
    let grid = FieldGrid::empty(bounds, resolution.to_vec(), spec.penalty_value())?;
    let cells: Vec<(f64, bool)> =
        (0..grid.len()).into_par_iter().map(|idx| evaluate_node(spec, chain, &grid, idx)).collect();
    Ok(grid.with_cells(cells))
}

/// Single-threaded variant of [`sample_tsef_grid`], used for timing.
pub fn sample_tsef_grid_sequential(
    spec: &ErgoSpec,
    chain: &KinematicChain,
    bounds: GridBounds,
    resolution: &[usize],
) -> Result<FieldGrid> {
    if spec.dim() != chain.dof() || bounds.dim() != chain.task_dim() {
        return Err(FieldError::DimensionMismatch { expected: chain.task_dim(), found: bounds.dim() });
    }
    let grid = FieldGrid::empty(bounds, resolution.to_vec(), spec.penalty_value())?;
    let cells: Vec<(f64, bool)> = (0..grid.len()).map(|idx| evaluate_node(spec, chain, &grid, idx)).collect();
    Ok(grid.with_cells(cells))
}

fn evaluate_node(spec: &ErgoSpec, chain: &KinematicChain, grid: &FieldGrid, idx: usize) -> (f64, bool) {
    let p = TaskPoint::from(grid.node_position(idx));
    let eval = tsef_eval_unchecked(spec, chain, &p);
    (eval.value, eval.reachable())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_at_optimum_image() {
        let spec = ErgoSpec::planar_default();
        let chain = KinematicChain::planar_default();
        let p = chain.forward_kinematics(spec.q_opt()).unwrap();
        assert_eq!(tsef_value(&spec, &chain, &p).unwrap(), 0.0);
        let g = tsef_gradient(&spec, &chain, &p, 0.0).unwrap();
        assert_eq!(g, DVector::zeros(2));
    }

    #[test]
    fn unreachable_gets_penalty() {
        let spec = ErgoSpec::planar_default();
        let chain = KinematicChain::planar_default();
        let p = TaskPoint::new([2.5, 0.0]);
        assert_eq!(tsef_value(&spec, &chain, &p).unwrap(), spec.penalty_value());
        assert_eq!(tsef_gradient(&spec, &chain, &p, 0.1).unwrap_err(), FieldError::Unreachable);
        let limb = KinematicChain::upper_limb_default();
        let lspec = ErgoSpec::upper_limb_default();
        let far = TaskPoint::new([0.0, 0.0, -0.9]);
        assert_eq!(tsef_value(&lspec, &limb, &far).unwrap(), lspec.penalty_value());
    }

    #[test]
    fn upper_limb_zero_at_optimum_image() {
        let spec = ErgoSpec::upper_limb_default();
        let chain = KinematicChain::upper_limb_default();
        let p = chain.forward_kinematics(spec.q_opt()).unwrap();
        let eval = tsef_eval(&spec, &chain, &p).unwrap();
        assert_eq!(eval.value, 0.0);
        assert_eq!(eval.q_star.unwrap(), *spec.q_opt());
    }

    #[test]
    fn upper_limb_projection_stays_on_fibre() {
        let spec = ErgoSpec::upper_limb_default();
        let chain = KinematicChain::upper_limb_default();
        let q = JointConfig::new([0.6, 0.9, 0.4, -0.3]);
        let p = chain.forward_kinematics(&q).unwrap();
        let eval = tsef_eval(&spec, &chain, &p).unwrap();
        let q_star = eval.q_star.unwrap();
        let p_star = chain.forward_kinematics(&q_star).unwrap();
        assert!((&*p_star - &*p).norm() < 1e-9);
        assert!(chain.limits().contains(&q_star, 1e-12));
        assert!(eval.value <= spec.value(&q).unwrap() + 1e-12);
    }

    #[test]
    fn damped_pseudoinverse_is_right_inverse() {
        let j = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -0.3, 0.7, 1.1]);
        let pinv = damped_pseudoinverse(&j, 0.0).unwrap();
        assert_abs_diff_eq!(&j * pinv, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn grid_rejects_wrong_bounds() {
        let spec = ErgoSpec::planar_default();
        let chain = KinematicChain::planar_default();
        let bounds = GridBounds::new(vec![-1.0, -1.0, -1.0], vec![1.0, 1.0, 1.0]).unwrap();
        assert!(sample_tsef_grid(&spec, &chain, bounds, &[3, 3, 3]).is_err());
    }
}
