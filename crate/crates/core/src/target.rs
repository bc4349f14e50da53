//! Ergonomic target postures: the least-cost configuration reaching a goal
//! point, and the least-cost pair of configurations holding a fixed distance
//! between two end effectors.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::field::ErgoSpec;
use crate::kinematics::{ChainModel, JointConfig, JointLimits, KinematicChain, TaskPoint};
use crate::penalty::{self, Problem, SolverConfig, StartReport};
use crate::tsef::planar_argmin;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TargetError {
    #[error("invalid target: {0}")]
    Invalid(String),
    #[error("goal at distance {distance} from the base is outside the reachable shell [{inner}, {outer}]")]
    Unreachable { distance: f64, inner: f64, outer: f64 },
    #[error("no in-limit solution: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, TargetError>;

fn check_pair(chain: &KinematicChain, spec: &ErgoSpec, side: &str) -> Result<()> {
    if chain.dof() != spec.dim() {
        return Err(TargetError::Invalid(format!(
            "{side}: chain has {} joints but the field has {}",
            chain.dof(),
            spec.dim()
        )));
    }
    Ok(())
}

fn check_point(chain: &KinematicChain, p: &TaskPoint, what: &str) -> Result<()> {
    if p.dim() != chain.task_dim() || !p.is_finite() {
        return Err(TargetError::Invalid(format!("{what} must be a finite {}-vector", chain.task_dim())));
    }
    Ok(())
}

fn default_tol(chain: &KinematicChain) -> f64 {
    match chain.model() {
        ChainModel::Planar2 => 1e-6,
        ChainModel::UpperLimb4 => 1e-4,
    }
}

#[derive(Debug, Clone)]
pub struct UnimanualTarget {
    pub chain: KinematicChain,
    pub spec: ErgoSpec,
    pub goal: TaskPoint,
    pub tol_fk: f64,
    /// Breaks ties between equal-cost solutions in favour of the closest one.
    pub current: Option<JointConfig>,
}

impl UnimanualTarget {
    pub fn new(chain: KinematicChain, spec: ErgoSpec, goal: TaskPoint) -> Self {
        let tol_fk = default_tol(&chain);
        Self { chain, spec, goal, tol_fk, current: None }
    }

    pub fn with_current(mut self, q: JointConfig) -> Self {
        self.current = Some(q);
        self
    }

    fn validate(&self) -> Result<()> {
        check_pair(&self.chain, &self.spec, "target")?;
        check_point(&self.chain, &self.goal, "goal")?;
        if !(self.tol_fk > 0.0) {
            return Err(TargetError::Invalid(format!("tol_fk must be positive, got {}", self.tol_fk)));
        }
        if let Some(c) = &self.current {
            if c.dim() != self.chain.dof() {
                return Err(TargetError::Invalid("current posture has the wrong dimension".into()));
            }
        }
        Ok(())
    }
}

fn shell_check(chain: &KinematicChain, p: &TaskPoint) -> Result<()> {
    let distance = (&**p - &**chain.base()).norm();
    let (inner, outer) = (chain.inner_reach(), chain.reach());
    if distance > outer + 1e-12 || distance < inner - 1e-12 {
        return Err(TargetError::Unreachable { distance, inner, outer });
    }
    Ok(())
}

struct Reach<'a> {
    target: &'a UnimanualTarget,
}

impl Problem for Reach<'_> {
    fn bounds(&self) -> &JointLimits {
        self.target.chain.limits()
    }
    fn cost(&self, x: &DVector<f64>) -> f64 {
        self.target.spec.value_unchecked(x.as_slice())
    }
    fn cost_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.target.spec.gradient_unchecked(x.as_slice())
    }
    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        self.target.chain.fk_vector(x) - &*self.target.goal
    }
    fn residual_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.target.chain.jacobian_matrix(x)
    }
    fn is_feasible(&self, x: &DVector<f64>) -> bool {
        self.residual(x).norm() <= self.target.tol_fk
    }
}

/// Least-cost in-limit configuration whose end effector reaches the goal.
///
/// Planar chains enumerate both analytic branches, which certifies the
/// global optimum. The upper limb uses the penalty solver with the optimum
/// (and the current posture, if any) as extra starts and returns the best
/// feasible start.
pub fn solve_unimanual(target: &UnimanualTarget) -> Result<JointConfig> {
    target.validate()?;
    let chain = &target.chain;
    let spec = &target.spec;
    shell_check(chain, &target.goal)?;
    if (chain.fk_vector(spec.q_opt()) - &*target.goal).norm() <= target.tol_fk {
        return Ok(spec.q_opt().clone());
    }
    match chain.model() {
        ChainModel::Planar2 => solve_planar(target),
        ChainModel::UpperLimb4 => {
            let mut starts = vec![spec.q_opt().clone().into_vector()];
            if let Some(c) = &target.current {
                starts.push(c.as_vector().clone());
            }
            let best = penalty::solve(&Reach { target }, &starts, &SolverConfig::default()).ok_or_else(|| {
                TargetError::Infeasible("no start converged onto the goal within the joint limits".into())
            })?;
            Ok(JointConfig::from(best.x))
        }
    }
}

fn solve_planar(target: &UnimanualTarget) -> Result<JointConfig> {
    let chain = &target.chain;
    let spec = &target.spec;
    let (x, y) = (target.goal[0], target.goal[1]);
    let Some(current) = &target.current else {
        return planar_argmin(spec, chain, x, y).map(|(q, _)| q).ok_or_else(|| {
            TargetError::Infeasible("every inverse-kinematics branch violates the joint limits".into())
        });
    };
    let mut best: Option<([f64; 2], f64, f64)> = None;
    for q in chain.planar_branches(x, y) {
        let qv = DVector::from_column_slice(&q);
        if !chain.limits().contains(&qv, 0.0) {
            continue;
        }
        let v = spec.value_unchecked(&q);
        let d = spec.weighted_distance(&q, current.as_slice());
        let better = match &best {
            None => true,
            Some((bq, bv, bd)) => v < *bv || (v == *bv && (d < *bd || (d == *bd && q < *bq))),
        };
        if better {
            best = Some((q, v, d));
        }
    }
    best.map(|(q, _, _)| JointConfig::new(q))
        .ok_or_else(|| TargetError::Infeasible("every inverse-kinematics branch violates the joint limits".into()))
}

#[derive(Debug, Clone)]
pub struct Arm {
    pub chain: KinematicChain,
    pub spec: ErgoSpec,
}

#[derive(Debug, Clone)]
pub struct BimanualTarget {
    pub left: Arm,
    pub right: Arm,
    pub d_task: f64,
    pub eps_task: f64,
    pub goal_left: Option<TaskPoint>,
    pub goal_right: Option<TaskPoint>,
    /// Tolerance on the optional goal constraints.
    pub tol_goal: f64,
}

impl BimanualTarget {
    pub fn new(left: Arm, right: Arm, d_task: f64, eps_task: f64) -> Self {
        let tol_goal = default_tol(&left.chain).max(default_tol(&right.chain));
        Self { left, right, d_task, eps_task, goal_left: None, goal_right: None, tol_goal }
    }

    pub fn validate(&self) -> Result<()> {
        check_pair(&self.left.chain, &self.left.spec, "left")?;
        check_pair(&self.right.chain, &self.right.spec, "right")?;
        if self.left.chain.task_dim() != self.right.chain.task_dim() {
            return Err(TargetError::Invalid("left and right chains work in different task spaces".into()));
        }
        if !(self.d_task > 0.0) || !self.d_task.is_finite() {
            return Err(TargetError::Invalid(format!("d_task must be positive, got {}", self.d_task)));
        }
        if !(self.eps_task > 0.0) || !self.eps_task.is_finite() {
            return Err(TargetError::Invalid(format!("eps_task must be positive, got {}", self.eps_task)));
        }
        if let Some(g) = &self.goal_left {
            check_point(&self.left.chain, g, "left goal")?;
        }
        if let Some(g) = &self.goal_right {
            check_point(&self.right.chain, g, "right goal")?;
        }
        Ok(())
    }

    pub fn dof_left(&self) -> usize {
        self.left.chain.dof()
    }

    /// Coupling violation `||p_r - p_l|| - d_task` of a joint pair.
    pub fn coupling_residual(&self, q_l: &DVector<f64>, q_r: &DVector<f64>) -> f64 {
        (self.right.chain.fk_vector(q_r) - self.left.chain.fk_vector(q_l)).norm() - self.d_task
    }

    pub fn combined_cost(&self, q_l: &DVector<f64>, q_r: &DVector<f64>) -> f64 {
        self.left.spec.value_unchecked(q_l.as_slice()) + self.right.spec.value_unchecked(q_r.as_slice())
    }

    /// Gradient of the coupling residual with respect to the stacked pair.
    pub(crate) fn coupling_gradient(&self, q_l: &DVector<f64>, q_r: &DVector<f64>) -> DVector<f64> {
        let diff = self.right.chain.fk_vector(q_r) - self.left.chain.fk_vector(q_l);
        let norm = diff.norm();
        let n_l = q_l.len();
        let mut g = DVector::zeros(n_l + q_r.len());
        if norm == 0.0 {
            return g;
        }
        let u = diff / norm;
        let gl = -(self.left.chain.jacobian_matrix(q_l).transpose() * &u);
        let gr = self.right.chain.jacobian_matrix(q_r).transpose() * &u;
        g.rows_mut(0, n_l).copy_from(&gl);
        g.rows_mut(n_l, q_r.len()).copy_from(&gr);
        g
    }

    fn goals_met(&self, q_l: &DVector<f64>, q_r: &DVector<f64>) -> bool {
        let ok_l =
            self.goal_left.as_ref().is_none_or(|g| (self.left.chain.fk_vector(q_l) - &**g).norm() <= self.tol_goal);
        let ok_r =
            self.goal_right.as_ref().is_none_or(|g| (self.right.chain.fk_vector(q_r) - &**g).norm() <= self.tol_goal);
        ok_l && ok_r
    }

    fn split(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n_l = self.dof_left();
        (x.rows(0, n_l).into_owned(), x.rows(n_l, x.len() - n_l).into_owned())
    }

    /// Range of end-effector distances allowed by the reachable shells,
    /// ignoring joint limits.
    pub fn distance_range(&self) -> (f64, f64) {
        let gap = (&**self.right.chain.base() - &**self.left.chain.base()).norm();
        let (rl, ro) = (self.left.chain.inner_reach(), self.left.chain.reach());
        let (sl, so) = (self.right.chain.inner_reach(), self.right.chain.reach());
        let lo = (gap - ro - so).max(rl - gap - so).max(sl - gap - ro).max(0.0);
        (lo, gap + ro + so)
    }
}

struct Coupled<'a> {
    target: &'a BimanualTarget,
    bounds: JointLimits,
}

impl Problem for Coupled<'_> {
    fn bounds(&self) -> &JointLimits {
        &self.bounds
    }
    fn cost(&self, x: &DVector<f64>) -> f64 {
        let (l, r) = self.target.split(x);
        self.target.combined_cost(&l, &r)
    }
    fn cost_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (l, r) = self.target.split(x);
        let mut g = DVector::zeros(x.len());
        g.rows_mut(0, l.len()).copy_from(&self.target.left.spec.gradient_unchecked(l.as_slice()));
        g.rows_mut(l.len(), r.len()).copy_from(&self.target.right.spec.gradient_unchecked(r.as_slice()));
        g
    }
    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let t = self.target;
        let (l, r) = t.split(x);
        let mut h = vec![t.coupling_residual(&l, &r)];
        if let Some(g) = &t.goal_left {
            h.extend((t.left.chain.fk_vector(&l) - &**g).iter());
        }
        if let Some(g) = &t.goal_right {
            h.extend((t.right.chain.fk_vector(&r) - &**g).iter());
        }
        DVector::from_vec(h)
    }
    fn residual_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let t = self.target;
        let (l, r) = t.split(x);
        let n = x.len();
        let m = t.left.chain.task_dim();
        let rows = 1 + m * (t.goal_left.is_some() as usize + t.goal_right.is_some() as usize);
        let mut jac = DMatrix::zeros(rows, n);
        jac.row_mut(0).copy_from(&t.coupling_gradient(&l, &r).transpose());
        let mut row = 1;
        if t.goal_left.is_some() {
            jac.view_mut((row, 0), (m, l.len())).copy_from(&t.left.chain.jacobian_matrix(&l));
            row += m;
        }
        if t.goal_right.is_some() {
            jac.view_mut((row, l.len()), (m, r.len())).copy_from(&t.right.chain.jacobian_matrix(&r));
        }
        jac
    }
    fn is_feasible(&self, x: &DVector<f64>) -> bool {
        let (l, r) = self.target.split(x);
        self.target.coupling_residual(&l, &r).abs() < self.target.eps_task && self.target.goals_met(&l, &r)
    }
}

fn stacked_limits(target: &BimanualTarget) -> JointLimits {
    let (l, r) = (target.left.chain.limits(), target.right.chain.limits());
    let lower: Vec<f64> = l.lower().iter().chain(r.lower().iter()).copied().collect();
    let upper: Vec<f64> = l.upper().iter().chain(r.upper().iter()).copied().collect();
    JointLimits::new(lower, upper).expect("per-arm limits are already valid")
}

/// Per-start solver reports for a bimanual target, for inspecting the
/// penalty homotopy.
pub fn bimanual_reports(target: &BimanualTarget, config: &SolverConfig) -> Result<Vec<StartReport>> {
    target.validate()?;
    let problem = Coupled { target, bounds: stacked_limits(target) };
    Ok(penalty::solve_all(&problem, &bimanual_starts(target), config))
}

fn bimanual_starts(target: &BimanualTarget) -> Vec<DVector<f64>> {
    let mut x = DVector::zeros(target.left.spec.dim() + target.right.spec.dim());
    let n_l = target.dof_left();
    x.rows_mut(0, n_l).copy_from(target.left.spec.q_opt().as_vector());
    x.rows_mut(n_l, target.right.spec.dim()).copy_from(target.right.spec.q_opt().as_vector());
    vec![x]
}

/// Least combined-cost joint pair holding the end effectors `d_task` apart
/// (within `eps_task`) and meeting any goal constraints.
pub fn solve_bimanual(target: &BimanualTarget) -> Result<(JointConfig, JointConfig)> {
    target.validate()?;
    let (lo, hi) = target.distance_range();
    if target.d_task > hi || target.d_task < lo {
        return Err(TargetError::Infeasible(format!(
            "d_task {} lies outside the attainable distance range [{lo}, {hi}]",
            target.d_task
        )));
    }
    let (ql, qr) = (target.left.spec.q_opt().as_vector(), target.right.spec.q_opt().as_vector());
    if target.coupling_residual(ql, qr).abs() < target.eps_task && target.goals_met(ql, qr) {
        return Ok((target.left.spec.q_opt().clone(), target.right.spec.q_opt().clone()));
    }
    let problem = Coupled { target, bounds: stacked_limits(target) };
    let best = penalty::solve(&problem, &bimanual_starts(target), &SolverConfig::default())
        .ok_or_else(|| TargetError::Infeasible("no start satisfied the coupling within the joint limits".into()))?;
    let (l, r) = target.split(&best.x);
    Ok((JointConfig::from(l), JointConfig::from(r)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimum_image_returns_optimum() {
        let t = UnimanualTarget::new(
            KinematicChain::planar_default(),
            ErgoSpec::planar_default(),
            KinematicChain::planar_default().forward_kinematics(ErgoSpec::planar_default().q_opt()).unwrap(),
        );
        assert_eq!(solve_unimanual(&t).unwrap(), *t.spec.q_opt());
    }

    #[test]
    fn planar_unreachable_goal() {
        let t = UnimanualTarget::new(
            KinematicChain::planar_default(),
            ErgoSpec::planar_default(),
            TaskPoint::new([2.5, 0.0]),
        );
        assert!(matches!(solve_unimanual(&t), Err(TargetError::Unreachable { .. })));
    }

    #[test]
    fn rejects_non_positive_tolerance() {
        let mut t = UnimanualTarget::new(
            KinematicChain::planar_default(),
            ErgoSpec::planar_default(),
            TaskPoint::new([1.0, 0.5]),
        );
        t.tol_fk = 0.0;
        assert!(matches!(solve_unimanual(&t), Err(TargetError::Invalid(_))));
    }

    #[test]
    fn upper_limb_goal_is_reached() {
        let chain = KinematicChain::upper_limb_default();
        let spec = ErgoSpec::upper_limb_default();
        let goal = chain.forward_kinematics(&JointConfig::new([0.5, 0.8, -0.2, 0.3])).unwrap();
        let t = UnimanualTarget::new(chain.clone(), spec.clone(), goal.clone());
        let q = solve_unimanual(&t).unwrap();
        assert!((&*chain.forward_kinematics(&q).unwrap() - &*goal).norm() <= t.tol_fk);
        assert!(chain.limits().contains(&q, 0.0));
        assert!(spec.value(&q).unwrap() <= spec.value(&JointConfig::new([0.5, 0.8, -0.2, 0.3])).unwrap() + 1e-6);
    }
}
