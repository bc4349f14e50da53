//! Forward kinematics, Jacobians and inverse kinematics for the two human
//! chain models: a 2-DoF planar arm and a 4-DoF upper limb.
//!
//! # Upper-limb axis convention
//!
//! The torso frame has `x` pointing laterally outward (away from the body on
//! the side of the modelled arm), `y` pointing forward and `z` up. At
//! `q = 0` the arm hangs straight down along `-z`.
//!
//! The shoulder is an intrinsic rotation sequence
//!
//! ```text
//! R_sh = Ry(-q1) · Rx(q2) · Rz(q3)
//! ```
//!
//! * `q1` abduction/adduction about the torso-forward axis (positive lifts
//!   the arm outward, hence the rotation about `-y`),
//! * `q2` flexion/extension about the torso-lateral axis (positive swings
//!   the arm forward),
//! * `q3` internal/external rotation about the humerus long axis (positive
//!   turns a flexed forearm toward the body).
//!
//! The elbow flexes about the local lateral axis of the upper arm:
//!
//! ```text
//! elbow = p0 + R_sh · (0, 0, -l_ua)
//! wrist = elbow + R_sh · Rx(q4) · (0, 0, -l_fa)
//! ```
//!
//! so the rest pose `q = 0` places the wrist at `p0 + (0, 0, -(l_ua + l_fa))`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Boundary slack used when classifying a planar target as lying on the
/// workspace boundary (one IK branch) instead of the interior (two).
const PLANAR_BOUNDARY_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in joint configuration or task point")]
    NonFinite,
    #[error("invalid joint limits: lower[{index}] = {lower} is not below upper[{index}] = {upper}")]
    InvalidLimits { index: usize, lower: f64, upper: f64 },
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("operation requires a planar chain")]
    NotPlanar,
    #[error("seed lies outside the joint limits")]
    SeedOutsideLimits,
    #[error("numeric IK did not converge after {iterations} iterations (residual {residual:.3e} m)")]
    NoConvergence { iterations: usize, residual: f64 },
}

pub type Result<T> = std::result::Result<T, KinematicsError>;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

macro_rules! vector_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(DVector<f64>);

        impl $name {
            pub fn new(values: impl Into<Vec<f64>>) -> Self {
                Self(DVector::from_vec(values.into()))
            }

            pub fn from_slice(values: &[f64]) -> Self {
                Self(DVector::from_column_slice(values))
            }

            pub fn zeros(dim: usize) -> Self {
                Self(DVector::zeros(dim))
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }

            pub fn as_vector(&self) -> &DVector<f64> {
                &self.0
            }

            pub fn into_vector(self) -> DVector<f64> {
                self.0
            }

            pub fn to_vec(&self) -> Vec<f64> {
                self.0.iter().copied().collect()
            }
        }

        impl Deref for $name {
            type Target = DVector<f64>;
            fn deref(&self) -> &DVector<f64> {
                &self.0
            }
        }

        impl From<DVector<f64>> for $name {
            fn from(v: DVector<f64>) -> Self {
                Self(v)
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self::new(v)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "(")?;
                for (i, v) in self.0.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v:.6}")?;
                }
                write!(f, ")")
            }
        }
    };
}

vector_newtype!(
    /// Joint angles in radians.
    JointConfig
);
vector_newtype!(
    /// End-effector position in metres (2-D for the planar arm, 3-D for the
    /// upper limb).
    TaskPoint
);

#[derive(Debug, Clone, PartialEq)]
pub struct JointLimits {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl JointLimits {
    pub fn new(lower: impl Into<Vec<f64>>, upper: impl Into<Vec<f64>>) -> Result<Self> {
        let lower = lower.into();
        let upper = upper.into();
        if lower.len() != upper.len() {
            return Err(KinematicsError::DimensionMismatch { expected: lower.len(), found: upper.len() });
        }
        for (index, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(KinematicsError::InvalidLimits { index, lower: lo, upper: hi });
            }
        }
        Ok(Self { lower: DVector::from_vec(lower), upper: DVector::from_vec(upper) })
    }

    /// `[-pi, pi]` on every joint.
    pub fn symmetric_pi(dim: usize) -> Self {
        Self { lower: DVector::from_element(dim, -PI), upper: DVector::from_element(dim, PI) }
    }

    /// Anatomical limits of the 4-DoF upper-limb model.
    pub fn upper_limb() -> Self {
        Self {
            lower: DVector::from_vec(vec![-PI / 18.0, -PI / 3.0, -PI / 3.0, -PI / 2.0]),
            upper: DVector::from_vec(vec![17.0 * PI / 18.0, 17.0 * PI / 18.0, PI / 2.0, PI / 3.0]),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn contains(&self, q: &DVector<f64>, tol: f64) -> bool {
        q.len() == self.dim()
            && q.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol)
    }

    pub fn clamp(&self, q: &DVector<f64>) -> DVector<f64> {
        let mut out = q.clone();
        self.clamp_in_place(&mut out);
        out
    }

    pub fn clamp_in_place(&self, q: &mut DVector<f64>) {
        for i in 0..q.len() {
            q[i] = q[i].clamp(self.lower[i], self.upper[i]);
        }
    }

    /// All `2^n` corners of the limit box.
    pub fn corners(&self) -> Vec<DVector<f64>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                DVector::from_iterator(
                    n,
                    (0..n).map(|i| if mask >> i & 1 == 1 { self.upper[i] } else { self.lower[i] }),
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainModel {
    Planar2,
    UpperLimb4,
}

impl ChainModel {
    pub fn dof(self) -> usize {
        match self {
            ChainModel::Planar2 => 2,
            ChainModel::UpperLimb4 => 4,
        }
    }

    pub fn task_dim(self) -> usize {
        match self {
            ChainModel::Planar2 => 2,
            ChainModel::UpperLimb4 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChainModel::Planar2 => "planar2",
            ChainModel::UpperLimb4 => "upper_limb4",
        }
    }
}

impl fmt::Display for ChainModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One analytic IK solution, flagged when it violates the joint limits.
#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub q: JointConfig,
    pub within_limits: bool,
}

/// Stratified restarts tried by `ik_numeric_with` after the seeded solve.
const IK_RESTARTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkConfig {
    pub damping: f64,
    pub max_step: f64,
    pub max_iters: usize,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self { damping: 0.05, max_step: 0.2, max_iters: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkOutcome {
    pub q: JointConfig,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    model: ChainModel,
    link_lengths: [f64; 2],
    base: TaskPoint,
    limits: JointLimits,
}

impl KinematicChain {
    pub fn new(model: ChainModel, link_lengths: [f64; 2], base: TaskPoint, limits: JointLimits) -> Result<Self> {
        if link_lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(KinematicsError::InvalidChain(format!("link lengths must be positive, got {link_lengths:?}")));
        }
        if base.dim() != model.task_dim() {
            return Err(KinematicsError::DimensionMismatch { expected: model.task_dim(), found: base.dim() });
        }
        if !base.is_finite() {
            return Err(KinematicsError::NonFinite);
        }
        if limits.dim() != model.dof() {
            return Err(KinematicsError::DimensionMismatch { expected: model.dof(), found: limits.dim() });
        }
        Ok(Self { model, link_lengths, base, limits })
    }

    /// Planar arm at the origin with `[-pi, pi]` limits.
    pub fn planar2(l1: f64, l2: f64) -> Result<Self> {
        Self::new(ChainModel::Planar2, [l1, l2], TaskPoint::zeros(2), JointLimits::symmetric_pi(2))
    }

    /// The simulated human arm: `l1 = 1.0 m`, `l2 = 0.8 m`.
    pub fn planar_default() -> Self {
        Self::planar2(1.0, 0.8).expect("valid planar defaults")
    }

    /// Upper limb at the origin with anatomical limits.
    pub fn upper_limb4(upper_arm: f64, forearm: f64) -> Result<Self> {
        Self::new(ChainModel::UpperLimb4, [upper_arm, forearm], TaskPoint::zeros(3), JointLimits::upper_limb())
    }

    /// Upper limb with default adult segment lengths (0.30 m, 0.25 m).
    pub fn upper_limb_default() -> Self {
        Self::upper_limb4(0.30, 0.25).expect("valid upper-limb defaults")
    }

    pub fn with_base(self, base: TaskPoint) -> Result<Self> {
        Self::new(self.model, self.link_lengths, base, self.limits)
    }

    pub fn with_limits(self, limits: JointLimits) -> Result<Self> {
        Self::new(self.model, self.link_lengths, self.base, limits)
    }

    pub fn model(&self) -> ChainModel {
        self.model
    }

    pub fn link_lengths(&self) -> [f64; 2] {
        self.link_lengths
    }

    pub fn base(&self) -> &TaskPoint {
        &self.base
    }

    pub fn limits(&self) -> &JointLimits {
        &self.limits
    }

    pub fn dof(&self) -> usize {
        self.model.dof()
    }

    pub fn task_dim(&self) -> usize {
        self.model.task_dim()
    }

    /// Outer workspace radius around the base.
    pub fn reach(&self) -> f64 {
        self.link_lengths[0] + self.link_lengths[1]
    }

    /// Inner workspace radius around the base.
    pub fn inner_reach(&self) -> f64 {
        (self.link_lengths[0] - self.link_lengths[1]).abs()
    }

    pub fn check_joint_dim(&self, q: &DVector<f64>) -> Result<()> {
        if q.len() != self.dof() {
            return Err(KinematicsError::DimensionMismatch { expected: self.dof(), found: q.len() });
        }
        if !q.iter().all(|v| v.is_finite()) {
            return Err(KinematicsError::NonFinite);
        }
        Ok(())
    }

    pub fn check_task_dim(&self, p: &DVector<f64>) -> Result<()> {
        if p.len() != self.task_dim() {
            return Err(KinematicsError::DimensionMismatch { expected: self.task_dim(), found: p.len() });
        }
        if !p.iter().all(|v| v.is_finite()) {
            return Err(KinematicsError::NonFinite);
        }
        Ok(())
    }

    pub fn forward_kinematics(&self, q: &JointConfig) -> Result<TaskPoint> {
        self.check_joint_dim(q)?;
        Ok(TaskPoint(self.fk_vector(q)))
    }

    /// FK without validation; `q` must have `dof()` entries.
    pub(crate) fn fk_vector(&self, q: &DVector<f64>) -> DVector<f64> {
        match self.model {
            ChainModel::Planar2 => {
                let [x, y] = self.planar_fk(q[0], q[1]);
                DVector::from_vec(vec![x, y])
            }
            ChainModel::UpperLimb4 => {
                let (_, wrist) = self.limb_points(q);
                DVector::from_column_slice(wrist.as_slice())
            }
        }
    }

    #[inline]
    pub(crate) fn planar_fk(&self, q1: f64, q2: f64) -> [f64; 2] {
        let [l1, l2] = self.link_lengths;
        let q12 = q1 + q2;
        [self.base[0] + l1 * q1.cos() + l2 * q12.cos(), self.base[1] + l1 * q1.sin() + l2 * q12.sin()]
    }

    fn shoulder_rotation(q: &DVector<f64>) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::y_axis(), -q[0])
            * Rotation3::from_axis_angle(&Vector3::x_axis(), q[1])
            * Rotation3::from_axis_angle(&Vector3::z_axis(), q[2])
    }

    /// Elbow and wrist positions of the upper limb.
    fn limb_points(&self, q: &DVector<f64>) -> (Vector3<f64>, Vector3<f64>) {
        let [l_ua, l_fa] = self.link_lengths;
        let shoulder = Vector3::new(self.base[0], self.base[1], self.base[2]);
        let r_sh = Self::shoulder_rotation(q);
        let elbow = shoulder + r_sh * Vector3::new(0.0, 0.0, -l_ua);
        let r_fa = r_sh * Rotation3::from_axis_angle(&Vector3::x_axis(), q[3]);
        let wrist = elbow + r_fa * Vector3::new(0.0, 0.0, -l_fa);
        (elbow, wrist)
    }

    pub fn jacobian(&self, q: &JointConfig) -> Result<DMatrix<f64>> {
        self.check_joint_dim(q)?;
        Ok(self.jacobian_matrix(q))
    }

    pub(crate) fn jacobian_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        match self.model {
            ChainModel::Planar2 => {
                let [l1, l2] = self.link_lengths;
                let (s1, c1) = q[0].sin_cos();
                let (s12, c12) = (q[0] + q[1]).sin_cos();
                DMatrix::from_row_slice(2, 2, &[-l1 * s1 - l2 * s12, -l2 * s12, l1 * c1 + l2 * c12, l2 * c12])
            }
            ChainModel::UpperLimb4 => {
                // Revolute columns: axis_i x (wrist - joint origin_i).
                let shoulder = Vector3::new(self.base[0], self.base[1], self.base[2]);
                let (elbow, wrist) = self.limb_points(q);
                let r1 = Rotation3::from_axis_angle(&Vector3::y_axis(), -q[0]);
                let r12 = r1 * Rotation3::from_axis_angle(&Vector3::x_axis(), q[1]);
                let r_sh = r12 * Rotation3::from_axis_angle(&Vector3::z_axis(), q[2]);
                let axes = [-Vector3::y(), r1 * Vector3::x(), r12 * Vector3::z(), r_sh * Vector3::x()];
                let origins = [shoulder, shoulder, shoulder, elbow];
                let mut j = DMatrix::zeros(3, 4);
                for (c, (axis, origin)) in axes.iter().zip(origins.iter()).enumerate() {
                    let col = axis.cross(&(wrist - origin));
                    j.fixed_view_mut::<3, 1>(0, c).copy_from(&col);
                }
                j
            }
        }
    }

    /// All analytic IK branches of the planar arm, angles in `(-pi, pi]`.
    ///
    /// Interior targets give two solutions, workspace-boundary targets one,
    /// unreachable targets none. Solutions outside the joint limits are
    /// returned with `within_limits == false`.
    pub fn ik_planar(&self, p: &TaskPoint) -> Result<Vec<IkSolution>> {
        if self.model != ChainModel::Planar2 {
            return Err(KinematicsError::NotPlanar);
        }
        self.check_task_dim(p)?;
        Ok(self
            .planar_branches(p[0], p[1])
            .into_iter()
            .map(|q| {
                let q = DVector::from_vec(q.to_vec());
                let within_limits = self.limits.contains(&q, 0.0);
                IkSolution { q: JointConfig(q), within_limits }
            })
            .collect())
    }

    /// Raw planar IK branches for a world-frame target, without limit checks.
    pub(crate) fn planar_branches(&self, px: f64, py: f64) -> Vec<[f64; 2]> {
        let [l1, l2] = self.link_lengths;
        let x = px - self.base[0];
        let y = py - self.base[1];
        let r2 = x * x + y * y;
        let c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
        if !(-1.0 - PLANAR_BOUNDARY_EPS..=1.0 + PLANAR_BOUNDARY_EPS).contains(&c2) {
            return Vec::new();
        }
        let solve = |q2: f64| {
            let q1 = y.atan2(x) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos());
            [wrap_angle(q1), wrap_angle(q2)]
        };
        if c2 >= 1.0 - PLANAR_BOUNDARY_EPS {
            return vec![solve(0.0)];
        }
        if c2 <= -1.0 + PLANAR_BOUNDARY_EPS {
            return vec![solve(PI)];
        }
        let q2 = c2.acos();
        vec![solve(q2), solve(-q2)]
    }

    /// Damped-least-squares IK from `seed` with default settings.
    pub fn ik_numeric(&self, p: &TaskPoint, seed: &JointConfig, tol: f64) -> Result<IkOutcome> {
        self.ik_numeric_with(p, seed, tol, &IkConfig::default())
    }

    /// Damped-least-squares IK: `dq = J^T (J J^T + damping^2 I)^-1 e`, each
    /// update scaled so no joint moves more than `max_step`, then clamped to
    /// the joint limits.
    ///
    /// Joint limits leave local minima the iteration cannot leave, so when a
    /// point inside the reachable shell is missed from `seed`, the solve is
    /// restarted from the seed with the elbow mirrored and then from the
    /// stratified seeds nearest `seed`, each with the full iteration budget.
    /// The first converged attempt is returned; `iterations` counts all of
    /// them.
    pub fn ik_numeric_with(&self, p: &TaskPoint, seed: &JointConfig, tol: f64, config: &IkConfig) -> Result<IkOutcome> {
        self.check_task_dim(p)?;
        self.check_joint_dim(seed)?;
        if !self.limits.contains(seed, 1e-12) {
            return Err(KinematicsError::SeedOutsideLimits);
        }
        let mut out = self.dls_descent(p, seed, tol, config);
        if out.residual <= tol {
            return Ok(out);
        }
        let mut iterations = out.iterations;
        let r = (&**p - &*self.base).norm();
        if r <= self.reach() && r >= self.inner_reach() {
            for restart in self.restart_seeds(seed) {
                let attempt = self.dls_descent(p, &restart, tol, config);
                iterations += attempt.iterations;
                if attempt.residual < out.residual {
                    out = attempt;
                }
                if out.residual <= tol {
                    return Ok(IkOutcome { iterations, ..out });
                }
            }
        }
        Err(KinematicsError::NoConvergence { iterations, residual: out.residual })
    }

    fn restart_seeds(&self, seed: &JointConfig) -> Vec<JointConfig> {
        let elbow = self.dof() - 1;
        let mut mirrored = seed.0.clone();
        mirrored[elbow] = -mirrored[elbow];
        let mut grid = crate::sampling::stratified_seeds(&self.limits, IK_RESTARTS);
        grid.sort_by(|a, b| (&a.0 - &seed.0).norm().total_cmp(&(&b.0 - &seed.0).norm()));
        let mut seeds = vec![JointConfig(self.limits.clamp(&mirrored))];
        seeds.extend(grid);
        seeds
    }

    /// The damped-least-squares iteration behind `ik_numeric_with`, returning
    /// the best iterate whether or not it reached `tol`. Inputs are assumed
    /// checked.
    ///
    /// The damping adapts per iteration: halved after a step that lowers the
    /// residual (down to `damping * 1e-6`) and quadrupled after one that does
    /// not, which is rejected. Near-singular targets such as an almost
    /// extended arm would otherwise converge at the damped rate.
    pub(crate) fn dls_descent(&self, p: &TaskPoint, seed: &JointConfig, tol: f64, config: &IkConfig) -> IkOutcome {
        let mut q = self.limits.clamp(seed);
        let mut err = &p.0 - self.fk_vector(&q);
        let mut residual = err.norm();
        let mut lambda = config.damping;
        let floor = config.damping * 1e-6;
        let mut iterations = 0;
        while iterations < config.max_iters && residual > tol {
            iterations += 1;
            let mut trial = &q + self.dls_step(&q, &err, lambda, config.max_step);
            self.limits.clamp_in_place(&mut trial);
            let trial_err = &p.0 - self.fk_vector(&trial);
            let trial_residual = trial_err.norm();
            if trial_residual < residual {
                q = trial;
                err = trial_err;
                residual = trial_residual;
                lambda = (lambda * 0.5).max(floor);
            } else {
                lambda *= 4.0;
                if lambda > 1e6 * config.damping.max(1e-3) {
                    break;
                }
            }
        }
        IkOutcome { q: JointConfig(q), iterations, residual }
    }

    /// One damped-least-squares update. Joints pinned at a limit and pushed
    /// outward are dropped from the solve so the remaining joints absorb the
    /// error; the update is scaled so no joint moves more than `max_step`.
    fn dls_step(&self, q: &DVector<f64>, err: &DVector<f64>, lambda: f64, max_step: f64) -> DVector<f64> {
        let m = self.task_dim();
        let mut j = self.jacobian_matrix(q);
        let mut dq = DVector::zeros(q.len());
        for _ in 0..q.len() {
            let mut jjt = &j * j.transpose();
            for i in 0..m {
                jjt[(i, i)] += lambda * lambda;
            }
            let Some(y) = jjt.lu().solve(err) else { break };
            dq = j.transpose() * y;
            let mut pinned = false;
            for i in 0..q.len() {
                let blocked =
                    (q[i] <= self.limits.lower[i] && dq[i] < 0.0) || (q[i] >= self.limits.upper[i] && dq[i] > 0.0);
                if blocked {
                    j.column_mut(i).fill(0.0);
                    dq[i] = 0.0;
                    pinned = true;
                }
            }
            if !pinned {
                break;
            }
        }
        let largest = dq.amax();
        if largest > max_step {
            dq *= max_step / largest;
        }
        dq
    }
}
