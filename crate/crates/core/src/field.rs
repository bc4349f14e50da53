//! Configuration-space ergonomic field: a weighted distance from a joint
//! configuration to an ergonomically acceptable region.
//!
//! For a ball region of radius `eps` around `q_opt` the field is
//!
//! ```text
//! f(q) = max(0, ||W (q - q_opt)|| - eps)
//! ```
//!
//! with `W = diag(weights)`. Outside the region its gradient is
//! `W^2 (q - q_min) / ||W (q - q_min)||`, where `q_min` is the closest point
//! on the region envelope; strictly inside it is zero. A point-set envelope
//! replaces the ball with a finite list of acceptable configurations.

use std::f64::consts::PI;

use nalgebra::DVector;
use thiserror::Error;

use crate::kinematics::{JointConfig, JointLimits};

/// Values at or below this are treated as lying on the zero-level set.
pub const REGION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("weights must be positive and finite")]
    InvalidWeights,
    #[error("optimal configuration lies outside the joint limits")]
    OptimumOutsideLimits,
    #[error("region radius must be finite and non-negative, got {0}")]
    InvalidRadius(f64),
    #[error("point-set envelope must contain at least one configuration")]
    EmptyPointSet,
    #[error("step size must be positive, got {0}")]
    InvalidStep(f64),
    #[error("task point is unreachable")]
    Unreachable,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Kinematics(#[from] crate::kinematics::KinematicsError),
}

pub type Result<T> = std::result::Result<T, FieldError>;

#[derive(Debug, Clone, PartialEq)]
pub enum Envelope {
    /// Weighted ball of radius `radius` around the optimum.
    Ball { radius: f64 },
    /// Task-specific set of acceptable configurations.
    PointSet(Vec<JointConfig>),
}

/// Value, gradient and closest envelope point at one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub closest_envelope_point: JointConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErgoSpec {
    q_opt: JointConfig,
    weights: DVector<f64>,
    limits: JointLimits,
    envelope: Envelope,
    penalty_value: f64,
}

impl ErgoSpec {
    pub fn new(
        q_opt: JointConfig,
        weights: impl Into<Vec<f64>>,
        limits: JointLimits,
        envelope: Envelope,
    ) -> Result<Self> {
        let weights = DVector::from_vec(weights.into());
        let n = q_opt.dim();
        if weights.len() != n {
            return Err(FieldError::DimensionMismatch { expected: n, found: weights.len() });
        }
        if limits.dim() != n {
            return Err(FieldError::DimensionMismatch { expected: n, found: limits.dim() });
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(FieldError::InvalidWeights);
        }
        if !q_opt.is_finite() || !limits.contains(&q_opt, 0.0) {
            return Err(FieldError::OptimumOutsideLimits);
        }
        match &envelope {
            Envelope::Ball { radius } => {
                if !(*radius >= 0.0) || !radius.is_finite() {
                    return Err(FieldError::InvalidRadius(*radius));
                }
            }
            Envelope::PointSet(points) => {
                if points.is_empty() {
                    return Err(FieldError::EmptyPointSet);
                }
                if let Some(p) = points.iter().find(|p| p.dim() != n) {
                    return Err(FieldError::DimensionMismatch { expected: n, found: p.dim() });
                }
            }
        }
        let mut spec = Self { q_opt, weights, limits, envelope, penalty_value: 0.0 };
        spec.penalty_value = spec.default_penalty();
        Ok(spec)
    }

    /// Ball-region field.
    pub fn ball(q_opt: JointConfig, weights: impl Into<Vec<f64>>, limits: JointLimits, radius: f64) -> Result<Self> {
        Self::new(q_opt, weights, limits, Envelope::Ball { radius })
    }

    /// 2-DoF planar study: `q_opt = (pi/4, -pi/3)`, unit weights,
    /// `eps = 0.5`, limits `[-pi, pi]`.
    pub fn planar_default() -> Self {
        Self::ball(JointConfig::new([PI / 4.0, -PI / 3.0]), [1.0, 1.0], JointLimits::symmetric_pi(2), 0.5)
            .expect("valid planar spec")
    }

    /// 4-DoF upper limb: `q_opt = (0, 0, 0, pi/6)`, weights `(1, 1, 1, 2)`,
    /// anatomical limits, and a point region (`eps = 0`).
    pub fn upper_limb_default() -> Self {
        Self::ball(JointConfig::new([0.0, 0.0, 0.0, PI / 6.0]), [1.0, 1.0, 1.0, 2.0], JointLimits::upper_limb(), 0.0)
            .expect("valid upper-limb spec")
    }

    pub fn with_penalty(mut self, penalty_value: f64) -> Self {
        self.penalty_value = penalty_value;
        self
    }

    pub fn dim(&self) -> usize {
        self.q_opt.dim()
    }

    pub fn q_opt(&self) -> &JointConfig {
        &self.q_opt
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn limits(&self) -> &JointLimits {
        &self.limits
    }

    pub fn envelope(&self) -> &Envelope {
        &self.envelope
    }

    /// Ball radius; zero for a point-set envelope.
    pub fn region_radius(&self) -> f64 {
        match self.envelope {
            Envelope::Ball { radius } => radius,
            Envelope::PointSet(_) => 0.0,
        }
    }

    /// Value assigned to infeasible task points.
    pub fn penalty_value(&self) -> f64 {
        self.penalty_value
    }

    /// Ten times the largest field value over the corners of the limit box.
    fn default_penalty(&self) -> f64 {
        let max = self.limits.corners().iter().map(|c| self.value_unchecked(c.as_slice())).fold(0.0, f64::max);
        if max > 0.0 {
            10.0 * max
        } else {
            1.0
        }
    }

    fn check(&self, q: &DVector<f64>) -> Result<()> {
        if q.len() != self.dim() {
            return Err(FieldError::DimensionMismatch { expected: self.dim(), found: q.len() });
        }
        Ok(())
    }

    /// `||W (a - b)||`.
    pub fn weighted_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(self.weights.iter())
            .map(|((x, y), w)| {
                let d = w * (x - y);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn value(&self, q: &JointConfig) -> Result<f64> {
        self.check(q)?;
        Ok(self.value_unchecked(q.as_slice()))
    }

    pub(crate) fn value_unchecked(&self, q: &[f64]) -> f64 {
        match &self.envelope {
            Envelope::Ball { radius } => (self.weighted_distance(q, self.q_opt.as_slice()) - radius).max(0.0),
            Envelope::PointSet(points) => {
                points.iter().map(|p| self.weighted_distance(q, p.as_slice())).fold(f64::INFINITY, f64::min)
            }
        }
    }

    pub fn gradient(&self, q: &JointConfig) -> Result<DVector<f64>> {
        self.check(q)?;
        Ok(self.gradient_unchecked(q.as_slice()))
    }

    pub(crate) fn gradient_unchecked(&self, q: &[f64]) -> DVector<f64> {
        let n = q.len();
        let anchor = match &self.envelope {
            Envelope::Ball { radius } => {
                let d = self.weighted_distance(q, self.q_opt.as_slice());
                // One-sided convention: the envelope itself gets the outward
                // radial direction, the open interior gets zero.
                if d < *radius || d == 0.0 {
                    return DVector::zeros(n);
                }
                // W^2 (q - q_min) / ||W (q - q_min)|| is invariant to the
                // positive rescaling q - q_min = (1 - eps/d)(q - q_opt).
                self.q_opt.as_slice()
            }
            Envelope::PointSet(points) => self.closest_point(q, points).as_slice(),
        };
        let mut g = DVector::from_iterator(n, q.iter().zip(anchor).map(|(a, b)| a - b));
        let norm = g.iter().zip(self.weights.iter()).map(|(d, w)| (w * d).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return DVector::zeros(n);
        }
        for (gi, w) in g.iter_mut().zip(self.weights.iter()) {
            *gi *= w * w / norm;
        }
        g
    }

    fn closest_point<'a>(&self, q: &[f64], points: &'a [JointConfig]) -> &'a JointConfig {
        points
            .iter()
            .map(|p| (self.weighted_distance(q, p.as_slice()), p))
            .fold((f64::INFINITY, &points[0]), |best, cur| if cur.0 < best.0 { cur } else { best })
            .1
    }

    /// Closest configuration on the envelope in the weighted metric.
    pub fn closest_envelope_point(&self, q: &JointConfig) -> Result<JointConfig> {
        self.check(q)?;
        Ok(match &self.envelope {
            Envelope::Ball { radius } => {
                let d = self.weighted_distance(q.as_slice(), self.q_opt.as_slice());
                if d == 0.0 {
                    self.q_opt.clone()
                } else {
                    let delta = &**q - &*self.q_opt;
                    JointConfig::from(&*self.q_opt + delta * (radius / d))
                }
            }
            Envelope::PointSet(points) => self.closest_point(q.as_slice(), points).clone(),
        })
    }

    pub fn sample(&self, q: &JointConfig) -> Result<FieldSample> {
        self.check(q)?;
        Ok(FieldSample {
            value: self.value_unchecked(q.as_slice()),
            gradient: self.gradient_unchecked(q.as_slice()),
            closest_envelope_point: self.closest_envelope_point(q)?,
        })
    }

    /// True when `q` is on the zero-level set.
    pub fn in_region(&self, q: &JointConfig) -> Result<bool> {
        Ok(self.value(q)? <= REGION_TOL)
    }

    /// One projected gradient step `clamp(q - a * grad f(q))`.
    ///
    /// The step length is capped at `f / ||grad f||^2` so a step never jumps
    /// past the envelope, and halved while the clamped result would raise
    /// the field value. The returned configuration therefore never has a
    /// larger value than `q`.
    pub fn projection_step(&self, q: &JointConfig, a: f64) -> Result<JointConfig> {
        self.check(q)?;
        if !(a > 0.0) || !a.is_finite() {
            return Err(FieldError::InvalidStep(a));
        }
        Ok(JointConfig::from(self.projection_step_unchecked(q, a)))
    }

    pub(crate) fn projection_step_unchecked(&self, q: &DVector<f64>, a: f64) -> DVector<f64> {
        let f0 = self.value_unchecked(q.as_slice());
        if f0 <= 0.0 {
            return q.clone();
        }
        let g = self.gradient_unchecked(q.as_slice());
        let g2 = g.norm_squared();
        if g2 == 0.0 {
            return q.clone();
        }
        let mut step = a.min(f0 / g2);
        for _ in 0..60 {
            let mut next = q - &g * step;
            self.limits.clamp_in_place(&mut next);
            if self.value_unchecked(next.as_slice()) <= f0 {
                return next;
            }
            step *= 0.5;
        }
        q.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn planar(radius: f64) -> ErgoSpec {
        ErgoSpec::ball(JointConfig::new([PI / 4.0, -PI / 3.0]), [1.0, 1.0], JointLimits::symmetric_pi(2), radius)
            .unwrap()
    }

    #[test]
    fn zero_at_optimum() {
        for eps in [0.0, 0.5, 1.0] {
            let spec = planar(eps);
            assert_eq!(spec.value(spec.q_opt()).unwrap(), 0.0);
            assert_eq!(spec.gradient(spec.q_opt()).unwrap(), DVector::zeros(2));
        }
    }

    #[test]
    fn axis_offset_value() {
        let spec = planar(0.0);
        let q = JointConfig::new([PI / 4.0 + 0.3, -PI / 3.0]);
        assert_abs_diff_eq!(spec.value(&q).unwrap(), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn ball_region_clamps_inside() {
        let spec = planar(0.5);
        let dir = DVector::from_vec(vec![0.6, 0.8]);
        let far = JointConfig::from(&**spec.q_opt() + &dir * 0.8);
        let near = JointConfig::from(&**spec.q_opt() + &dir * 0.3);
        assert_abs_diff_eq!(spec.value(&far).unwrap(), 0.3, epsilon = 1e-14);
        assert_eq!(spec.value(&near).unwrap(), 0.0);
        assert_eq!(spec.gradient(&near).unwrap(), DVector::zeros(2));
        assert!(spec.in_region(&near).unwrap());
    }

    #[test]
    fn identity_weights_give_unit_radial_gradient() {
        let spec = planar(0.5);
        let q = JointConfig::new([2.0, 1.0]);
        let g = spec.gradient(&q).unwrap();
        let delta = &*q - &**spec.q_opt();
        assert_abs_diff_eq!(g, &delta / delta.norm(), epsilon = 1e-15);
        assert_abs_diff_eq!(g.norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn envelope_gets_outward_direction() {
        let spec = planar(0.5);
        let q = JointConfig::from(&**spec.q_opt() + DVector::from_vec(vec![0.5, 0.0]));
        let g = spec.gradient(&q).unwrap();
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn closest_envelope_point_on_ball() {
        let spec = planar(0.5);
        let q = JointConfig::from(&**spec.q_opt() + DVector::from_vec(vec![0.0, 2.0]));
        let c = spec.closest_envelope_point(&q).unwrap();
        assert_abs_diff_eq!(c[1], spec.q_opt()[1] + 0.5, epsilon = 1e-15);
        let s = spec.sample(&q).unwrap();
        assert_abs_diff_eq!(s.value, 1.5, epsilon = 1e-15);
    }

    #[test]
    fn point_set_envelope() {
        let pts = vec![JointConfig::new([0.0, 0.0]), JointConfig::new([1.0, 1.0])];
        let spec = ErgoSpec::new(
            JointConfig::new([0.0, 0.0]),
            [1.0, 2.0],
            JointLimits::symmetric_pi(2),
            Envelope::PointSet(pts),
        )
        .unwrap();
        let q = JointConfig::new([1.0, 1.5]);
        assert_abs_diff_eq!(spec.value(&q).unwrap(), 1.0, epsilon = 1e-15);
        let g = spec.gradient(&q).unwrap();
        assert_abs_diff_eq!(g[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 2.0, epsilon = 1e-15);
        assert_eq!(spec.region_radius(), 0.0);
        assert_eq!(spec.closest_envelope_point(&q).unwrap(), JointConfig::new([1.0, 1.0]));
    }

    #[test]
    fn construction_errors() {
        let lim = JointLimits::symmetric_pi(2);
        let q = JointConfig::new([0.0, 0.0]);
        assert_eq!(ErgoSpec::ball(q.clone(), [1.0, 0.0], lim.clone(), 0.1).unwrap_err(), FieldError::InvalidWeights);
        assert_eq!(
            ErgoSpec::ball(q.clone(), [1.0, 1.0], lim.clone(), -0.1).unwrap_err(),
            FieldError::InvalidRadius(-0.1)
        );
        assert_eq!(
            ErgoSpec::ball(JointConfig::new([4.0, 0.0]), [1.0, 1.0], lim.clone(), 0.1).unwrap_err(),
            FieldError::OptimumOutsideLimits
        );
        assert_eq!(
            ErgoSpec::new(q.clone(), [1.0, 1.0], lim.clone(), Envelope::PointSet(vec![])).unwrap_err(),
            FieldError::EmptyPointSet
        );
        assert!(matches!(ErgoSpec::ball(q, [1.0], lim, 0.1).unwrap_err(), FieldError::DimensionMismatch { .. }));
    }

    #[test]
    fn value_rejects_wrong_dimension() {
        let spec = planar(0.5);
        assert!(spec.value(&JointConfig::new([0.0])).is_err());
        assert!(spec.gradient(&JointConfig::new([0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn penalty_dominates_limit_corners() {
        let spec = planar(0.5);
        let corner = JointConfig::new([-PI, PI]);
        let v = spec.value(&corner).unwrap();
        assert!(spec.penalty_value() >= 10.0 * v - 1e-12);
    }

    #[test]
    fn step_inside_region_is_identity() {
        let spec = planar(0.5);
        let q = JointConfig::new([PI / 4.0 + 0.1, -PI / 3.0]);
        assert_eq!(spec.projection_step(&q, 0.05).unwrap(), q);
    }

    #[test]
    fn radial_step_reduces_distance_by_step() {
        let spec = planar(0.0);
        let q = JointConfig::from(&**spec.q_opt() + DVector::from_vec(vec![0.3, -0.4]));
        let next = spec.projection_step(&q, 0.1).unwrap();
        assert_abs_diff_eq!(spec.value(&next).unwrap(), 0.4, epsilon = 1e-14);
    }

    #[test]
    fn short_step_lands_on_envelope() {
        let spec = planar(0.5);
        let q = JointConfig::from(&**spec.q_opt() + DVector::from_vec(vec![0.52, 0.0]));
        let next = spec.projection_step(&q, 0.1).unwrap();
        assert!(spec.value(&next).unwrap() <= REGION_TOL);
    }

    #[test]
    fn step_rejects_non_positive_size() {
        let spec = planar(0.5);
        assert_eq!(spec.projection_step(spec.q_opt(), 0.0).unwrap_err(), FieldError::InvalidStep(0.0));
    }
}
