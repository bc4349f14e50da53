//! Time-stamped sequences of joint configurations or task points.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Joint,
    Task,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::Joint => "joint",
            Space::Task => "task",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory has no samples")]
    Empty,
    #[error("sample {index}: time {time} must be {expected}")]
    BadTime { index: usize, time: f64, expected: &'static str },
    #[error("sample {index}: expected dimension {expected}, got {found}")]
    Dimension { index: usize, expected: usize, found: usize },
    #[error("sample {index} has a non-finite value")]
    NonFinite { index: usize },
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
}

/// Samples with strictly increasing times starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    space: Space,
    times: Vec<f64>,
    points: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(space: Space, times: Vec<f64>, points: Vec<DVector<f64>>) -> Result<Self, TrajectoryError> {
        if points.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        if times.len() != points.len() {
            return Err(TrajectoryError::Dimension { index: 0, expected: points.len(), found: times.len() });
        }
        let dim = points[0].len();
        for (i, (t, p)) in times.iter().zip(&points).enumerate() {
            if i == 0 && *t != 0.0 {
                return Err(TrajectoryError::BadTime { index: 0, time: *t, expected: "zero" });
            }
            if i > 0 && !(*t > times[i - 1]) {
                return Err(TrajectoryError::BadTime {
                    index: i,
                    time: *t,
                    expected: "greater than the previous time",
                });
            }
            if !t.is_finite() {
                return Err(TrajectoryError::BadTime { index: i, time: *t, expected: "finite" });
            }
            if p.len() != dim {
                return Err(TrajectoryError::Dimension { index: i, expected: dim, found: p.len() });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(TrajectoryError::NonFinite { index: i });
            }
        }
        Ok(Self { space, times, points })
    }

    /// Samples spaced `dt` apart from time zero.
    pub fn uniform(space: Space, points: Vec<DVector<f64>>, dt: f64) -> Result<Self, TrajectoryError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(TrajectoryError::BadStep(dt));
        }
        let times = (0..points.len()).map(|k| k as f64 * dt).collect();
        Self::new(space, times, points)
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn first(&self) -> &DVector<f64> {
        &self.points[0]
    }

    pub fn last(&self) -> &DVector<f64> {
        &self.points[self.points.len() - 1]
    }

    pub fn duration(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Linear interpolation, held constant outside `[0, duration]`.
    pub fn interpolate(&self, t: f64) -> DVector<f64> {
        if t <= 0.0 || self.len() == 1 {
            return self.points[0].clone();
        }
        if t >= self.duration() {
            return self.last().clone();
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let s = (t - t0) / (t1 - t0);
        &self.points[k] * (1.0 - s) + &self.points[k + 1] * s
    }

    /// Value held from the latest sample at or before `t`.
    pub fn hold(&self, t: f64) -> &DVector<f64> {
        let k = self.times.partition_point(|&s| s <= t);
        &self.points[k.saturating_sub(1)]
    }

    /// Applies `f` to every sample, keeping the time stamps.
    pub fn map_points<F>(&self, space: Space, f: F) -> Trajectory
    where
        F: FnMut(&DVector<f64>) -> DVector<f64>,
    {
        Trajectory { space, times: self.times.clone(), points: self.points.iter().map(f).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64) -> DVector<f64> {
        DVector::from_vec(vec![x])
    }

    #[test]
    fn validates_times() {
        assert!(Trajectory::new(Space::Task, vec![0.0, 0.0], vec![v(0.0), v(1.0)]).is_err());
        assert!(Trajectory::new(Space::Task, vec![0.1], vec![v(0.0)]).is_err());
        assert!(Trajectory::new(Space::Task, vec![], vec![]).is_err());
        assert!(Trajectory::new(Space::Task, vec![0.0, 1.0], vec![v(0.0), DVector::zeros(2)]).is_err());
    }

    #[test]
    fn interpolation_and_hold() {
        let t = Trajectory::new(Space::Task, vec![0.0, 1.0, 3.0], vec![v(0.0), v(2.0), v(6.0)]).unwrap();
        assert_eq!(t.interpolate(0.5)[0], 1.0);
        assert_eq!(t.interpolate(2.0)[0], 4.0);
        assert_eq!(t.interpolate(9.0)[0], 6.0);
        assert_eq!(t.hold(0.99)[0], 0.0);
        assert_eq!(t.hold(1.0)[0], 2.0);
        assert_eq!(t.hold(-1.0)[0], 0.0);
    }
}
