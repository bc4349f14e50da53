use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{ExecError, Result};
use crate::trajectory::{Space, Trajectory};

/// Diagonal task-space impedance `M xdd = K (x_d - x) + D (xd_d - xd) + F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpedanceParams {
    pub mass: Vec<f64>,
    pub stiffness: Vec<f64>,
    pub damping: Vec<f64>,
    pub dt: f64,
}

impl ImpedanceParams {
    /// 2 kg, 300 N/m, critical damping, 1 ms step on every axis.
    pub fn critically_damped(dim: usize) -> Self {
        let (m, k) = (2.0, 300.0);
        Self { mass: vec![m; dim], stiffness: vec![k; dim], damping: vec![2.0 * (k * m).sqrt(); dim], dt: 1e-3 }
    }

    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mass.len();
        if n == 0 || self.stiffness.len() != n || self.damping.len() != n {
            return Err(ExecError::Invalid("mass, stiffness and damping need one entry per axis".into()));
        }
        let all = self.mass.iter().chain(&self.stiffness).chain(&self.damping);
        if all.copied().any(|v| !(v > 0.0) || !v.is_finite()) {
            return Err(ExecError::Invalid("impedance gains must be positive and finite".into()));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(ExecError::Invalid(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

/// External force acting on the end effector.
#[derive(Debug, Clone, PartialEq)]
pub enum ForceInput {
    Zero,
    Constant(DVector<f64>),
    /// Held from each sample until the next one.
    Series(Trajectory),
}

impl ForceInput {
    fn at(&self, t: f64, dim: usize) -> DVector<f64> {
        match self {
            ForceInput::Zero => DVector::zeros(dim),
            ForceInput::Constant(f) => f.clone(),
            ForceInput::Series(s) => s.hold(t).clone(),
        }
    }

    fn check(&self, dim: usize) -> Result<()> {
        let samples: Vec<&DVector<f64>> = match self {
            ForceInput::Zero => return Ok(()),
            ForceInput::Constant(f) => vec![f],
            ForceInput::Series(s) => s.points().iter().collect(),
        };
        for (index, f) in samples.into_iter().enumerate() {
            if f.len() != dim {
                return Err(ExecError::Invalid(format!("force has dimension {}, expected {dim}", f.len())));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(ExecError::NonFiniteForce { index });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceRun {
    pub trajectory: Trajectory,
    pub velocities: Vec<DVector<f64>>,
}

/// `1/2 v^T M v + 1/2 e^T K e` with `e = x_d - x`.
pub fn impedance_energy(params: &ImpedanceParams, x: &DVector<f64>, v: &DVector<f64>, x_d: &DVector<f64>) -> f64 {
    let mut e = 0.0;
    for i in 0..x.len() {
        let err = x_d[i] - x[i];
        e += 0.5 * params.mass[i] * v[i] * v[i] + 0.5 * params.stiffness[i] * err * err;
    }
    e
}

fn reference_velocity(reference: &Trajectory, t: f64) -> DVector<f64> {
    let times = reference.times();
    if reference.len() == 1 || t < 0.0 || t >= reference.duration() {
        return DVector::zeros(reference.dim());
    }
    let k = times.partition_point(|&s| s <= t) - 1;
    (&reference.points()[k + 1] - &reference.points()[k]) / (times[k + 1] - times[k])
}

/// Integrates the impedance model with semi-implicit Euler from rest at
/// `x0`, sampling every `dt` up to `duration` (the reference duration when
/// `None`). The reference is linearly interpolated and held after its end.
pub fn simulate_impedance(
    params: &ImpedanceParams,
    x0: &DVector<f64>,
    reference: &Trajectory,
    force: &ForceInput,
    duration: Option<f64>,
) -> Result<ImpedanceRun> {
    params.validate()?;
    let n = params.dim();
    if reference.space() != Space::Task || reference.dim() != n || x0.len() != n {
        return Err(ExecError::Invalid(format!("reference and start must be {n}-D task points")));
    }
    force.check(n)?;
    let duration = duration.unwrap_or(reference.duration());
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(ExecError::Invalid(format!("duration must be non-negative, got {duration}")));
    }
    let dt = params.dt;
    let steps = (duration / dt).round() as usize;
    let mut x = x0.clone();
    let mut v = DVector::zeros(n);
    let mut times = Vec::with_capacity(steps + 1);
    let mut points = Vec::with_capacity(steps + 1);
    let mut velocities = Vec::with_capacity(steps + 1);
    times.push(0.0);
    points.push(x.clone());
    velocities.push(v.clone());
    for k in 0..steps {
        let t = k as f64 * dt;
        let x_d = reference.interpolate(t);
        let v_d = reference_velocity(reference, t);
        let f = force.at(t, n);
        for i in 0..n {
            let acc =
                (params.stiffness[i] * (x_d[i] - x[i]) + params.damping[i] * (v_d[i] - v[i]) + f[i]) / params.mass[i];
            v[i] += dt * acc;
            x[i] += dt * v[i];
        }
        times.push((k + 1) as f64 * dt);
        points.push(x.clone());
        velocities.push(v.clone());
    }
    Ok(ImpedanceRun { trajectory: Trajectory::new(Space::Task, times, points)?, velocities })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_ref(p: &[f64]) -> Trajectory {
        Trajectory::new(Space::Task, vec![0.0], vec![DVector::from_column_slice(p)]).unwrap()
    }

    #[test]
    fn equilibrium_is_preserved() {
        let params = ImpedanceParams::critically_damped(3);
        let x = DVector::from_vec(vec![0.1, -0.2, 0.3]);
        let run = simulate_impedance(&params, &x, &constant_ref(x.as_slice()), &ForceInput::Zero, Some(0.5)).unwrap();
        assert!(run.trajectory.points().iter().all(|p| *p == x));
        assert_eq!(run.trajectory.len(), 501);
    }

    #[test]
    fn rejects_non_finite_force() {
        let params = ImpedanceParams::critically_damped(2);
        let x = DVector::zeros(2);
        let f = ForceInput::Constant(DVector::from_vec(vec![f64::NAN, 0.0]));
        let err = simulate_impedance(&params, &x, &constant_ref(&[0.0, 0.0]), &f, Some(0.1)).unwrap_err();
        assert_eq!(err, ExecError::NonFiniteForce { index: 0 });
    }

    #[test]
    fn rejects_bad_gains() {
        let mut params = ImpedanceParams::critically_damped(2);
        params.damping[1] = 0.0;
        assert!(params.validate().is_err());
    }
}
