//! Box-constrained penalty solver for `min c(x)` subject to `h(x) = 0`.
//!
//! Each start runs projected gradient descent on `c + rho * |h|^2` for a
//! geometric schedule of `rho`, warm-starting every round from the last.
//! The result is then restored onto `h = 0` with Gauss-Newton steps and
//! polished by descent along the constraint manifold, which removes the
//! ill-conditioning a large `rho` would otherwise leave behind.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::kinematics::JointLimits;
use crate::sampling::stratified_seeds;
use crate::tsef::damped_pseudoinverse;

pub trait Problem: Sync {
    fn bounds(&self) -> &JointLimits;
    fn cost(&self, x: &DVector<f64>) -> f64;
    fn cost_gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn residual(&self, x: &DVector<f64>) -> DVector<f64>;
    fn residual_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// Hard-constraint check applied to every returned solution.
    fn is_feasible(&self, x: &DVector<f64>) -> bool;

    fn dim(&self) -> usize {
        self.bounds().dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rho_schedule: Vec<f64>,
    pub inner_iters: usize,
    pub starts: usize,
    pub polish_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { rho_schedule: vec![10.0, 100.0, 1e3, 1e4], inner_iters: 400, starts: 16, polish_iters: 300 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartReport {
    pub start_index: usize,
    pub x: DVector<f64>,
    pub cost: f64,
    pub feasible: bool,
    /// `|h|` after each penalty round, before restoration.
    pub round_violations: Vec<f64>,
}

/// Runs every start (caller-supplied ones first, then stratified seeds)
/// and returns the per-start reports in start order.
pub fn solve_all<P: Problem>(problem: &P, extra_starts: &[DVector<f64>], config: &SolverConfig) -> Vec<StartReport> {
    let mut starts: Vec<DVector<f64>> = extra_starts.iter().map(|s| problem.bounds().clamp(s)).collect();
    starts.extend(stratified_seeds(problem.bounds(), config.starts).into_iter().map(|s| s.into_vector()));
    starts.into_par_iter().enumerate().map(|(i, x0)| solve_from(problem, x0, i, config)).collect()
}

/// Best feasible start by cost, ties broken by start index.
pub fn solve<P: Problem>(problem: &P, extra_starts: &[DVector<f64>], config: &SolverConfig) -> Option<StartReport> {
    solve_all(problem, extra_starts, config).into_iter().filter(|r| r.feasible).fold(
        None,
        |best: Option<StartReport>, r| match best {
            Some(b) if b.cost <= r.cost => Some(b),
            _ => Some(r),
        },
    )
}

pub fn solve_from<P: Problem>(problem: &P, x0: DVector<f64>, start_index: usize, config: &SolverConfig) -> StartReport {
    let mut x = x0;
    let mut round_violations = Vec::with_capacity(config.rho_schedule.len());
    for &rho in &config.rho_schedule {
        penalty_round(problem, &mut x, rho, config.inner_iters);
        round_violations.push(problem.residual(&x).norm());
    }
    let mut feasible = false;
    if restore(problem, &mut x) {
        polish(problem, &mut x, config.polish_iters);
        feasible = problem.is_feasible(&x);
    }
    let cost = problem.cost(&x);
    StartReport { start_index, x, cost, feasible, round_violations }
}

fn penalty_value<P: Problem>(problem: &P, x: &DVector<f64>, rho: f64) -> f64 {
    problem.cost(x) + rho * problem.residual(x).norm_squared()
}

fn penalty_round<P: Problem>(problem: &P, x: &mut DVector<f64>, rho: f64, iters: usize) {
    let mut t = 1.0 / rho;
    let mut phi = penalty_value(problem, x, rho);
    for _ in 0..iters {
        let h = problem.residual(x);
        let grad = problem.cost_gradient(x) + problem.residual_jacobian(x).transpose() * h * (2.0 * rho);
        let mut accepted = None;
        while t > 1e-16 {
            let mut y = &*x - &grad * t;
            problem.bounds().clamp_in_place(&mut y);
            let moved = (&y - &*x).norm_squared();
            if moved == 0.0 {
                return;
            }
            let phi_y = penalty_value(problem, &y, rho);
            if phi_y <= phi - 1e-4 * moved / t {
                accepted = Some((y, phi_y, moved));
                break;
            }
            t *= 0.5;
        }
        let Some((y, phi_y, moved)) = accepted else { return };
        *x = y;
        phi = phi_y;
        if moved <= 1e-24 {
            return;
        }
        t *= 2.0;
    }
}

/// Joints sitting on a bound whose update would push further outward.
fn blocked(bounds: &JointLimits, x: &DVector<f64>, d: &DVector<f64>, free: &mut [bool]) -> bool {
    let mut changed = false;
    for i in 0..x.len() {
        if free[i] && ((x[i] <= bounds.lower()[i] && d[i] < 0.0) || (x[i] >= bounds.upper()[i] && d[i] > 0.0)) {
            free[i] = false;
            changed = true;
        }
    }
    changed
}

fn masked(mut m: DMatrix<f64>, free: &[bool]) -> DMatrix<f64> {
    for (i, f) in free.iter().enumerate() {
        if !f {
            m.column_mut(i).fill(0.0);
        }
    }
    m
}

/// Gauss-Newton restoration onto `h = 0` inside the bounds.
fn restore<P: Problem>(problem: &P, x: &mut DVector<f64>) -> bool {
    let n = x.len();
    for _ in 0..60 {
        let h = problem.residual(x);
        if h.norm() <= 1e-12 {
            return true;
        }
        let jac = problem.residual_jacobian(x);
        let mut free = vec![true; n];
        let mut dx = DVector::zeros(n);
        for _ in 0..=n {
            let Some(pinv) = damped_pseudoinverse(&masked(jac.clone(), &free), 1e-9) else { return false };
            dx = -(pinv * &h);
            if !blocked(problem.bounds(), x, &dx, &mut free) {
                break;
            }
        }
        let largest = dx.amax();
        if largest == 0.0 {
            break;
        }
        if largest > 0.2 {
            dx *= 0.2 / largest;
        }
        *x += dx;
        problem.bounds().clamp_in_place(x);
    }
    problem.residual(x).norm() <= 1e-10
}

fn tangent_direction<P: Problem>(problem: &P, x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    let g = problem.cost_gradient(x);
    let jac = problem.residual_jacobian(x);
    let mut free = vec![true; n];
    for _ in 0..=n {
        let jm = masked(jac.clone(), &free);
        let gm = DVector::from_iterator(n, g.iter().zip(&free).map(|(v, f)| if *f { *v } else { 0.0 }));
        let Some(pinv) = damped_pseudoinverse(&jm, 1e-9) else { break };
        let d = -(&gm - pinv * (&jm * &gm));
        if !blocked(problem.bounds(), x, &d, &mut free) {
            return d;
        }
    }
    DVector::zeros(n)
}

fn polish<P: Problem>(problem: &P, x: &mut DVector<f64>, iters: usize) {
    let mut f = problem.cost(x);
    let mut alpha: f64 = 0.5;
    for _ in 0..iters {
        let d = tangent_direction(problem, x);
        let slope = d.norm_squared();
        if slope < 1e-24 {
            return;
        }
        let mut accepted = false;
        while alpha > 1e-12 {
            let mut trial = &*x + &d * alpha;
            problem.bounds().clamp_in_place(&mut trial);
            if restore(problem, &mut trial) {
                let ft = problem.cost(&trial);
                if ft <= f - 1e-4 * alpha * slope {
                    *x = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return;
        }
        alpha = (alpha * 2.0).min(1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimise `|x - c|^2` on the unit circle.
    struct Circle {
        bounds: JointLimits,
        c: DVector<f64>,
    }

    impl Problem for Circle {
        fn bounds(&self) -> &JointLimits {
            &self.bounds
        }
        fn cost(&self, x: &DVector<f64>) -> f64 {
            (x - &self.c).norm_squared()
        }
        fn cost_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
            (x - &self.c) * 2.0
        }
        fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, x.norm_squared() - 1.0)
        }
        fn residual_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]])
        }
        fn is_feasible(&self, x: &DVector<f64>) -> bool {
            self.residual(x)[0].abs() <= 1e-9
        }
    }

    #[test]
    fn projects_onto_circle() {
        let p = Circle {
            bounds: JointLimits::new([-2.0, -2.0], [2.0, 2.0]).unwrap(),
            c: DVector::from_vec(vec![3.0, 4.0]),
        };
        let best = solve(&p, &[], &SolverConfig::default()).unwrap();
        assert!((best.x[0] - 0.6).abs() < 1e-6 && (best.x[1] - 0.8).abs() < 1e-6, "{}", best.x);
    }

    #[test]
    fn respects_bounds() {
        // the unconstrained circle optimum (0.6, 0.8) is cut off by x1 <= 0.5
        let p = Circle {
            bounds: JointLimits::new([-2.0, -2.0], [2.0, 0.5]).unwrap(),
            c: DVector::from_vec(vec![3.0, 4.0]),
        };
        let best = solve(&p, &[], &SolverConfig::default()).unwrap();
        assert!((best.x[1] - 0.5).abs() < 1e-9);
        assert!((best.x[0] - 0.75f64.sqrt()).abs() < 1e-6);
    }
}
