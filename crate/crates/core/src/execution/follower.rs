use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{ExecError, Result};
use crate::field::ErgoSpec;
use crate::kinematics::{ChainModel, IkConfig, JointConfig, KinematicChain, TaskPoint};
use crate::trajectory::{Space, Trajectory};
use crate::tsef::{nullspace_direction, reproject};

/// Hand-position accuracy of the redundant-arm follower, metres. Damped
/// steps against a joint limit converge slowly below this.
pub const FOLLOWER_IK_TOL: f64 = 1e-8;

/// Guidance may overshoot the reachable shell by this much, metres; the hand
/// then stops at the shell instead of failing.
pub const REACH_SLACK: f64 = 0.01;

/// Distance kept from full extension and full flexion, metres. Damped IK
/// converges slowly at the singular shell itself.
const SHELL_MARGIN: f64 = 1e-4;

/// Stand-in for the guided human: the hand lags the guidance point with a
/// first-order time constant, and on redundant arms the posture drifts
/// toward comfort along the self-motion manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FollowerModel {
    /// Hand lag time constant, seconds; zero means rigid coupling.
    pub compliance: f64,
    /// Self-motion speed toward lower field values, per second. Needs a
    /// comfort field to take effect.
    pub comfort_gain: f64,
}

impl Default for FollowerModel {
    fn default() -> Self {
        Self { compliance: 0.05, comfort_gain: 2.0 }
    }
}

/// The hand point the arm can actually take: `p` pulled into the reachable
/// shell, or `None` when it lies more than `REACH_SLACK` outside.
fn reachable_hand(chain: &KinematicChain, p: &DVector<f64>) -> Option<DVector<f64>> {
    let base = chain.base().as_vector();
    let offset = p - base;
    let r = offset.norm();
    let (inner, outer) = (chain.inner_reach(), chain.reach());
    if r > outer + REACH_SLACK || r < inner - REACH_SLACK {
        return None;
    }
    let clamped = r.clamp(inner + SHELL_MARGIN, outer - SHELL_MARGIN);
    if clamped == r || r == 0.0 {
        return Some(p.clone());
    }
    Some(base + offset * (clamped / r))
}

fn closest_planar(chain: &KinematicChain, p: &DVector<f64>, prev: &DVector<f64>) -> Option<DVector<f64>> {
    chain
        .planar_branches(p[0], p[1])
        .into_iter()
        .map(|q| DVector::from_column_slice(&q))
        .filter(|q| chain.limits().contains(q, 0.0))
        .min_by(|a, b| (a - prev).norm().total_cmp(&(b - prev).norm()))
}

/// Elbow angle below which the follower may flip the bend direction. Both
/// signs reach the hand point; near full extension the flip is a small
/// posture change (under 0.3 rad at the elbow) that a compliant hand allows.
const ELBOW_SWITCH_BAND: f64 = 0.15;

/// Upper-limb posture reaching `target` from `prev`. Near full extension the
/// mirrored elbow is tried too, and the more comfortable (or, without a
/// comfort field, the closer) of the two is kept. Past a joint limit the arm
/// stops at the closest posture it finds.
fn limb_posture(
    chain: &KinematicChain,
    target: &TaskPoint,
    prev: &DVector<f64>,
    comfort: Option<&ErgoSpec>,
    ik: &IkConfig,
) -> DVector<f64> {
    let mut seeds = vec![prev.clone()];
    if prev[3].abs() < ELBOW_SWITCH_BAND {
        let mut mirrored = prev.clone();
        mirrored[3] = -mirrored[3];
        chain.limits().clamp_in_place(&mut mirrored);
        seeds.push(mirrored);
    }
    let outcomes: Vec<_> =
        seeds.into_iter().map(|s| chain.dls_descent(target, &JointConfig::from(s), FOLLOWER_IK_TOL, ik)).collect();
    let best_residual = outcomes.iter().map(|o| o.residual).fold(f64::INFINITY, f64::min);
    let score = |q: &DVector<f64>| match comfort {
        Some(spec) => spec.value_unchecked(q.as_slice()),
        None => (q - prev).norm(),
    };
    outcomes
        .into_iter()
        .filter(|o| o.residual <= best_residual.max(FOLLOWER_IK_TOL))
        .map(|o| o.q.into_vector())
        .min_by(|a, b| score(a).total_cmp(&score(b)))
        .expect("the previous posture is always a candidate")
}

/// Joint trajectory of a hand following `guidance`, starting from `q_init`.
///
/// The hand point obeys `h_k = h_{k-1} + alpha (g_k - h_{k-1})` with
/// `alpha = dt / (compliance + dt)` and `h_0 = g_0`, and is held inside the
/// reachable shell. Postures come from the inverse-kinematics branch
/// continuous with the previous sample; a redundant arm whose joint limits
/// keep it from the hand point stops at the closest posture it finds. With a
/// comfort field, each redundant-arm sample also takes a self-motion step
/// of `comfort_gain * dt` down the field.
pub fn simulate_human_follower(
    chain: &KinematicChain,
    guidance: &Trajectory,
    model: &FollowerModel,
    q_init: &JointConfig,
    comfort: Option<&ErgoSpec>,
) -> Result<Trajectory> {
    if guidance.space() != Space::Task || guidance.dim() != chain.task_dim() {
        return Err(ExecError::Invalid(format!("guidance must be a {}-D task trajectory", chain.task_dim())));
    }
    if q_init.dim() != chain.dof() || !chain.limits().contains(q_init, 1e-12) {
        return Err(ExecError::Invalid("initial posture must be an in-limit configuration of the chain".into()));
    }
    if !(model.compliance >= 0.0) || !(model.comfort_gain >= 0.0) {
        return Err(ExecError::Invalid("compliance and comfort gain must be non-negative".into()));
    }
    if let Some(spec) = comfort {
        if spec.dim() != chain.dof() {
            return Err(ExecError::Invalid("comfort field does not match the chain".into()));
        }
    }
    let ik = IkConfig { damping: 0.01, max_iters: 1000, ..IkConfig::default() };
    let mut hand = guidance.first().clone();
    let mut q = chain.limits().clamp(q_init);
    let mut points = Vec::with_capacity(guidance.len());
    for (index, g) in guidance.points().iter().enumerate() {
        let dt = if index == 0 { 0.0 } else { guidance.times()[index] - guidance.times()[index - 1] };
        if index > 0 {
            let alpha = if model.compliance == 0.0 { 1.0 } else { dt / (model.compliance + dt) };
            hand = &hand + (g - &hand) * alpha;
        }
        let reach = reachable_hand(chain, &hand).ok_or(ExecError::Unreachable { index })?;
        q = match chain.model() {
            ChainModel::Planar2 => closest_planar(chain, &reach, &q).ok_or(ExecError::Unreachable { index })?,
            ChainModel::UpperLimb4 => {
                let target = TaskPoint::from(reach.clone());
                let mut next = limb_posture(chain, &target, &q, comfort, &ik);
                if let (Some(spec), true) = (comfort, dt > 0.0 && model.comfort_gain > 0.0) {
                    let d = nullspace_direction(spec, chain, &next);
                    let step = d.amax();
                    if step > 0.0 {
                        // never step further than the field can drop
                        let scale = (model.comfort_gain * dt)
                            .min(spec.value_unchecked(next.as_slice()) / d.norm_squared().max(f64::MIN_POSITIVE));
                        let mut trial = &next + d * scale;
                        chain.limits().clamp_in_place(&mut trial);
                        if reproject(chain, &reach, &mut trial)
                            && spec.value_unchecked(trial.as_slice()) <= spec.value_unchecked(next.as_slice())
                        {
                            next = trial;
                        }
                    }
                }
                next
            }
        };
        points.push(q.clone());
    }
    Ok(Trajectory::new(Space::Joint, guidance.times().to_vec(), points)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rigid_follower_tracks_guidance() {
        let chain = KinematicChain::planar_default();
        let qs = [[0.3, 1.0], [0.35, 0.95], [0.4, 0.9]];
        let pts: Vec<_> =
            qs.iter().map(|q| chain.forward_kinematics(&JointConfig::new(*q)).unwrap().into_vector()).collect();
        let g = Trajectory::uniform(Space::Task, pts.clone(), 0.01).unwrap();
        let model = FollowerModel { compliance: 0.0, comfort_gain: 0.0 };
        let out = simulate_human_follower(&chain, &g, &model, &JointConfig::new(qs[0]), None).unwrap();
        for (q, p) in out.points().iter().zip(&pts) {
            assert!((chain.fk_vector(q) - p).norm() < 1e-9);
        }
    }

    #[test]
    fn unreachable_guidance_reports_index() {
        let chain = KinematicChain::planar_default();
        let pts = vec![DVector::from_vec(vec![1.0, 0.5]), DVector::from_vec(vec![3.0, 0.0])];
        let g = Trajectory::uniform(Space::Task, pts, 0.01).unwrap();
        let q0 = JointConfig::from(chain.planar_branches(1.0, 0.5)[0].to_vec());
        let model = FollowerModel { compliance: 0.0, comfort_gain: 0.0 };
        let err = simulate_human_follower(&chain, &g, &model, &q0, None).unwrap_err();
        assert_eq!(err, ExecError::Unreachable { index: 1 });
    }
}
