use nalgebra::{DVector, UnitQuaternion, Vector3};
use serde::Serialize;

use super::{BenchError, Result};
use crate::execution::{
    bimanual_frames, map_bimanual_references, map_unimanual_reference, simulate_human_follower, simulate_impedance,
    CouplingTransform, FollowerModel, ForceInput, ImpedanceParams, OrientationPolicy, Pose,
};
use crate::field::ErgoSpec;
use crate::kinematics::{ChainModel, JointConfig, KinematicChain, TaskPoint};
use crate::planner::{plan_bimanual, plan_csef_descent, plan_min_jerk, PlannerParams, PLAN_DT};
use crate::sampling::{rng, uniform_in_limits};
use crate::target::{Arm, BimanualTarget};
use crate::trajectory::{Space, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceConfig {
    pub chain: KinematicChain,
    pub spec: ErgoSpec,
    pub postures: Vec<JointConfig>,
    pub params: PlannerParams,
    /// Robot tracking model; `None` tracks the reference exactly.
    pub impedance: Option<ImpedanceParams>,
    pub follower: FollowerModel,
    pub transform: CouplingTransform,
    /// Time the final reference is held after the motion, seconds.
    pub hold: f64,
}

impl GuidanceConfig {
    /// Upper-limb field with `eps = 0`, three seeded starting postures,
    /// critically damped impedance and the default follower.
    pub fn upper_limb(seed: u64, n_postures: usize) -> Self {
        let chain = KinematicChain::upper_limb_default();
        let mut r = rng(seed);
        let postures = (0..n_postures).map(|_| uniform_in_limits(&mut r, chain.limits())).collect();
        Self {
            spec: ErgoSpec::upper_limb_default(),
            postures,
            params: PlannerParams { rng_seed: seed, ..PlannerParams::default() },
            impedance: Some(ImpedanceParams::critically_damped(3)),
            follower: FollowerModel::default(),
            transform: CouplingTransform::new(UnitQuaternion::identity(), Vector3::new(0.0, 0.6, 0.0)),
            hold: 1.0,
            chain,
        }
    }
}

/// One method's executed run from one starting posture.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRun {
    /// Field value of the executed posture at every sample.
    pub scores: Vec<f64>,
    pub avg_score: f64,
    pub terminal_score: f64,
    /// Root-mean-square joint distance to the planned field-descent path.
    pub rmse: f64,
    /// Percentage drop of the average score below the starting score.
    pub reduction_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PostureReport {
    pub posture: usize,
    pub start: Vec<f64>,
    pub start_score: f64,
    pub csef: MethodRun,
    pub ptp: MethodRun,
    /// Percentage by which the field method's average score is below the
    /// point-to-point baseline's.
    pub csef_vs_ptp_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuidanceReport {
    pub postures: Vec<PostureReport>,
    pub mean_csef_avg: f64,
    pub mean_ptp_avg: f64,
    pub pooled_csef_vs_ptp_pct: f64,
}

fn pct_below(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        0.0
    } else {
        100.0 * (reference - value) / reference
    }
}

fn to3(chain: &KinematicChain, p: &DVector<f64>) -> Vector3<f64> {
    match chain.model() {
        ChainModel::Planar2 => Vector3::new(p[0], p[1], 0.0),
        ChainModel::UpperLimb4 => Vector3::new(p[0], p[1], p[2]),
    }
}

fn from3(chain: &KinematicChain, p: &Vector3<f64>) -> DVector<f64> {
    DVector::from_column_slice(&p.as_slice()[..chain.task_dim()])
}

fn with_hold(traj: &Trajectory, hold: f64) -> Result<Trajectory> {
    let extra = (hold / PLAN_DT).round() as usize;
    let mut times = traj.times().to_vec();
    let mut points = traj.points().to_vec();
    let last = traj.last().clone();
    let n = times.len();
    for k in 1..=extra {
        times.push((n - 1 + k) as f64 * PLAN_DT);
        points.push(last.clone());
    }
    Ok(Trajectory::new(traj.space(), times, points)?)
}

/// Human hand reference -> robot reference -> robot execution -> guided
/// hand -> human posture.
fn execute(config: &GuidanceConfig, hand_reference: &Trajectory, q0: &JointConfig) -> Result<Trajectory> {
    let chain = &config.chain;
    let human3 = hand_reference.map_points(Space::Task, |p| DVector::from_column_slice(to3(chain, p).as_slice()));
    let robot_ref =
        map_unimanual_reference(&config.transform, &human3, &OrientationPolicy::Hold(UnitQuaternion::identity()))?;
    let executed = match &config.impedance {
        Some(imp) => {
            let run =
                simulate_impedance(imp, robot_ref.positions.first(), &robot_ref.positions, &ForceInput::Zero, None)?;
            let times = robot_ref.positions.times().to_vec();
            let points = times.iter().map(|&t| run.trajectory.interpolate(t)).collect();
            Trajectory::new(Space::Task, times, points)?
        }
        None => robot_ref.positions.clone(),
    };
    let guidance = executed.map_points(Space::Task, |p| {
        let hand = config.transform.apply_inverse(&Vector3::new(p[0], p[1], p[2]));
        from3(chain, &hand)
    });
    Ok(simulate_human_follower(chain, &guidance, &config.follower, q0, Some(&config.spec))?)
}

fn score(config: &GuidanceConfig, executed: &Trajectory, planned: &Trajectory, start_score: f64) -> MethodRun {
    let scores: Vec<f64> = executed.points().iter().map(|q| config.spec.value_unchecked(q.as_slice())).collect();
    let avg_score = scores.iter().sum::<f64>() / scores.len() as f64;
    let terminal_score = *scores.last().expect("non-empty");
    let sq: f64 = executed
        .points()
        .iter()
        .enumerate()
        .map(|(k, q)| (q - &planned.points()[k.min(planned.len() - 1)]).norm_squared())
        .sum();
    let rmse = (sq / executed.len() as f64).sqrt();
    MethodRun { scores, avg_score, terminal_score, rmse, reduction_pct: pct_below(avg_score, start_score) }
}

/// Guided posture correction from each starting posture, with the field
/// planner and with a minimum-jerk point-to-point baseline between the same
/// hand endpoints over the same duration. Both references are held for
/// `hold` seconds and run through the same robot and follower models.
pub fn run_guidance_study(config: &GuidanceConfig) -> Result<GuidanceReport> {
    if config.chain.dof() != config.spec.dim() {
        return Err(BenchError::Invalid("chain and field dimensions differ".into()));
    }
    if config.postures.is_empty() {
        return Err(BenchError::Invalid("the study needs at least one starting posture".into()));
    }
    if !(config.hold >= 0.0) || !config.hold.is_finite() {
        return Err(BenchError::Invalid(format!("hold must be non-negative, got {}", config.hold)));
    }
    let chain = &config.chain;
    let mut postures = Vec::with_capacity(config.postures.len());
    for (i, q0) in config.postures.iter().enumerate() {
        let plan = plan_csef_descent(&config.spec, q0, &config.params)?;
        let planned = with_hold(&plan.trajectory, config.hold)?;
        let hand = plan.trajectory.map_points(Space::Task, |q| chain.fk_vector(q));
        let csef_exec = execute(config, &with_hold(&hand, config.hold)?, q0)?;

        let p_start = TaskPoint::from(hand.first().clone());
        let p_end = TaskPoint::from(hand.last().clone());
        let ptp_hand =
            if hand.len() < 2 { hand.clone() } else { plan_min_jerk(&p_start, &p_end, hand.duration(), hand.len())? };
        let ptp_exec = execute(config, &with_hold(&ptp_hand, config.hold)?, q0)?;

        let start_score = config.spec.value_unchecked(q0.as_slice());
        let csef = score(config, &csef_exec, &planned, start_score);
        let ptp = score(config, &ptp_exec, &planned, start_score);
        postures.push(PostureReport {
            posture: i,
            start: q0.to_vec(),
            start_score,
            csef_vs_ptp_pct: pct_below(csef.avg_score, ptp.avg_score),
            csef,
            ptp,
        });
    }
    let n = postures.len() as f64;
    let mean_csef_avg = postures.iter().map(|p| p.csef.avg_score).sum::<f64>() / n;
    let mean_ptp_avg = postures.iter().map(|p| p.ptp.avg_score).sum::<f64>() / n;
    Ok(GuidanceReport {
        pooled_csef_vs_ptp_pct: pct_below(mean_csef_avg, mean_ptp_avg),
        postures,
        mean_csef_avg,
        mean_ptp_avg,
    })
}

#[derive(Debug, Clone)]
pub struct BimanualStudyConfig {
    pub target: BimanualTarget,
    pub starts: Vec<(JointConfig, JointConfig)>,
    pub params: PlannerParams,
    /// Offset of each robot end effector from the human hand it holds.
    pub grasp_offset: Vector3<f64>,
}

impl BimanualStudyConfig {
    /// Mirrored 2-DoF arms with bases 2 m apart holding an object 4 m wide,
    /// started from three symmetric coupled postures.
    pub fn mirrored_planar(seed: u64) -> Self {
        use std::f64::consts::PI;
        let limits = crate::kinematics::JointLimits::symmetric_pi(2);
        let left_chain = KinematicChain::planar_default().with_base(TaskPoint::new([-1.0, 0.0])).expect("valid base");
        let right_chain = KinematicChain::planar_default().with_base(TaskPoint::new([1.0, 0.0])).expect("valid base");
        let left_spec = ErgoSpec::ball(JointConfig::new([3.0 * PI / 4.0, PI / 3.0]), [1.0, 1.0], limits.clone(), 0.0)
            .expect("valid");
        let right_spec =
            ErgoSpec::ball(JointConfig::new([PI / 4.0, -PI / 3.0]), [1.0, 1.0], limits, 0.0).expect("valid");
        let target = BimanualTarget::new(
            Arm { chain: left_chain.clone(), spec: left_spec },
            Arm { chain: right_chain.clone(), spec: right_spec },
            4.0,
            0.02,
        );
        let starts = [0.2, 0.6, 1.0].iter().filter_map(|&lift| symmetric_start(&target, lift)).collect();
        Self {
            target,
            starts,
            params: PlannerParams { rng_seed: seed, ..PlannerParams::default() },
            grasp_offset: Vector3::new(0.0, 0.0, 0.1),
        }
    }
}

/// Mirror-symmetric coupled pair whose hands sit at height `height`.
fn symmetric_start(target: &BimanualTarget, height: f64) -> Option<(JointConfig, JointConfig)> {
    let half = target.d_task / 2.0;
    let right = target.right.chain.planar_branches(half, height);
    let q_r = right.into_iter().find(|q| q[1] < 0.0)?;
    let q_l = [std::f64::consts::PI - q_r[0], -q_r[1]];
    let q_l = [crate::kinematics::wrap_angle(q_l[0]), q_l[1]];
    Some((JointConfig::new(q_l), JointConfig::new(q_r)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BimanualRun {
    pub start: usize,
    pub success: bool,
    pub csef_avg_left: f64,
    pub csef_avg_right: f64,
    pub ptp_avg_left: f64,
    pub ptp_avg_right: f64,
    /// Largest coupling violation along the field plan.
    pub csef_max_violation: f64,
    /// Largest coupling violation along the point-to-point baseline.
    pub ptp_max_violation: f64,
    /// Largest change of the robot end-effector separation.
    pub rigidity_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BimanualStudyReport {
    pub runs: Vec<BimanualRun>,
}

fn avg_value(spec: &ErgoSpec, traj: &Trajectory) -> f64 {
    traj.points().iter().map(|q| spec.value_unchecked(q.as_slice())).sum::<f64>() / traj.len() as f64
}

/// Coupled two-arm guidance against independent minimum-jerk hand paths
/// between the same end points.
pub fn run_bimanual_study(config: &BimanualStudyConfig) -> Result<BimanualStudyReport> {
    let t = &config.target;
    if t.left.chain.model() != ChainModel::Planar2 || t.right.chain.model() != ChainModel::Planar2 {
        return Err(BenchError::Invalid("the bimanual study uses planar arms".into()));
    }
    let rigid = FollowerModel { compliance: 0.0, comfort_gain: 0.0 };
    let mut runs = Vec::with_capacity(config.starts.len());
    for (i, (q_l, q_r)) in config.starts.iter().enumerate() {
        let (left, right) = plan_bimanual(t, q_l, q_r, &config.params)?;
        let hand_l = left.trajectory.map_points(Space::Task, |q| t.left.chain.fk_vector(q));
        let hand_r = right.trajectory.map_points(Space::Task, |q| t.right.chain.fk_vector(q));
        let violation = |a: &Trajectory, b: &Trajectory| {
            a.points().iter().zip(b.points()).map(|(p, q)| ((q - p).norm() - t.d_task).abs()).fold(0.0, f64::max)
        };
        let csef_max_violation = violation(&hand_l, &hand_r);

        let (l3, r3) = (crate::execution::embed_planar(&hand_l), crate::execution::embed_planar(&hand_r));
        let x_l0 = Pose::from_position(to3(&t.left.chain, hand_l.first()) + config.grasp_offset);
        let x_r0 = Pose::from_position(to3(&t.right.chain, hand_r.first()) + config.grasp_offset);
        let frames = bimanual_frames(&l3, &r3, &x_l0, &x_r0)?;
        let (ref_l, ref_r) = map_bimanual_references(l3.times(), &frames, &x_l0, &x_r0)?;
        let d0 = (x_r0.position - x_l0.position).norm();
        let rigidity_error = ref_l
            .positions
            .points()
            .iter()
            .zip(ref_r.positions.points())
            .map(|(a, b)| ((b - a).norm() - d0).abs())
            .fold(0.0, f64::max);

        let ptp = |hand: &Trajectory| -> Result<Trajectory> {
            if hand.len() < 2 {
                return Ok(hand.clone());
            }
            let (a, b) = (TaskPoint::from(hand.first().clone()), TaskPoint::from(hand.last().clone()));
            Ok(plan_min_jerk(&a, &b, hand.duration(), hand.len())?)
        };
        let (ptp_l, ptp_r) = (ptp(&hand_l)?, ptp(&hand_r)?);
        let ptp_max_violation = violation(&ptp_l, &ptp_r);
        let joints_l = simulate_human_follower(&t.left.chain, &ptp_l, &rigid, q_l, None)?;
        let joints_r = simulate_human_follower(&t.right.chain, &ptp_r, &rigid, q_r, None)?;

        runs.push(BimanualRun {
            start: i,
            success: left.succeeded(),
            csef_avg_left: avg_value(&t.left.spec, &left.trajectory),
            csef_avg_right: avg_value(&t.right.spec, &right.trajectory),
            ptp_avg_left: avg_value(&t.left.spec, &joints_l),
            ptp_avg_right: avg_value(&t.right.spec, &joints_r),
            csef_max_violation,
            ptp_max_violation,
            rigidity_error,
        });
    }
    Ok(BimanualStudyReport { runs })
}
