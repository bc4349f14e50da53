use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{compute_metrics, BenchError, Result};
use crate::field::ErgoSpec;
use crate::grid::{FieldGrid, GridBounds};
use crate::kinematics::{JointConfig, KinematicChain, TaskPoint};
use crate::planner::{
    plan_csef_to_goal, plan_tsef_baseline, BaselineOptions, FailureReason, PlanResult, PlanStatus, PlannerParams,
};
use crate::sampling::{derive_seed, rng, uniform_in_limits, uniform_in_shell};
use crate::target::{solve_unimanual, UnimanualTarget};
use crate::tsef::{sample_tsef_grid, sample_tsef_grid_sequential};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    Random,
    HighToLowErgo,
    NearSingularity,
    LowToHighErgo,
    RegionCrossing,
}

impl CaseKind {
    pub const NAMED: [CaseKind; 4] =
        [CaseKind::HighToLowErgo, CaseKind::NearSingularity, CaseKind::LowToHighErgo, CaseKind::RegionCrossing];

    pub fn name(self) -> &'static str {
        match self {
            CaseKind::Random => "random",
            CaseKind::HighToLowErgo => "high_to_low_ergo",
            CaseKind::NearSingularity => "near_singularity",
            CaseKind::LowToHighErgo => "low_to_high_ergo",
            CaseKind::RegionCrossing => "region_crossing",
        }
    }

    /// Start posture and goal point of a named case.
    ///
    /// - high to low: a folded start far from the optimum on the opposite
    ///   elbow branch, ending just outside the comfortable region;
    /// - near singularity: the goal sits at 1.79 m, 1 cm inside full
    ///   extension, and the start is on the elbow branch the goal's best
    ///   posture does not use;
    /// - low to high: starts inside the comfortable region and ends at a
    ///   strongly flexed, uncomfortable point;
    /// - region crossing: start and goal on opposite sides of the region so
    ///   the joint-space segment between them passes through it.
    pub fn construction(self, chain: &KinematicChain) -> Option<(JointConfig, TaskPoint)> {
        let fk = |q: [f64; 2]| chain.forward_kinematics(&JointConfig::new(q)).expect("planar posture");
        match self {
            CaseKind::Random => None,
            CaseKind::HighToLowErgo => Some((JointConfig::new([-1.9, 2.2]), fk([1.2, -1.5]))),
            CaseKind::NearSingularity => {
                let (r, theta) = (1.79, 0.3);
                Some((JointConfig::new([1.4, 0.9]), TaskPoint::new([r * f64::cos(theta), r * f64::sin(theta)])))
            }
            CaseKind::LowToHighErgo => Some((JointConfig::new([0.9, -1.0]), fk([-2.2, 1.9]))),
            CaseKind::RegionCrossing => Some((JointConfig::new([-0.4, -0.3]), fk([2.0, -1.8]))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Csef,
    Tsef,
}

impl PlannerKind {
    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Csef => "csef",
            PlannerKind::Tsef => "tsef",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    pub n_cases: usize,
    pub grid_resolution: usize,
    pub params: PlannerParams,
    /// Repeats per timed plan; zero skips timing entirely.
    pub timing_repeats: usize,
}

impl SuiteConfig {
    pub fn new(seed: u64, n_cases: usize) -> Self {
        Self { seed, n_cases, grid_resolution: 100, params: PlannerParams::default(), timing_repeats: 5 }
    }
}

/// One planner run on one case. Wall times are kept out of this record so
/// that reports are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseRecord {
    pub case: usize,
    pub kind: CaseKind,
    pub planner: PlannerKind,
    pub success: bool,
    pub status: PlanStatus,
    pub failure: Option<FailureReason>,
    pub samples: usize,
    pub avg_csef: f64,
    pub max_csef: f64,
    pub cartesian_path_length: f64,
    pub joint_path_length: f64,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub n_cases: usize,
    pub csef_successes: usize,
    pub tsef_successes: usize,
    pub csef_mean_avg_csef: f64,
    pub tsef_mean_avg_csef: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub seed: u64,
    pub records: Vec<CaseRecord>,
    pub summary: SuiteSummary,
}

impl SuiteReport {
    pub fn record(&self, kind: CaseKind, planner: PlannerKind) -> Option<&CaseRecord> {
        self.records.iter().find(|r| r.kind == kind && r.planner == planner)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingSummary {
    /// Median over cases of the per-case median plan time, seconds.
    pub csef_median: f64,
    pub csef_mean: f64,
    /// Single-threaded grid construction time, seconds.
    pub grid_build: f64,
    pub tsef_search_median: f64,
    /// Grid construction plus median search time.
    pub tsef_median: f64,
    pub tsef_mean: f64,
    pub ratio: f64,
}

struct Case {
    index: usize,
    kind: CaseKind,
    q_start: JointConfig,
    q_goal: JointConfig,
    p_goal: TaskPoint,
    params: PlannerParams,
}

fn planar_setup() -> (KinematicChain, ErgoSpec) {
    (KinematicChain::planar_default(), ErgoSpec::planar_default())
}

fn build_cases(config: &SuiteConfig, chain: &KinematicChain, spec: &ErgoSpec) -> Result<Vec<Case>> {
    let mut cases = Vec::with_capacity(config.n_cases + CaseKind::NAMED.len());
    for i in 0..config.n_cases {
        let case_seed = derive_seed(config.seed, i as u64);
        let mut r = rng(case_seed);
        let q_start = uniform_in_limits(&mut r, chain.limits());
        let (q_goal, p_goal) = loop {
            let p = uniform_in_shell(&mut r, chain, chain.inner_reach(), chain.reach());
            let target = UnimanualTarget::new(chain.clone(), spec.clone(), p.clone()).with_current(q_start.clone());
            // points whose every branch violates the limits are redrawn
            if let Ok(q) = solve_unimanual(&target) {
                break (q, p);
            }
        };
        let params = PlannerParams { rng_seed: case_seed, ..config.params.clone() };
        cases.push(Case { index: i, kind: CaseKind::Random, q_start, q_goal, p_goal, params });
    }
    for (k, kind) in CaseKind::NAMED.into_iter().enumerate() {
        let (q_start, p_goal) = kind.construction(chain).expect("named case");
        let target = UnimanualTarget::new(chain.clone(), spec.clone(), p_goal.clone()).with_current(q_start.clone());
        let q_goal = solve_unimanual(&target)?;
        let index = config.n_cases + k;
        let params = PlannerParams { rng_seed: derive_seed(config.seed, index as u64), ..config.params.clone() };
        cases.push(Case { index, kind, q_start, q_goal, p_goal, params });
    }
    Ok(cases)
}

fn grid_bounds(chain: &KinematicChain) -> GridBounds {
    let base = chain.base();
    GridBounds::around(base.as_slice(), chain.reach()).expect("positive reach")
}

fn run_csef(spec: &ErgoSpec, case: &Case) -> Result<PlanResult> {
    Ok(plan_csef_to_goal(spec, &case.q_start, &case.q_goal, &case.params)?)
}

fn run_tsef(spec: &ErgoSpec, chain: &KinematicChain, grid: &FieldGrid, case: &Case) -> Result<PlanResult> {
    let p0 = chain.forward_kinematics(&case.q_start)?;
    let options = BaselineOptions { q_start: Some(case.q_start.clone()), q_goal: Some(case.q_goal.clone()) };
    Ok(plan_tsef_baseline(spec, chain, &p0, &case.p_goal, grid, &case.params, &options)?)
}

fn record(
    spec: &ErgoSpec,
    chain: &KinematicChain,
    case: &Case,
    planner: PlannerKind,
    result: &PlanResult,
) -> Result<CaseRecord> {
    let m = compute_metrics(spec, chain, &result.trajectory, 0.0, result.succeeded())?;
    Ok(CaseRecord {
        case: case.index,
        kind: case.kind,
        planner,
        success: m.success,
        status: result.status,
        failure: result.failure,
        samples: result.trajectory.len(),
        avg_csef: m.avg_csef,
        max_csef: m.max_csef,
        cartesian_path_length: m.cartesian_path_length,
        joint_path_length: m.joint_path_length,
        start: case.q_start.to_vec(),
        goal: case.q_goal.to_vec(),
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn timed<F: FnMut() -> Result<()>>(repeats: usize, mut f: F) -> Result<f64> {
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_secs_f64());
    }
    Ok(median(&mut times))
}

/// Paired comparison of the goal-directed field planner and the grid
/// baseline on the 2-DoF arm.
///
/// Random cases draw a start uniformly in the joint limits and a goal point
/// uniformly in the reachable annulus, whose target posture comes from the
/// unimanual solver; the four named cases follow. Cases run in parallel and
/// are reported in index order, so the report depends only on the seed.
/// Timing, when requested, is measured afterwards on a single thread.
pub fn run_table1_suite(config: &SuiteConfig) -> Result<(SuiteReport, Option<TimingSummary>)> {
    if config.n_cases < 1 {
        return Err(BenchError::Invalid("n_cases must be at least 1".into()));
    }
    if config.grid_resolution < 2 {
        return Err(BenchError::Invalid("grid resolution must be at least 2".into()));
    }
    config.params.validate()?;
    let (chain, spec) = planar_setup();
    let cases = build_cases(config, &chain, &spec)?;
    let res = vec![config.grid_resolution; 2];
    let grid = sample_tsef_grid(&spec, &chain, grid_bounds(&chain), &res)?;

    let per_case: Vec<Result<[CaseRecord; 2]>> = cases
        .par_iter()
        .map(|case| {
            let c = run_csef(&spec, case)?;
            let t = run_tsef(&spec, &chain, &grid, case)?;
            Ok([
                record(&spec, &chain, case, PlannerKind::Csef, &c)?,
                record(&spec, &chain, case, PlannerKind::Tsef, &t)?,
            ])
        })
        .collect();
    let mut records = Vec::with_capacity(2 * cases.len());
    for r in per_case {
        records.extend(r?);
    }

    let random = |p: PlannerKind| records.iter().filter(move |r| r.kind == CaseKind::Random && r.planner == p);
    let mean = |p: PlannerKind| random(p).map(|r| r.avg_csef).sum::<f64>() / config.n_cases as f64;
    let summary = SuiteSummary {
        n_cases: config.n_cases,
        csef_successes: random(PlannerKind::Csef).filter(|r| r.success).count(),
        tsef_successes: random(PlannerKind::Tsef).filter(|r| r.success).count(),
        csef_mean_avg_csef: mean(PlannerKind::Csef),
        tsef_mean_avg_csef: mean(PlannerKind::Tsef),
    };
    let report = SuiteReport { seed: config.seed, records, summary };

    if config.timing_repeats == 0 {
        return Ok((report, None));
    }
    let grid_build = timed(config.timing_repeats.min(3), || {
        sample_tsef_grid_sequential(&spec, &chain, grid_bounds(&chain), &res)?;
        Ok(())
    })?;
    let mut csef_times = Vec::with_capacity(cases.len());
    let mut search_times = Vec::with_capacity(cases.len());
    for case in cases.iter().filter(|c| c.kind == CaseKind::Random) {
        csef_times.push(timed(config.timing_repeats, || run_csef(&spec, case).map(|_| ()))?);
        search_times.push(timed(config.timing_repeats, || run_tsef(&spec, &chain, &grid, case).map(|_| ()))?);
    }
    let csef_mean = csef_times.iter().sum::<f64>() / csef_times.len() as f64;
    let tsef_mean = grid_build + search_times.iter().sum::<f64>() / search_times.len() as f64;
    let csef_median = median(&mut csef_times);
    let tsef_search_median = median(&mut search_times);
    let tsef_median = grid_build + tsef_search_median;
    let timing = TimingSummary {
        csef_median,
        csef_mean,
        grid_build,
        tsef_search_median,
        tsef_median,
        tsef_mean,
        ratio: if csef_median > 0.0 { tsef_median / csef_median } else { f64::INFINITY },
    };
    Ok((report, Some(timing)))
}
