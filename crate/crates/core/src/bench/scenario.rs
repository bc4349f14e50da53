//! Scenario files: a `csefplan-scenario v1` header line followed by TOML.
//!
//! ```text
//! csefplan-scenario v1
//! name = "reach"
//! rng_seed = 7
//! repeat = 1
//!
//! [chain]
//! model = "planar2"        # or "upper_limb4"
//! links = [1.0, 0.8]       # optional, per-model default
//! base = [0.0, 0.0]        # optional
//! lower = [-3.14, -3.14]   # optional joint limits, with `upper`
//!
//! [ergo]
//! q_opt = [0.785, -1.047]
//! weights = [1.0, 1.0]     # optional, unit weights
//! radius = 0.5             # optional, 0
//!
//! [start]
//! joints = [-1.9, 2.2]     # or `task = [x, y]`
//!
//! [goal]                   # optional for csef_descent
//! task = [0.5, 1.2]        # or `joints = [...]`
//!
//! [planner]
//! kind = "csef_to_goal"    # csef_descent | csef_to_goal | tsef_baseline | min_jerk
//! grid_resolution = 100    # tsef_baseline only
//! duration = 2.0           # min_jerk only, seconds
//!
//! [planner.params]         # optional PlannerParams overrides
//! step_size = 0.01
//!
//! [impedance]              # optional robot tracking of the planned hand path
//! mass = [2.0, 2.0]
//! stiffness = [300.0, 300.0]
//! damping = [49.0, 49.0]
//! dt = 0.001
//! ```
//!
//! `rng_seed` is required when the planner draws random perturbations and
//! overrides `planner.params.rng_seed`. A task-space start resolves to the
//! least-cost posture reaching it; a task-space goal resolves to the
//! least-cost posture reaching it from the start.

use std::path::Path;

use serde::Deserialize;

use super::{compute_metrics, BenchError, MetricsRecord, Result};
use crate::execution::{simulate_human_follower, simulate_impedance, FollowerModel, ForceInput, ImpedanceParams};
use crate::field::ErgoSpec;
use crate::grid::GridBounds;
use crate::kinematics::{ChainModel, JointConfig, JointLimits, KinematicChain, TaskPoint};
use crate::planner::{
    plan_csef_descent, plan_csef_to_goal, plan_min_jerk, plan_tsef_baseline, BaselineOptions, PlanResult, PlanStatus,
    PlannerParams, PLAN_DT,
};
use crate::sampling::derive_seed;
use crate::target::{solve_unimanual, UnimanualTarget};
use crate::trajectory::{Space, Trajectory};
use crate::tsef::sample_tsef_grid;

pub const SCENARIO_HEADER: &str = "csefplan-scenario v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerChoice {
    CsefDescent,
    CsefToGoal,
    TsefBaseline,
    MinJerk,
}

impl PlannerChoice {
    pub fn name(self) -> &'static str {
        match self {
            PlannerChoice::CsefDescent => "csef_descent",
            PlannerChoice::CsefToGoal => "csef_to_goal",
            PlannerChoice::TsefBaseline => "tsef_baseline",
            PlannerChoice::MinJerk => "min_jerk",
        }
    }

    pub fn is_stochastic(self) -> bool {
        self == PlannerChoice::CsefToGoal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Endpoint {
    Joints(JointConfig),
    Task(TaskPoint),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub chain: KinematicChain,
    pub spec: ErgoSpec,
    pub start: Endpoint,
    pub goal: Option<Endpoint>,
    pub planner: PlannerChoice,
    pub params: PlannerParams,
    pub grid_resolution: usize,
    /// Point-to-point duration, seconds.
    pub duration: f64,
    pub impedance: Option<ImpedanceParams>,
    pub rng_seed: Option<u64>,
    pub repeat: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    rng_seed: Option<u64>,
    repeat: Option<usize>,
    chain: RawChain,
    ergo: RawErgo,
    start: RawEndpoint,
    goal: Option<RawEndpoint>,
    planner: RawPlanner,
    impedance: Option<ImpedanceParams>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChain {
    model: ChainModel,
    links: Option<[f64; 2]>,
    base: Option<Vec<f64>>,
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawErgo {
    q_opt: Vec<f64>,
    weights: Option<Vec<f64>>,
    radius: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEndpoint {
    joints: Option<Vec<f64>>,
    task: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlanner {
    kind: PlannerChoice,
    grid_resolution: Option<usize>,
    duration: Option<f64>,
    params: Option<PlannerParams>,
}

/// 1-based line of `key` inside `[section]` (top level when empty), or of
/// the section header when the key is absent.
fn line_of(text: &str, section: &str, key: &str) -> usize {
    let mut current = String::new();
    let mut header_line = 1;
    for (i, l) in text.lines().enumerate() {
        let t = l.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header_line = i + 1;
            }
            continue;
        }
        if current == section {
            if let Some(rest) = t.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return i + 1;
                }
            }
        }
    }
    header_line
}

fn backticked(message: &str) -> Option<&str> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(&message[start..start + len])
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let first = text.lines().next().unwrap_or("");
        if first.trim() != SCENARIO_HEADER {
            return Err(BenchError::Parse {
                line: 1,
                field: "header".into(),
                message: format!("expected `{SCENARIO_HEADER}`"),
            });
        }
        // blank out the header so TOML line numbers match the file
        let body = &text[first.len()..];
        let raw: RawScenario = toml::from_str(body).map_err(|e| {
            let line = e.span().map_or(1, |s| body[..s.start].matches('\n').count() + 1);
            let field = backticked(e.message()).unwrap_or("document").to_string();
            BenchError::Parse { line, field, message: e.message().trim().to_string() }
        })?;
        Self::resolve(raw, body)
    }

    fn resolve(raw: RawScenario, text: &str) -> Result<Self> {
        let err = |section: &str, key: &str, message: String| BenchError::Parse {
            line: line_of(text, section, key),
            field: if section.is_empty() { key.to_string() } else { format!("{section}.{key}") },
            message,
        };
        let model = raw.chain.model;
        let defaults = match model {
            ChainModel::Planar2 => KinematicChain::planar_default(),
            ChainModel::UpperLimb4 => KinematicChain::upper_limb_default(),
        };
        let links = raw.chain.links.unwrap_or(defaults.link_lengths());
        let base = match raw.chain.base {
            Some(b) => TaskPoint::new(b),
            None => defaults.base().clone(),
        };
        let limits = match (raw.chain.lower, raw.chain.upper) {
            (Some(lo), Some(hi)) => JointLimits::new(lo, hi).map_err(|e| err("chain", "lower", e.to_string()))?,
            (None, None) => defaults.limits().clone(),
            _ => return Err(err("chain", "lower", "give both lower and upper limits or neither".into())),
        };
        let chain = KinematicChain::new(model, links, base, limits.clone())
            .map_err(|e| err("chain", "model", e.to_string()))?;

        let n = model.dof();
        if raw.ergo.q_opt.len() != n {
            return Err(err(
                "ergo",
                "q_opt",
                format!("expected {n} values for {model}, found {}", raw.ergo.q_opt.len()),
            ));
        }
        let weights = raw.ergo.weights.unwrap_or_else(|| vec![1.0; n]);
        let spec = ErgoSpec::ball(JointConfig::new(raw.ergo.q_opt), weights, limits, raw.ergo.radius.unwrap_or(0.0))
            .map_err(|e| err("ergo", "q_opt", e.to_string()))?;

        let endpoint = |section: &str, e: RawEndpoint| -> Result<Endpoint> {
            match (e.joints, e.task) {
                (Some(q), None) if q.len() == n => Ok(Endpoint::Joints(JointConfig::new(q))),
                (Some(q), None) => Err(err(section, "joints", format!("expected {n} values, found {}", q.len()))),
                (None, Some(p)) if p.len() == model.task_dim() => Ok(Endpoint::Task(TaskPoint::new(p))),
                (None, Some(p)) => {
                    Err(err(section, "task", format!("expected {} values, found {}", model.task_dim(), p.len())))
                }
                _ => Err(err(section, "joints", "give exactly one of `joints` or `task`".into())),
            }
        };
        let start = endpoint("start", raw.start)?;
        let goal = raw.goal.map(|g| endpoint("goal", g)).transpose()?;

        let planner = raw.planner.kind;
        if goal.is_none() && planner != PlannerChoice::CsefDescent {
            return Err(err("planner", "kind", format!("planner `{}` needs a [goal] section", planner.name())));
        }
        if planner.is_stochastic() && raw.rng_seed.is_none() {
            return Err(err("", "rng_seed", format!("required by the stochastic planner `{}`", planner.name())));
        }
        let mut params = raw.planner.params.unwrap_or_default();
        if let Some(seed) = raw.rng_seed {
            params.rng_seed = seed;
        }
        params.validate().map_err(|e| err("planner.params", "step_size", e.to_string()))?;
        let grid_resolution = raw.planner.grid_resolution.unwrap_or(match model {
            ChainModel::Planar2 => 100,
            ChainModel::UpperLimb4 => 25,
        });
        if grid_resolution < 2 {
            return Err(err("planner", "grid_resolution", "must be at least 2".into()));
        }
        let duration = raw.planner.duration.unwrap_or(1.0);
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(err("planner", "duration", format!("must be positive, got {duration}")));
        }
        if let Some(imp) = &raw.impedance {
            imp.validate().map_err(|e| err("impedance", "mass", e.to_string()))?;
            if imp.dim() != model.task_dim() {
                return Err(err(
                    "impedance",
                    "mass",
                    format!("expected {} axes, found {}", model.task_dim(), imp.dim()),
                ));
            }
        }
        let repeat = raw.repeat.unwrap_or(1);
        if repeat < 1 {
            return Err(err("", "repeat", "must be at least 1".into()));
        }
        Ok(Self {
            name: raw.name.unwrap_or_else(|| "scenario".into()),
            chain,
            spec,
            start,
            goal,
            planner,
            params,
            grid_resolution,
            duration,
            impedance: raw.impedance,
            rng_seed: raw.rng_seed,
            repeat,
        })
    }

    fn least_cost(&self, p: &TaskPoint, current: Option<&JointConfig>) -> Result<JointConfig> {
        let mut t = UnimanualTarget::new(self.chain.clone(), self.spec.clone(), p.clone());
        if let Some(q) = current {
            t = t.with_current(q.clone());
        }
        Ok(solve_unimanual(&t)?)
    }

    pub fn start_posture(&self) -> Result<JointConfig> {
        match &self.start {
            Endpoint::Joints(q) => {
                if !self.chain.limits().contains(q, 0.0) {
                    return Err(BenchError::Invalid("start posture lies outside the joint limits".into()));
                }
                Ok(q.clone())
            }
            Endpoint::Task(p) => self.least_cost(p, None),
        }
    }

    /// Goal posture and point, when the scenario has a goal.
    pub fn goal_posture(&self, q_start: &JointConfig) -> Result<Option<(JointConfig, TaskPoint)>> {
        match &self.goal {
            None => Ok(None),
            Some(Endpoint::Joints(q)) => {
                if !self.chain.limits().contains(q, 0.0) {
                    return Err(BenchError::Invalid("goal posture lies outside the joint limits".into()));
                }
                Ok(Some((q.clone(), self.chain.forward_kinematics(q)?)))
            }
            Some(Endpoint::Task(p)) => Ok(Some((self.least_cost(p, Some(q_start))?, p.clone()))),
        }
    }
}

/// One repetition of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub repeat: usize,
    pub plan: PlanResult,
    /// Joint-space motion scored by the metrics: the plan itself, or for
    /// point-to-point plans the posture of a rigidly following arm.
    pub joints: Trajectory,
    pub metrics: MetricsRecord,
    /// Robot end-effector path under impedance tracking, when configured.
    pub executed: Option<Trajectory>,
}

/// Runs the scenario `repeat` times; stochastic planners draw a fresh seed
/// derived from `rng_seed` for every repetition.
pub fn run_scenario(scenario: &Scenario) -> Result<Vec<ScenarioRun>> {
    let chain = &scenario.chain;
    let spec = &scenario.spec;
    let q_start = scenario.start_posture()?;
    let goal = scenario.goal_posture(&q_start)?;
    let grid = if scenario.planner == PlannerChoice::TsefBaseline {
        let bounds = GridBounds::around(chain.base().as_slice(), chain.reach())?;
        Some(sample_tsef_grid(spec, chain, bounds, &vec![scenario.grid_resolution; chain.task_dim()])?)
    } else {
        None
    };
    let mut runs = Vec::with_capacity(scenario.repeat);
    for i in 0..scenario.repeat {
        let mut params = scenario.params.clone();
        if i > 0 && scenario.planner.is_stochastic() {
            params.rng_seed = derive_seed(params.rng_seed, i as u64);
        }
        let goal_ref = goal.as_ref();
        let (plan, joints) = match scenario.planner {
            PlannerChoice::CsefDescent => {
                let plan = plan_csef_descent(spec, &q_start, &params)?;
                let joints = plan.trajectory.clone();
                (plan, joints)
            }
            PlannerChoice::CsefToGoal => {
                let (q_goal, _) = goal_ref.expect("validated goal");
                let plan = plan_csef_to_goal(spec, &q_start, q_goal, &params)?;
                let joints = plan.trajectory.clone();
                (plan, joints)
            }
            PlannerChoice::TsefBaseline => {
                let (q_goal, p_goal) = goal_ref.expect("validated goal");
                let p0 = chain.forward_kinematics(&q_start)?;
                let options = BaselineOptions { q_start: Some(q_start.clone()), q_goal: Some(q_goal.clone()) };
                let plan =
                    plan_tsef_baseline(spec, chain, &p0, p_goal, grid.as_ref().expect("grid"), &params, &options)?;
                let joints = plan.trajectory.clone();
                (plan, joints)
            }
            PlannerChoice::MinJerk => {
                let (_, p_goal) = goal_ref.expect("validated goal");
                let p0 = chain.forward_kinematics(&q_start)?;
                let n = (scenario.duration / PLAN_DT).round().max(1.0) as usize + 1;
                let started = std::time::Instant::now();
                let hand = plan_min_jerk(&p0, p_goal, scenario.duration, n)?;
                let wall_time = started.elapsed().as_secs_f64();
                let rigid = FollowerModel { compliance: 0.0, comfort_gain: 0.0 };
                let joints = simulate_human_follower(chain, &hand, &rigid, &q_start, None)?;
                (PlanResult { trajectory: hand, status: PlanStatus::Success, failure: None, wall_time }, joints)
            }
        };
        let metrics = compute_metrics(spec, chain, &joints, plan.wall_time, plan.succeeded())?;
        let executed = match &scenario.impedance {
            Some(imp) => {
                let hand = match plan.trajectory.space() {
                    Space::Task => plan.trajectory.clone(),
                    Space::Joint => plan.trajectory.map_points(Space::Task, |q| chain.fk_vector(q)),
                };
                Some(simulate_impedance(imp, hand.first(), &hand, &ForceInput::Zero, None)?.trajectory)
            }
            None => None,
        };
        runs.push(ScenarioRun { repeat: i, plan, joints, metrics, executed });
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "csefplan-scenario v1
name = \"t\"
rng_seed = 3

[chain]
model = \"planar2\"

[ergo]
q_opt = [0.785, -1.047]
radius = 0.5

[start]
joints = [-1.9, 2.2]

[goal]
task = [0.9, 0.9]

[planner]
kind = \"csef_to_goal\"
";

    #[test]
    fn parses_defaults() {
        let s = Scenario::parse(BASE).unwrap();
        assert_eq!(s.chain, KinematicChain::planar_default());
        assert_eq!(s.params.rng_seed, 3);
        assert_eq!(s.repeat, 1);
    }

    #[test]
    fn missing_seed_for_stochastic_planner_is_rejected() {
        let text = BASE.replace("rng_seed = 3\n", "");
        match Scenario::parse(&text).unwrap_err() {
            BenchError::Parse { field, .. } => assert_eq!(field, "rng_seed"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn wrong_length_names_line_and_field() {
        let text = BASE.replace("joints = [-1.9, 2.2]", "joints = [-1.9]");
        match Scenario::parse(&text).unwrap_err() {
            BenchError::Parse { line, field, .. } => assert_eq!((line, field.as_str()), (13, "start.joints")),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn toml_errors_keep_file_lines() {
        let text = BASE.replace("kind = \"csef_to_goal\"", "kind = \"teleport\"");
        match Scenario::parse(&text).unwrap_err() {
            BenchError::Parse { line, .. } => assert_eq!(line, 19),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_header_is_rejected() {
        assert!(matches!(Scenario::parse("name = \"x\"\n"), Err(BenchError::Parse { line: 1, .. })));
    }
}
