use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{check_chain, check_config, PlanError, PlanResult, PlanStatus, PlannerParams, Result, PLAN_DT};
use crate::field::ErgoSpec;
use crate::grid::FieldGrid;
use crate::kinematics::{ChainModel, IkConfig, JointConfig, KinematicChain, TaskPoint};
use crate::trajectory::{Space, Trajectory};
use crate::tsef::tsef_eval_unchecked;

/// Largest number of expanded lattice nodes before the search gives up.
pub const NODE_BUDGET: usize = 1_000_000;
/// A joint jump above this between consecutive waypoints is a branch switch.
pub const CONTINUITY_LIMIT: f64 = 0.35;
const SMOOTHING_PASSES: usize = 20;
const MAX_REFINE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    InfeasibleEndpoint,
    NoPath,
    BudgetExceeded,
    UnreachableWaypoint,
    BranchDiscontinuity,
    WrongBranch,
}

impl FailureReason {
    pub fn name(self) -> &'static str {
        match self {
            FailureReason::InfeasibleEndpoint => "infeasible_endpoint",
            FailureReason::NoPath => "no_path",
            FailureReason::BudgetExceeded => "budget_exceeded",
            FailureReason::UnreachableWaypoint => "unreachable_waypoint",
            FailureReason::BranchDiscontinuity => "branch_discontinuity",
            FailureReason::WrongBranch => "wrong_branch",
        }
    }

    fn status(self) -> PlanStatus {
        match self {
            FailureReason::BudgetExceeded => PlanStatus::MaxStepsExceeded,
            _ => PlanStatus::Infeasible,
        }
    }
}

/// Joint-space context for the task-space baseline.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaselineOptions {
    /// Posture at `p0`; defaults to the least-cost branch there.
    pub q_start: Option<JointConfig>,
    /// Target posture; when given, success also requires the recovered
    /// terminal posture to lie within `goal_tol` of it.
    pub q_goal: Option<JointConfig>,
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    f: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn neighbour_offsets(dim: usize) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..dim {
        out = out.into_iter().flat_map(|v| (-1..=1).map(move |d| [v.clone(), vec![d]].concat())).collect();
    }
    out.retain(|v| v.iter().any(|&d| d != 0));
    out
}

enum Search {
    Found(Vec<usize>),
    NoPath,
    Budget,
}

/// A* over the lattice; edge cost is length times one plus the mean field
/// value of its end nodes. Unreachable nodes are never entered.
fn search(grid: &FieldGrid, start: usize, goal: usize) -> Search {
    let dim = grid.dim();
    let offsets = neighbour_offsets(dim);
    let spacing: Vec<f64> = (0..dim).map(|k| grid.spacing(k)).collect();
    let res: Vec<i64> = grid.resolution().iter().map(|&n| n as i64).collect();
    let goal_pos = grid.node_position(goal);
    let heuristic = |idx: usize| (grid.node_position(idx) - &goal_pos).norm();
    let mut g_cost = vec![f64::INFINITY; grid.len()];
    let mut parent = vec![usize::MAX; grid.len()];
    let mut closed = vec![false; grid.len()];
    let mut open = BinaryHeap::new();
    g_cost[start] = 0.0;
    open.push(Entry { f: heuristic(start), node: start });
    let mut expanded = 0usize;
    while let Some(Entry { node, .. }) = open.pop() {
        if closed[node] {
            continue;
        }
        if node == goal {
            let mut path = vec![goal];
            let mut cur = goal;
            while cur != start {
                cur = parent[cur];
                path.push(cur);
            }
            path.reverse();
            return Search::Found(path);
        }
        closed[node] = true;
        expanded += 1;
        if expanded > NODE_BUDGET {
            return Search::Budget;
        }
        let multi = grid.multi_index(node);
        for off in &offsets {
            let mut next = Vec::with_capacity(dim);
            let mut inside = true;
            let mut length2 = 0.0;
            for k in 0..dim {
                let c = multi[k] as i64 + off[k];
                if c < 0 || c >= res[k] {
                    inside = false;
                    break;
                }
                next.push(c as usize);
                length2 += (off[k] as f64 * spacing[k]).powi(2);
            }
            if !inside {
                continue;
            }
            let nb = grid.flat_index(&next);
            if closed[nb] || !grid.is_reachable(nb) {
                continue;
            }
            let cost = g_cost[node] + length2.sqrt() * (1.0 + 0.5 * (grid.value(node) + grid.value(nb)));
            if cost < g_cost[nb] {
                g_cost[nb] = cost;
                parent[nb] = node;
                open.push(Entry { f: cost + heuristic(nb), node: nb });
            }
        }
    }
    Search::NoPath
}

fn within_shell(chain: &KinematicChain, p: &DVector<f64>) -> bool {
    let r = (p - &**chain.base()).norm();
    r <= chain.reach() && r >= chain.inner_reach()
}

/// Laplacian smoothing with fixed endpoints; a move is kept only if the new
/// waypoint stays on reachable lattice territory.
fn smooth(grid: &FieldGrid, chain: &KinematicChain, path: &mut [DVector<f64>]) {
    if path.len() < 3 {
        return;
    }
    for _ in 0..SMOOTHING_PASSES {
        for i in 1..path.len() - 1 {
            let target = (&path[i - 1] + &path[i + 1]) * 0.5;
            let moved = &path[i] + (target - &path[i]) * 0.5;
            let ok = within_shell(chain, &moved)
                && grid.nearest_node(moved.as_slice()).is_some_and(|n| grid.is_reachable(n));
            if ok {
                path[i] = moved;
            }
        }
    }
}

/// In-limit inverse kinematics of `p` closest to `prev`.
fn recover(chain: &KinematicChain, p: &DVector<f64>, prev: &DVector<f64>) -> Option<DVector<f64>> {
    match chain.model() {
        ChainModel::Planar2 => chain
            .planar_branches(p[0], p[1])
            .into_iter()
            .map(|q| DVector::from_column_slice(&q))
            .filter(|q| chain.limits().contains(q, 0.0))
            .min_by(|a, b| (a - prev).norm().total_cmp(&(b - prev).norm())),
        ChainModel::UpperLimb4 => chain
            .ik_numeric_with(&TaskPoint::from(p.clone()), &JointConfig::from(prev.clone()), 1e-10, &IkConfig::default())
            .ok()
            .map(|o| o.q.into_vector()),
    }
}

/// Task-space planning over a sampled field grid with branch-continuous
/// joint recovery.
///
/// The lattice path from the node nearest `p0` to the node nearest `p_goal`
/// is smoothed, pinned to the exact endpoints, and each segment is lifted to
/// joint space by inverse kinematics continuous with the previous posture,
/// subdivided until no joint moves more than the step bound. A lift that
/// needs a jump above the continuity limit fails, as does a path that ends on
/// a different branch than `q_goal`.
pub fn plan_tsef_baseline(
    spec: &ErgoSpec,
    chain: &KinematicChain,
    p0: &TaskPoint,
    p_goal: &TaskPoint,
    grid: &FieldGrid,
    params: &PlannerParams,
    options: &BaselineOptions,
) -> Result<PlanResult> {
    let started = Instant::now();
    params.validate()?;
    check_chain(spec, chain)?;
    if grid.dim() != chain.task_dim() {
        return Err(PlanError::Dimension { what: "grid", expected: chain.task_dim(), found: grid.dim() });
    }
    for (what, p) in [("start point", p0), ("goal point", p_goal)] {
        if p.dim() != chain.task_dim() {
            return Err(PlanError::Dimension { what, expected: chain.task_dim(), found: p.dim() });
        }
        if !grid.bounds().contains(p.as_slice()) {
            return Err(PlanError::InvalidParams(format!("{what} lies outside the grid bounds")));
        }
    }
    if let Some(q) = &options.q_goal {
        check_config(spec, q, "goal posture")?;
    }

    let fail = |points: Vec<DVector<f64>>, reason: FailureReason| -> Result<PlanResult> {
        Ok(PlanResult {
            trajectory: Trajectory::uniform(Space::Joint, points, PLAN_DT)?,
            status: reason.status(),
            failure: Some(reason),
            wall_time: started.elapsed().as_secs_f64(),
        })
    };

    let q_start = match &options.q_start {
        Some(q) => {
            check_config(spec, q, "start posture")?;
            if (chain.fk_vector(q) - &**p0).norm() > 1e-6 {
                return Err(PlanError::InvalidParams("start posture does not reach the start point".into()));
            }
            q.as_vector().clone()
        }
        None => match tsef_eval_unchecked(spec, chain, p0).q_star {
            Some(q) => q.into_vector(),
            None => return fail(vec![DVector::zeros(chain.dof())], FailureReason::InfeasibleEndpoint),
        },
    };

    let start_node = grid.nearest_node(p0.as_slice()).expect("bounds checked");
    let goal_node = grid.nearest_node(p_goal.as_slice()).expect("bounds checked");
    if !grid.is_reachable(start_node) || !grid.is_reachable(goal_node) || !within_shell(chain, p_goal) {
        return fail(vec![q_start], FailureReason::InfeasibleEndpoint);
    }

    let nodes = match search(grid, start_node, goal_node) {
        Search::Found(nodes) => nodes,
        Search::NoPath => return fail(vec![q_start], FailureReason::NoPath),
        Search::Budget => return fail(vec![q_start], FailureReason::BudgetExceeded),
    };
    let mut path: Vec<DVector<f64>> = nodes.iter().map(|&n| grid.node_position(n)).collect();
    path[0] = p0.as_vector().clone();
    let last = path.len() - 1;
    if last == 0 {
        path.push(p_goal.as_vector().clone());
    } else {
        path[last] = p_goal.as_vector().clone();
    }
    smooth(grid, chain, &mut path);

    let bound = params.step_bound();
    let mut points = vec![q_start.clone()];
    let mut q = q_start;
    for w in path.windows(2) {
        let (from, to) = (&w[0], &w[1]);
        if from == to {
            continue;
        }
        let Some(end) = recover(chain, to, &q) else {
            return fail(points, FailureReason::UnreachableWaypoint);
        };
        let jump = (&end - &q).amax();
        if jump > CONTINUITY_LIMIT {
            return fail(points, FailureReason::BranchDiscontinuity);
        }
        let mut pieces = ((jump / params.step_size).ceil() as usize).max(1);
        let segment = loop {
            let mut seg = Vec::with_capacity(pieces);
            let mut prev = q.clone();
            let mut ok = true;
            for k in 1..=pieces {
                let s = k as f64 / pieces as f64;
                let p = from + (to - from) * s;
                match recover(chain, &p, &prev) {
                    Some(next) if (&next - &prev).amax() <= bound => {
                        prev = next.clone();
                        seg.push(next);
                    }
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                break Some(seg);
            }
            if pieces >= MAX_REFINE * ((jump / params.step_size).ceil() as usize).max(1) {
                break None;
            }
            pieces *= 2;
        };
        let Some(segment) = segment else {
            return fail(points, FailureReason::BranchDiscontinuity);
        };
        q = segment.last().expect("at least one piece").clone();
        points.extend(segment);
    }

    if let Some(qg) = &options.q_goal {
        if (&q - qg.as_vector()).norm() > params.goal_tol {
            return fail(points, FailureReason::WrongBranch);
        }
    }
    Ok(PlanResult {
        trajectory: Trajectory::uniform(Space::Joint, points, PLAN_DT)?,
        status: PlanStatus::Success,
        failure: None,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbour_counts() {
        assert_eq!(neighbour_offsets(2).len(), 8);
        assert_eq!(neighbour_offsets(3).len(), 26);
    }
}
