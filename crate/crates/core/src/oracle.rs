//! Exhaustive reference solvers for small instances, used by the `oracle`
//! command to cross-check the production solvers.

use std::collections::HashMap;

use thiserror::Error;

use crate::allocation::{
    check_time_feasibility, solve_delivery_allocation, solve_mode_allocation,
    solve_pickup_allocation, AllocationError, CostParams, Instance,
};
use crate::domain::{AgentKind, TaskStatus};
use crate::pathfinding::{plan_all, step_budget, Leg, LegKind, LegTarget, RobotLegs};
use crate::scenario::{ScenarioError, ScenarioFile};
use crate::world::{GridMap, Position, NEIGHBOR_OFFSETS};

pub const MAX_AGENTS: usize = 3;
pub const MAX_TASKS: usize = 4;
pub const MAX_SIDE: u16 = 8;
/// Layers explored by the joint two-robot path search.
pub const JOINT_HORIZON: u32 = 20;
pub const MATCH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error("instance exceeds the oracle limits: {0}")]
    TooLarge(String),
    #[error("{0}")]
    Unsupported(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleKind {
    Pickup,
    Delivery,
    Mode,
    Path,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleOutcome {
    pub solver: f64,
    pub brute_force: f64,
    pub matches: bool,
}

/// Every task → {unassigned, agent} map, with every visiting order per agent.
pub fn brute_force_pickup(inst: &Instance, agents: &[usize]) -> f64 {
    let n = inst.pickups.len();
    let mut best = f64::INFINITY;
    let mut owner = vec![None; n];
    assign_pickups(inst, agents, 0, &mut owner, &mut best);
    best
}

fn assign_pickups(
    inst: &Instance,
    agents: &[usize],
    j: usize,
    owner: &mut Vec<Option<usize>>,
    best: &mut f64,
) {
    if j == owner.len() {
        let mut total = 0.0;
        let mut assigned = vec![false; owner.len()];
        for &a in agents {
            let mine: Vec<usize> = (0..owner.len()).filter(|&k| owner[k] == Some(a)).collect();
            if mine.is_empty() {
                continue;
            }
            let agent = &inst.agents[a];
            let load: f64 = mine.iter().map(|&k| inst.pickups[k].load).sum();
            if agent.load + load > agent.capacity + 1e-9
                || mine.iter().any(|&k| !inst.pickups[k].allows(agent.kind))
            {
                return;
            }
            let mut chain_best = f64::INFINITY;
            for_each_permutation(&mine, &mut |perm| {
                let legs = inst.pickup_legs(a, perm);
                if check_time_feasibility(&legs, agent.ready_at, inst.params.horizon_end).is_ok() {
                    chain_best = chain_best.min(inst.pickup_chain_cost(a, perm));
                }
            });
            if !chain_best.is_finite() {
                return;
            }
            total += chain_best;
            for k in mine {
                assigned[k] = true;
            }
        }
        for (k, t) in inst.pickups.iter().enumerate() {
            if !assigned[k] {
                total += inst.pickup_penalty(t);
            }
        }
        *best = best.min(total);
        return;
    }
    owner[j] = None;
    assign_pickups(inst, agents, j + 1, owner, best);
    for &a in agents {
        owner[j] = Some(a);
        assign_pickups(inst, agents, j + 1, owner, best);
    }
    owner[j] = None;
}

fn for_each_permutation(items: &[usize], f: &mut dyn FnMut(&[usize])) {
    fn go(items: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
        if k == items.len() {
            f(items);
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            go(items, k + 1, f);
            items.swap(k, i);
        }
    }
    let mut v = items.to_vec();
    go(&mut v, 0, f);
}

/// Every injective partial map from agents to delivery tasks.
pub fn brute_force_delivery(inst: &Instance, agents: &[usize]) -> f64 {
    fn go(
        inst: &Instance,
        agents: &[usize],
        k: usize,
        pairs: &mut Vec<(usize, usize)>,
        best: &mut f64,
    ) {
        if k == agents.len() {
            *best = best.min(inst.delivery_objective(pairs));
            return;
        }
        go(inst, agents, k + 1, pairs, best);
        for j in 0..inst.deliveries.len() {
            if pairs.iter().any(|&(_, q)| q == j) || inst.delivery_start(agents[k], j).is_none() {
                continue;
            }
            pairs.push((agents[k], j));
            go(inst, agents, k + 1, pairs, best);
            pairs.pop();
        }
    }
    let mut best = f64::INFINITY;
    go(inst, agents, 0, &mut Vec::new(), &mut best);
    best
}

/// Every mode vector over agents above their energy threshold.
pub fn brute_force_mode(inst: &Instance) -> f64 {
    let free = inst.free_agents();
    let mut best = f64::INFINITY;
    for v in 0..(1u32 << free.len()) {
        let (mut pickup, mut delivery) = (Vec::new(), Vec::new());
        for (bit, &a) in free.iter().enumerate() {
            if v & (1 << bit) == 0 {
                pickup.push(a);
            } else {
                delivery.push(a);
            }
        }
        let f = brute_force_pickup(inst, &pickup)
            + inst.params.gamma * brute_force_delivery(inst, &delivery);
        best = best.min(f);
    }
    best
}

/// Minimum total arrival step for two robots moving to their goals under the
/// same motion rules as the planner: no shared cells, and no robot within a
/// cell during the two steps before another robot enters it. `None` when no
/// joint plan exists within `horizon` steps.
pub fn joint_two_robot_cost(
    map: &GridMap,
    starts: [Position; 2],
    goals: [Position; 2],
    horizon: u32,
) -> Option<u32> {
    // (a, b, a one step ago, b one step ago, a done, b done) -> steps not done
    type State = (
        Position,
        Position,
        Option<Position>,
        Option<Position>,
        bool,
        bool,
    );
    let moves = |p: Position| -> Vec<Position> {
        let mut out = vec![p];
        out.extend(
            NEIGHBOR_OFFSETS
                .iter()
                .filter_map(|&(dc, dr)| p.offset(dc, dr))
                .filter(|&q| map.in_bounds(q) && map.is_passable(q)),
        );
        out
    };
    let mut layer: HashMap<State, u32> = HashMap::new();
    let done = |p: Position, g: Position| p == g;
    let mut best: Option<u32> = None;
    for (fa, fb) in [(false, false), (true, false), (false, true), (true, true)] {
        if (fa && !done(starts[0], goals[0])) || (fb && !done(starts[1], goals[1])) {
            continue;
        }
        layer.insert((starts[0], starts[1], None, None, fa, fb), 0);
    }
    for _ in 0..=horizon {
        for (s, &cost) in &layer {
            if s.4 && s.5 {
                best = Some(best.map_or(cost, |b| b.min(cost)));
            }
        }
        let mut next: HashMap<State, u32> = HashMap::new();
        for (&(a, b, pa, pb, fa, fb), &cost) in &layer {
            let a_moves = if fa { vec![a] } else { moves(a) };
            let b_moves = if fb { vec![b] } else { moves(b) };
            for &na in &a_moves {
                for &nb in &b_moves {
                    if na == nb {
                        continue;
                    }
                    // an entry forbids the other robot there in the two steps before
                    if na != a && (nb == na || b == na || pb == Some(na)) {
                        continue;
                    }
                    if nb != b && (na == nb || a == nb || pa == Some(nb)) {
                        continue;
                    }
                    let step_cost = cost + u32::from(!fa) + u32::from(!fb);
                    for (ga, gb) in [
                        (fa, fb),
                        (fa || na == goals[0], fb),
                        (fa, fb || nb == goals[1]),
                        (fa || na == goals[0], fb || nb == goals[1]),
                    ] {
                        let key = (na, nb, Some(a), Some(b), ga, gb);
                        let e = next.entry(key).or_insert(u32::MAX);
                        *e = (*e).min(step_cost);
                    }
                }
            }
        }
        layer = next;
    }
    best
}

fn check_caps(file: &ScenarioFile) -> Result<(), OracleError> {
    if file.agents.len() > MAX_AGENTS {
        return Err(OracleError::TooLarge(format!(
            "{} agents (at most {MAX_AGENTS})",
            file.agents.len()
        )));
    }
    if file.tasks.len() > MAX_TASKS {
        return Err(OracleError::TooLarge(format!(
            "{} tasks (at most {MAX_TASKS})",
            file.tasks.len()
        )));
    }
    let h = file.map.rows.len();
    let w = file
        .map
        .rows
        .iter()
        .map(|r| r.chars().count())
        .max()
        .unwrap_or(0);
    if w > usize::from(MAX_SIDE) || h > usize::from(MAX_SIDE) {
        return Err(OracleError::TooLarge(format!(
            "{w}x{h} map (at most {MAX_SIDE}x{MAX_SIDE})"
        )));
    }
    Ok(())
}

/// Builds the allocation instance at time zero with every task open.
pub fn instance_from_file(file: &ScenarioFile) -> Result<Instance, OracleError> {
    let scenario = file.to_scenario()?;
    let agents: Vec<_> = scenario.agents.iter().map(|a| (a.clone(), 0.0)).collect();
    let mut tasks = scenario.tasks.clone();
    for t in &mut tasks {
        t.status = TaskStatus::Open;
    }
    let p = &scenario.params;
    let cost = CostParams {
        alpha: p.alpha,
        gamma: p.gamma,
        big_m: p.big_m,
        horizon_end: p.horizon,
    };
    Ok(Instance::build(&scenario.map, &agents, &tasks, cost)?)
}

/// Runs the production solver and the exhaustive reference on one instance.
pub fn compare_instance(
    file: &ScenarioFile,
    kind: OracleKind,
) -> Result<OracleOutcome, OracleError> {
    check_caps(file)?;
    let (solver, brute_force) = match kind {
        OracleKind::Pickup | OracleKind::Delivery | OracleKind::Mode => {
            let inst = instance_from_file(file)?;
            let all: Vec<usize> = (0..inst.agents.len()).collect();
            match kind {
                OracleKind::Pickup => (
                    solve_pickup_allocation(&inst, &all).objective,
                    brute_force_pickup(&inst, &all),
                ),
                OracleKind::Delivery => (
                    solve_delivery_allocation(&inst, &all).objective,
                    brute_force_delivery(&inst, &all),
                ),
                _ => (
                    solve_mode_allocation(&inst).objective,
                    brute_force_mode(&inst),
                ),
            }
        }
        OracleKind::Path => path_costs(file)?,
    };
    let matches = if solver.is_finite() && brute_force.is_finite() {
        (solver - brute_force).abs() <= MATCH_TOLERANCE * brute_force.abs().max(1.0)
    } else {
        solver == brute_force
    };
    Ok(OracleOutcome {
        solver,
        brute_force,
        matches,
    })
}

fn path_costs(file: &ScenarioFile) -> Result<(f64, f64), OracleError> {
    let scenario = file.to_scenario()?;
    let robots: Vec<_> = file
        .agents
        .iter()
        .filter(|a| a.kind == AgentKind::Robot)
        .collect();
    if robots.len() != 2 {
        return Err(OracleError::Unsupported(
            "path oracle needs exactly two robots".into(),
        ));
    }
    let mut starts = [Position::new(0, 0); 2];
    let mut goals = [Position::new(0, 0); 2];
    let mut legs = Vec::new();
    for (k, a) in robots.iter().enumerate() {
        let goal = a
            .goal
            .ok_or_else(|| OracleError::Unsupported(format!("robot {} has no goal", a.id)))?;
        starts[k] = Position::new(a.col, a.row);
        goals[k] = Position::new(goal[0], goal[1]);
        legs.push(RobotLegs {
            agent: a.id,
            start: starts[k],
            legs: vec![Leg {
                agent: a.id,
                task: None,
                kind: LegKind::Warehouse,
                target: LegTarget::Cell(goals[k]),
                open_step: 0,
                close: None,
                service_steps: 0,
            }],
        });
    }
    let set = plan_all(&scenario.map, &legs, &[], 0, step_budget(&scenario.map));
    let solver = if set.failed.is_empty() {
        set.plans.iter().map(|p| p.arrival as f64).sum()
    } else {
        f64::INFINITY
    };
    let brute = joint_two_robot_cost(&scenario.map, starts, goals, JOINT_HORIZON)
        .map_or(f64::INFINITY, f64::from);
    Ok((solver, brute))
}
