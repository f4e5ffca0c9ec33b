//! Second-layer planner: conflict-free grid paths for robots in a
//! time-expanded graph, one leg at a time against a shared reservation table.

mod multi;
mod reservation;

use thiserror::Error;

use crate::domain::{AgentId, Heading, TaskId};
use crate::world::{GridMap, Position, NEIGHBOR_OFFSETS};

pub use multi::{
    is_vacate_cell, plan_all, validate_conflict_free, Conflict, ConflictKind, Leg, LegKind,
    LegTarget, PlanSet, RobotLegs, WAREHOUSE_APRON,
};
pub use reservation::ReservationTable;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum PathError {
    #[error("cell {0} is outside the map or blocked")]
    BadCell(Position),
    #[error("no cell satisfying the goal is reachable from {0}")]
    Unreachable(Position),
    #[error("no conflict-free path from {from} within {budget} steps")]
    Timeout { from: Position, budget: u32 },
    #[error("moving {heading:?} from {from} leaves the map or hits an obstacle")]
    InvalidMove { from: Position, heading: Heading },
}

/// One robot's motion for one leg: `cells[k]` is occupied at step
/// `start_step + k`. The goal is first reached at `arrival`; any cells after
/// that are dwell (waiting for the window, then service).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathPlan {
    pub agent: AgentId,
    pub task: Option<TaskId>,
    pub kind: LegKind,
    pub start_step: u32,
    pub cells: Vec<Position>,
    /// Index into `cells` of the first step at the goal.
    pub arrival: usize,
}

impl PathPlan {
    pub fn end_step(&self) -> u32 {
        self.start_step + self.cells.len() as u32 - 1
    }

    pub fn goal(&self) -> Position {
        self.cells[self.arrival]
    }

    pub fn moves(&self) -> usize {
        self.cells.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

/// Default search budget: four layers per map cell.
pub fn step_budget(map: &GridMap) -> u32 {
    4 * map.area() as u32
}

/// A cell to pass through on the way to the goal, held from arrival until
/// `max(arrival, open_step) + service_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Via {
    pub cell: Position,
    pub open_step: u32,
    pub service_steps: u32,
}

/// A path through a [`Via`]: cells are indexed by step offset, the waypoint
/// is held over `via_arrival..=via_end`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViaPath {
    pub cells: Vec<Position>,
    pub via_arrival: usize,
    pub via_end: usize,
}

/// Earliest-arrival path from `start` (occupied at `start_step`) to a cell
/// accepted by `goal` where the robot can stay indefinitely. Among equally
/// early paths the one with the fewest moves wins; remaining ties prefer
/// waiting, then the N, E, S, W predecessor.
pub fn plan_single_where(
    map: &GridMap,
    table: &ReservationTable,
    start: Position,
    start_step: u32,
    goal: &dyn Fn(Position) -> bool,
    budget: u32,
) -> Result<Vec<Position>, PathError> {
    search(map, table, start, start_step, None, goal, budget).map(|p| p.cells)
}

/// Like [`plan_single_where`] but visiting `via` first. The waypoint itself
/// only has to be free while it is held, so a robot may pass through a cell
/// that someone else will use later.
pub fn plan_via(
    map: &GridMap,
    table: &ReservationTable,
    start: Position,
    start_step: u32,
    via: Via,
    goal: &dyn Fn(Position) -> bool,
    budget: u32,
) -> Result<ViaPath, PathError> {
    if !map.is_passable(via.cell) {
        return Err(PathError::BadCell(via.cell));
    }
    search(map, table, start, start_step, Some(via), goal, budget)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pred {
    None,
    Start,
    Step(u32),
    /// Held the waypoint since this layer, switching to the second phase.
    Hold(u32),
}

fn search(
    map: &GridMap,
    table: &ReservationTable,
    start: Position,
    start_step: u32,
    via: Option<Via>,
    goal: &dyn Fn(Position) -> bool,
    budget: u32,
) -> Result<ViaPath, PathError> {
    if !map.is_passable(start) {
        return Err(PathError::BadCell(start));
    }
    let area = map.area();
    let reachable = map.distance_field(start);
    let via_reachable = via.is_none_or(|v| reachable[map.index(v.cell)].is_some());
    if !via_reachable
        || !map
            .passable_positions()
            .any(|p| goal(p) && reachable[map.index(p)].is_some())
    {
        return Err(PathError::Unreachable(start));
    }

    // states: phase * area + cell; phase 1 is after the waypoint
    let first_phase = if via.is_some() { 0 } else { 1 };
    let mut current: Vec<Option<u32>> = vec![None; 2 * area];
    let mut preds: Vec<Vec<Pred>> = vec![vec![Pred::None; 2 * area]];
    current[first_phase * area + map.index(start)] = Some(0);
    preds[0][first_phase * area + map.index(start)] = Pred::Start;
    // phase-1 arrivals at the waypoint once its hold ends: layer -> (moves, from)
    let mut released: std::collections::BTreeMap<u32, Vec<(u32, u32)>> = Default::default();

    let settle =
        |k: u32,
         current: &mut Vec<Option<u32>>,
         pred: &mut Vec<Pred>,
         released: &mut std::collections::BTreeMap<u32, Vec<(u32, u32)>>| {
            let Some(v) = via else { return };
            let vi = map.index(v.cell);
            if let Some((m, from)) = released.remove(&k).and_then(|r| r.into_iter().min()) {
                if current[area + vi].is_none_or(|b| m < b) {
                    current[area + vi] = Some(m);
                    pred[area + vi] = Pred::Hold(from);
                }
            }
            let Some(m) = current[vi] else { return };
            let t = start_step + k;
            let end = t.max(v.open_step) + v.service_steps;
            if !(t..end).all(|s| table.move_free(v.cell, v.cell, s)) {
                return;
            }
            if end == t {
                if current[area + vi].is_none_or(|b| m < b) {
                    current[area + vi] = Some(m);
                    pred[area + vi] = Pred::Hold(k);
                }
            } else {
                released.entry(end - start_step).or_default().push((m, k));
            }
        };
    let finish = |k: u32, current: &[Option<u32>]| -> Option<usize> {
        let t = start_step + k;
        map.passable_positions()
            .filter(|&p| goal(p) && table.can_rest(p, t))
            .filter_map(|p| current[area + map.index(p)].map(|m| (m, area + map.index(p))))
            .min()
            .map(|(_, s)| s)
    };

    let backtrack = |mut k: usize, mut s: usize, preds: &[Vec<Pred>]| -> ViaPath {
        let mut cells = vec![map.position(s % area)];
        let (mut via_arrival, mut via_end) = (0, 0);
        loop {
            match preds[k][s] {
                Pred::Start | Pred::None => break,
                Pred::Step(q) => {
                    k -= 1;
                    s = q as usize;
                    cells.push(map.position(s % area));
                }
                Pred::Hold(from) => {
                    let from = from as usize;
                    via_end = k;
                    via_arrival = from;
                    for _ in from..k {
                        cells.push(map.position(s % area));
                    }
                    k = from;
                    s -= area;
                }
            }
        }
        cells.reverse();
        ViaPath {
            cells,
            via_arrival,
            via_end,
        }
    };

    settle(0, &mut current, &mut preds[0], &mut released);
    if let Some(s) = finish(0, &current) {
        return Ok(backtrack(0, s, &preds));
    }

    for k in 1..=budget {
        let t_prev = start_step + k - 1;
        let mut next: Vec<Option<u32>> = vec![None; 2 * area];
        let mut pred = vec![Pred::None; 2 * area];
        for phase in 0..2 {
            for p in map.passable_positions() {
                let i = phase * area + map.index(p);
                let mut best: Option<(u32, u32)> = None;
                // stay, then arrivals from the N, E, S, W neighbours
                let mut consider = |q: Position, cost: u32| {
                    let qi = phase * area + map.index(q);
                    if let Some(m) = current[qi] {
                        if table.move_free(q, p, t_prev) && best.is_none_or(|(b, _)| m + cost < b) {
                            best = Some((m + cost, qi as u32));
                        }
                    }
                };
                consider(p, 0);
                for (dc, dr) in NEIGHBOR_OFFSETS {
                    if let Some(q) = p.offset(dc, dr) {
                        if map.is_passable(q) {
                            consider(q, 1);
                        }
                    }
                }
                if let Some((m, q)) = best {
                    next[i] = Some(m);
                    pred[i] = Pred::Step(q);
                }
            }
        }
        settle(k, &mut next, &mut pred, &mut released);
        preds.push(pred);
        current = next;

        if let Some(s) = finish(k, &current) {
            return Ok(backtrack(k as usize, s, &preds));
        }
        if current.iter().all(Option::is_none) && released.is_empty() {
            break;
        }
    }
    Err(PathError::Timeout {
        from: start,
        budget,
    })
}

/// Single-goal form of [`plan_single_where`].
pub fn plan_single(
    map: &GridMap,
    table: &ReservationTable,
    start: Position,
    start_step: u32,
    goal: Position,
    budget: u32,
) -> Result<Vec<Position>, PathError> {
    if !map.is_passable(goal) {
        return Err(PathError::BadCell(goal));
    }
    plan_single_where(map, table, start, start_step, &|p| p == goal, budget)
}

/// One cell of motion along `heading`: east, north, west or south for
/// θ = 0, π/2, π, -π/2.
pub fn advance_pose(map: &GridMap, at: Position, heading: Heading) -> Result<Position, PathError> {
    let (dc, dr) = heading.offset();
    at.offset(dc, dr)
        .filter(|&p| map.is_passable(p))
        .ok_or(PathError::InvalidMove { from: at, heading })
}

/// Heading that turns `at` into `next`; kept unchanged when standing still.
pub fn heading_towards(at: Position, heading: Heading, next: Position) -> Heading {
    Heading::between(at, next).unwrap_or(heading)
}
