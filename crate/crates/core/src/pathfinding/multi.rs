use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::domain::{AgentId, TaskId};
use crate::world::{CellKind, GridMap, Position};

use super::{plan_single_where, plan_via, PathError, PathPlan, ReservationTable, Via};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LegKind {
    Pickup,
    DeliveryOrigin,
    DeliveryDestination,
    Warehouse,
    /// Clear a non-road cell for the nearest free road cell.
    Vacate,
    /// Stay put to finish a service already under way.
    Hold,
}

impl LegKind {
    pub fn label(self) -> &'static str {
        match self {
            LegKind::Pickup => "pickup",
            LegKind::DeliveryOrigin => "delivery_origin",
            LegKind::DeliveryDestination => "delivery_destination",
            LegKind::Warehouse => "warehouse",
            LegKind::Vacate => "vacate",
            LegKind::Hold => "hold",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LegTarget {
    Cell(Position),
    /// Any road cell not next to the warehouse.
    Vacate,
}

/// A stop a robot must reach, then dwell at.
#[derive(Clone, Debug, PartialEq)]
pub struct Leg {
    pub agent: AgentId,
    pub task: Option<TaskId>,
    pub kind: LegKind,
    pub target: LegTarget,
    /// Earliest step at which service may begin.
    pub open_step: u32,
    /// Window close in seconds; legs closing sooner are planned first.
    pub close: Option<f64>,
    pub service_steps: u32,
}

/// A robot's start cell (occupied at the planning step) and its legs in
/// visiting order.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotLegs {
    pub agent: AgentId,
    pub start: Position,
    pub legs: Vec<Leg>,
}

#[derive(Clone, Debug, Default)]
pub struct PlanSet {
    /// In planning order.
    pub plans: Vec<PathPlan>,
    /// Robots whose next leg could not be planned; they hold position after
    /// their last successful leg.
    pub failed: Vec<(AgentId, PathError)>,
    pub table: ReservationTable,
}

impl PlanSet {
    /// One robot's plans in execution order.
    pub fn plans_for(&self, agent: AgentId) -> Vec<&PathPlan> {
        let mut out: Vec<&PathPlan> = self.plans.iter().filter(|p| p.agent == agent).collect();
        out.sort_by_key(|p| p.start_step);
        out
    }
}

/// Cells this close to the warehouse are kept clear so its entrance never
/// gets walled in by idle agents.
pub const WAREHOUSE_APRON: u32 = 2;

/// Where an idle agent may rest: a road cell outside the warehouse apron.
pub fn is_vacate_cell(map: &GridMap, p: Position) -> bool {
    map.kind(p) == Some(CellKind::Road) && p.manhattan(map.warehouse()) > WAREHOUSE_APRON
}

/// Pads a single-leg path with the dwell for the leg's window and service.
fn dwell(leg: &Leg, mut cells: Vec<Position>, start_step: u32) -> Vec<(Leg, Vec<Position>, usize)> {
    let arrival = cells.len() - 1;
    let arrival_step = start_step + arrival as u32;
    let end_step = arrival_step.max(leg.open_step) + leg.service_steps;
    let goal = cells[arrival];
    cells.extend(std::iter::repeat_n(
        goal,
        (end_step - arrival_step) as usize,
    ));
    vec![(leg.clone(), cells, arrival)]
}

fn leg_order(
    a: &(Option<f64>, Option<TaskId>, AgentId),
    b: &(Option<f64>, Option<TaskId>, AgentId),
) -> Ordering {
    let close = |c: Option<f64>| c.unwrap_or(f64::INFINITY);
    let task = |t: Option<TaskId>| t.map_or(u64::MAX, u64::from);
    close(a.0)
        .total_cmp(&close(b.0))
        .then(task(a.1).cmp(&task(b.1)))
        .then(a.2.cmp(&b.2))
}

/// Plans every robot's legs against one reservation table. Static cells are
/// parked up front and every robot start is reserved at `now_step`; legs are
/// then taken one at a time, soonest-closing window first (then task id, then
/// robot id), each from the end of that robot's previous leg.
///
/// A robot that cannot plan its first leg is moved ahead of everyone else and
/// the pass is repeated; if it still fails it becomes a static obstacle. The
/// result is conflict-free by construction.
pub fn plan_all(
    map: &GridMap,
    robots: &[RobotLegs],
    static_cells: &[Position],
    now_step: u32,
    budget: u32,
) -> PlanSet {
    let mut frozen: Vec<(AgentId, PathError)> = Vec::new();
    let mut promoted: Vec<AgentId> = Vec::new();
    loop {
        let mut set = plan_pass(
            map,
            robots,
            static_cells,
            &frozen,
            &promoted,
            now_step,
            budget,
        );
        let stuck: Vec<(AgentId, PathError)> = set
            .failed
            .iter()
            .filter(|(a, _)| {
                !frozen.iter().any(|(f, _)| f == a) && !set.plans.iter().any(|p| p.agent == *a)
            })
            .cloned()
            .collect();
        if stuck.is_empty() {
            set.failed.sort_by_key(|(a, _)| *a);
            return set;
        }
        // one robot at a time: first give it priority, then give up on it
        let (agent, _) = stuck[0];
        if promoted.contains(&agent) {
            frozen.push(stuck[0].clone());
        } else {
            promoted.push(agent);
        }
    }
}

fn plan_pass(
    map: &GridMap,
    robots: &[RobotLegs],
    static_cells: &[Position],
    frozen: &[(AgentId, PathError)],
    promoted: &[AgentId],
    now_step: u32,
    budget: u32,
) -> PlanSet {
    let mut table = ReservationTable::new();
    for &p in static_cells {
        table.park(p, now_step);
    }
    let mut set = PlanSet {
        failed: frozen.to_vec(),
        ..PlanSet::default()
    };
    let mut tails: BTreeMap<AgentId, (Position, u32)> = BTreeMap::new();
    for r in robots {
        if frozen.iter().any(|(a, _)| *a == r.agent) || r.legs.is_empty() {
            table.park(r.start, now_step);
        } else {
            table.reserve_vertex(r.start, now_step);
        }
        tails.insert(r.agent, (r.start, now_step));
    }
    let mut next_leg: BTreeMap<AgentId, usize> = robots.iter().map(|r| (r.agent, 0)).collect();
    // what each robot holds in the table, lifted while it plans its next leg:
    // clearance is kept between robots, not against oneself
    let mut held: BTreeMap<AgentId, Vec<(Vec<Position>, u32)>> = BTreeMap::new();
    for r in robots {
        if !frozen.iter().any(|(a, _)| *a == r.agent) && !r.legs.is_empty() {
            held.entry(r.agent)
                .or_default()
                .push((vec![r.start], now_step));
        }
    }

    loop {
        let pick = robots
            .iter()
            .filter(|r| !set.failed.iter().any(|(a, _)| *a == r.agent))
            .filter_map(|r| r.legs.get(next_leg[&r.agent]).map(|l| (r, l)))
            .min_by(|(_, x), (_, y)| {
                let rank = |a: AgentId| promoted.iter().position(|&p| p == a).unwrap_or(usize::MAX);
                rank(x.agent).cmp(&rank(y.agent)).then_with(|| {
                    leg_order(&(x.close, x.task, x.agent), &(y.close, y.task, y.agent))
                })
            });
        let Some((robot, leg)) = pick else { break };
        let index = next_leg[&robot.agent];
        // a stop followed by a vacate leg is planned in one go, so the stop
        // itself need not stay free after the robot leaves it
        let then_vacate = matches!(leg.target, LegTarget::Cell(_))
            && robot
                .legs
                .get(index + 1)
                .is_some_and(|l| l.target == LegTarget::Vacate);
        *next_leg.get_mut(&robot.agent).expect("known robot") += if then_vacate { 2 } else { 1 };

        let (tail, tail_step) = tails[&robot.agent];
        for (cells, start) in held.get(&robot.agent).into_iter().flatten() {
            table.release_path(cells, *start);
        }
        // only a park this robot left behind; its start may sit where another
        // robot has since come to rest
        let was_parked = if index > 0 { table.unpark(tail) } else { None };
        let rest = |p: Position| is_vacate_cell(map, p);
        let result: Result<Vec<(Leg, Vec<Position>, usize)>, PathError> = match leg.target {
            LegTarget::Cell(goal) if then_vacate => {
                let via = Via {
                    cell: goal,
                    open_step: leg.open_step,
                    service_steps: leg.service_steps,
                };
                plan_via(map, &table, tail, tail_step, via, &rest, budget).map(|p| {
                    let vacate = robot.legs[index + 1].clone();
                    let out = p.cells[p.via_end..].to_vec();
                    let arrival = out.len() - 1;
                    vec![
                        (leg.clone(), p.cells[..=p.via_end].to_vec(), p.via_arrival),
                        (vacate, out, arrival),
                    ]
                })
            }
            LegTarget::Cell(goal) => {
                if map.is_passable(goal) {
                    plan_single_where(map, &table, tail, tail_step, &|p| p == goal, budget)
                        .map(|cells| dwell(leg, cells, tail_step))
                } else {
                    Err(PathError::BadCell(goal))
                }
            }
            LegTarget::Vacate => plan_single_where(map, &table, tail, tail_step, &rest, budget)
                .map(|cells| dwell(leg, cells, tail_step)),
        };
        for (cells, start) in held.get(&robot.agent).into_iter().flatten() {
            table.reserve_path(cells, *start);
        }
        match result {
            Ok(parts) => {
                let mut step = tail_step;
                for (part, cells, arrival) in parts {
                    let goal = cells[arrival];
                    log::debug!(
                        "robot {} leg {} ({:?}) to {} arriving at step {}",
                        robot.agent,
                        part.kind.label(),
                        part.task,
                        goal,
                        step + arrival as u32
                    );
                    table.reserve_path(&cells, step);
                    held.entry(robot.agent)
                        .or_default()
                        .push((cells.clone(), step));
                    let end = step + cells.len() as u32 - 1;
                    set.plans.push(PathPlan {
                        agent: robot.agent,
                        task: part.task,
                        kind: part.kind,
                        start_step: step,
                        cells,
                        arrival,
                    });
                    step = end;
                }
                let last = set.plans.last().expect("at least one part").goal();
                table.park(last, step);
                tails.insert(robot.agent, (last, step));
            }
            Err(e) => {
                log::warn!(
                    "robot {} could not plan leg {}: {e}",
                    robot.agent,
                    leg.kind.label()
                );
                if let Some(step) = was_parked {
                    table.park(tail, step);
                }
                set.failed.push((robot.agent, e));
            }
        }
    }
    set.table = table;
    set
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConflictKind {
    Vertex,
    Swap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conflict {
    pub kind: ConflictKind,
    pub step: u32,
    pub agents: (AgentId, AgentId),
    pub at: Position,
}

/// Joins each robot's plans into one trajectory held at its final cell up to
/// the last planned step, then reports every shared cell and swap. An empty
/// list means the set is conflict-free.
pub fn validate_conflict_free(plans: &[PathPlan]) -> Vec<Conflict> {
    let mut by_agent: BTreeMap<AgentId, Vec<&PathPlan>> = BTreeMap::new();
    for p in plans {
        by_agent.entry(p.agent).or_default().push(p);
    }
    let horizon = plans.iter().map(PathPlan::end_step).max().unwrap_or(0);
    let mut traj: Vec<(AgentId, u32, Vec<Position>)> = Vec::new();
    for (agent, mut ps) in by_agent {
        ps.sort_by_key(|p| p.start_step);
        let first = ps[0].start_step;
        let mut cells: Vec<Position> = Vec::new();
        for p in ps {
            let offset = (p.start_step - first) as usize;
            cells.truncate(offset);
            cells.extend_from_slice(&p.cells);
        }
        let last = *cells.last().expect("non-empty plan");
        while first + (cells.len() as u32) <= horizon {
            cells.push(last);
        }
        traj.push((agent, first, cells));
    }
    let at = |(_, first, cells): &(AgentId, u32, Vec<Position>), t: u32| -> Option<Position> {
        if t < *first {
            None
        } else {
            cells.get((t - first) as usize).copied()
        }
    };
    let mut out = Vec::new();
    for t in 0..=horizon {
        for i in 0..traj.len() {
            for j in (i + 1)..traj.len() {
                let (Some(a), Some(b)) = (at(&traj[i], t), at(&traj[j], t)) else {
                    continue;
                };
                let agents = (traj[i].0, traj[j].0);
                if a == b {
                    out.push(Conflict {
                        kind: ConflictKind::Vertex,
                        step: t,
                        agents,
                        at: a,
                    });
                } else if let (Some(a2), Some(b2)) = (at(&traj[i], t + 1), at(&traj[j], t + 1)) {
                    if a2 == b && b2 == a {
                        out.push(Conflict {
                            kind: ConflictKind::Swap,
                            step: t,
                            agents,
                            at: a,
                        });
                    }
                }
            }
        }
    }
    out
}
