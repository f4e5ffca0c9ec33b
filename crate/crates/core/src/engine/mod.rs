//! Receding-horizon simulation loop: replans at every update boundary and
//! advances all agents one minimum time step at a time.

mod human;
mod metrics;
mod trace;

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::time::Instant;

use thiserror::Error;

use crate::allocation::{
    extract_sequences, solve_mode_allocation, AllocationError, CostParams, Instance,
};
use crate::domain::{
    validate_scenario, AgentId, AgentKind, AgentState, Event, EventKind, Mode, Scenario, Task,
    TaskId, TaskMode, TaskStatus, Violation, TIME_EPS,
};
use crate::pathfinding::{
    advance_pose, heading_towards, is_vacate_cell, plan_all, step_budget, LegKind, LegTarget,
    RobotLegs,
};
use crate::world::{GridMap, Position, VertexKind};

pub use human::next_human_cell;
pub use metrics::{Metrics, RunStatus, TaskMetrics};
pub use trace::{
    count_collisions, trace_conflicts, validate_trace, Action, Trace, TraceConflict, TraceError,
    TraceRow, TRACE_HEADER,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid scenario: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidScenario(Vec<Violation>),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub metrics: Metrics,
    pub trace: Trace,
    pub tasks: Vec<Task>,
    pub agents: Vec<AgentState>,
}

/// A stop an agent is heading for, with what to do on arrival.
#[derive(Clone, Debug, PartialEq)]
struct Stop {
    kind: LegKind,
    task: Option<TaskId>,
    target: Position,
    open_step: u32,
    service_steps: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Service {
    remaining: u32,
    task: TaskId,
    /// Goods taken aboard when the service ends, or `None` for an unload.
    load: Option<f64>,
}

#[derive(Clone, Debug)]
struct Runtime {
    state: AgentState,
    initial_energy: f64,
    /// Robots: planned cells from the last boundary, with the index of the
    /// cell currently occupied.
    cells: Vec<Position>,
    cursor: usize,
    /// Robots: (arrival index into `cells`, stop); humans: stops in order.
    stops: VecDeque<(usize, Stop)>,
    pending: Option<Stop>,
    service: Option<Service>,
    charge_until: Option<u32>,
    rogue: Option<TaskId>,
    /// A delivery allocated to this agent whose goods are not yet aboard.
    booked: Option<TaskId>,
    aboard: Vec<TaskId>,
    delivery: Option<TaskId>,
    last_move: Option<u32>,
    last_action: Action,
    current_task: Option<TaskId>,
    /// Humans: steps per move.
    stride: u32,
}

impl Runtime {
    fn is_robot(&self) -> bool {
        self.state.kind == AgentKind::Robot
    }
}

struct Sim<'s> {
    scenario: &'s Scenario,
    map: &'s GridMap,
    agents: Vec<Runtime>,
    tasks: Vec<Task>,
    events: Vec<(usize, Event)>,
    applied: BTreeSet<usize>,
    spu: u32,
    trace: Trace,
    first_assigned: BTreeMap<TaskId, u32>,
    assigned_agent: BTreeMap<TaskId, AgentId>,
    completed_at: BTreeMap<TaskId, u32>,
    picked_at: BTreeMap<TaskId, u32>,
    expired: Vec<TaskId>,
    solver_ms: Vec<f64>,
    robot_moves: u64,
    wait_steps: u64,
}

/// Runs a scenario to completion, expiry of all remaining work, or the step
/// cap.
pub fn run(scenario: &Scenario) -> Result<RunResult, EngineError> {
    let violations = validate_scenario(scenario);
    if !violations.is_empty() {
        return Err(EngineError::InvalidScenario(violations));
    }
    let params = &scenario.params;
    let mut sim = Sim::new(scenario);
    let cap = params.max_updates.saturating_mul(sim.spu);
    let mut step = 0u32;
    let finished = loop {
        if step.is_multiple_of(sim.spu) {
            sim.replan(step)?;
        }
        if sim.all_done() {
            break true;
        }
        if step >= cap {
            break false;
        }
        step += 1;
        sim.advance(step);
    };
    Ok(sim.finish(finished, step))
}

impl<'s> Sim<'s> {
    fn new(scenario: &'s Scenario) -> Self {
        let params = &scenario.params;
        let mut agents: Vec<Runtime> = scenario
            .agents
            .iter()
            .map(|a| Runtime {
                state: a.clone(),
                initial_energy: a.energy,
                cells: vec![a.position],
                cursor: 0,
                stops: VecDeque::new(),
                pending: None,
                service: None,
                charge_until: None,
                rogue: None,
                booked: None,
                aboard: Vec::new(),
                delivery: None,
                last_move: None,
                last_action: Action::Init,
                current_task: None,
                stride: human_stride(scenario.map.grid_side(), a.speed, params.phi),
            })
            .collect();
        agents.sort_by_key(|a| a.state.id);
        let mut events: Vec<(usize, Event)> = scenario.events.iter().copied().enumerate().collect();
        events.sort_by(|a, b| a.1.at.total_cmp(&b.1.at).then(a.0.cmp(&b.0)));
        let mut sim = Sim {
            scenario,
            map: &scenario.map,
            agents,
            tasks: scenario.tasks.clone(),
            events,
            applied: BTreeSet::new(),
            spu: params.steps_per_update(),
            trace: Trace::default(),
            first_assigned: BTreeMap::new(),
            assigned_agent: BTreeMap::new(),
            completed_at: BTreeMap::new(),
            picked_at: BTreeMap::new(),
            expired: Vec::new(),
            solver_ms: Vec::new(),
            robot_moves: 0,
            wait_steps: 0,
        };
        sim.record(0);
        sim
    }

    fn now(&self, step: u32) -> f64 {
        f64::from(step) * self.scenario.params.phi
    }

    fn task_mut(&mut self, id: TaskId) -> Option<&mut Task> {
        self.tasks.iter_mut().find(|t| t.id == id)
    }

    fn task(&self, id: TaskId) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    fn set_status(&mut self, id: TaskId, next: TaskStatus) -> bool {
        let Some(t) = self.task_mut(id) else {
            return false;
        };
        if t.status == next {
            return true;
        }
        if t.status.can_become(next) {
            t.status = next;
            true
        } else {
            log::warn!("task {id}: ignoring transition {:?} -> {next:?}", t.status);
            false
        }
    }

    fn all_done(&self) -> bool {
        self.tasks
            .iter()
            .all(|t| matches!(t.status, TaskStatus::Completed | TaskStatus::Cancelled))
    }

    fn apply_events(&mut self, now: f64) {
        let due: Vec<(usize, Event)> = self
            .events
            .iter()
            .filter(|(i, e)| !self.applied.contains(i) && e.at <= now + TIME_EPS)
            .copied()
            .collect();
        for (i, e) in due {
            self.applied.insert(i);
            log::info!("t={now}: event {:?}", e.kind);
            match e.kind {
                EventKind::ReleaseTask { task } => {
                    if self
                        .task(task)
                        .is_some_and(|t| t.status == TaskStatus::Unreleased)
                    {
                        self.set_status(task, TaskStatus::Open);
                    }
                }
                EventKind::CancelTask { task } => match self.task(task).map(|t| t.status) {
                    Some(TaskStatus::InTransit) => {
                        log::warn!("task {task} is already in transit; cancellation ignored")
                    }
                    Some(TaskStatus::Completed | TaskStatus::Cancelled) | None => {}
                    Some(_) => {
                        self.set_status(task, TaskStatus::Cancelled);
                        for a in &mut self.agents {
                            if a.rogue == Some(task) {
                                a.rogue = None;
                            }
                        }
                    }
                },
                EventKind::HumanWrongTask { human, task } => {
                    let open = self.task(task).is_some_and(|t| {
                        matches!(t.status, TaskStatus::Open | TaskStatus::Assigned)
                    });
                    let Some(a) = self.agents.iter_mut().find(|a| a.state.id == human) else {
                        continue;
                    };
                    if !open || a.delivery.is_some() || a.state.kind != AgentKind::Human {
                        log::warn!("human {human} cannot take task {task}; event ignored");
                        continue;
                    }
                    a.rogue = Some(task);
                    a.booked = None;
                    if self.task(task).map(|t| t.status) == Some(TaskStatus::Open) {
                        self.set_status(task, TaskStatus::Assigned);
                    }
                    self.assigned_agent.insert(task, human);
                }
                EventKind::EnergyDrop { agent, amount } => {
                    if let Some(a) = self.agents.iter_mut().find(|a| a.state.id == agent) {
                        a.state.energy = (a.state.energy - amount).max(0.0);
                    }
                }
            }
        }
    }

    fn replan(&mut self, step: u32) -> Result<(), EngineError> {
        let params = &self.scenario.params;
        let now = self.now(step);
        let update = step / self.spu;
        self.apply_events(now);

        // a booking lapses once its task is gone or was taken by someone else
        for a in &mut self.agents {
            if let Some(task) = a.booked {
                let t = self
                    .tasks
                    .iter()
                    .find(|t| t.id == task)
                    .expect("booked task exists");
                if t.status != TaskStatus::Assigned
                    || self.assigned_agent.get(&task) != Some(&a.state.id)
                {
                    a.booked = None;
                }
            }
        }
        let rogue: HashSet<TaskId> = self
            .agents
            .iter()
            .filter_map(|a| a.rogue.or(a.booked))
            .collect();
        for t in &mut self.tasks {
            if t.status == TaskStatus::Unreleased && t.release_time <= now + TIME_EPS {
                t.status = TaskStatus::Open;
            }
            if t.status == TaskStatus::Assigned && !rogue.contains(&t.id) {
                t.status = TaskStatus::Open;
            }
            let late = t.window.close < now - TIME_EPS;
            if late
                && (t.status == TaskStatus::Open
                    || rogue.contains(&t.id) && t.status == TaskStatus::Assigned)
            {
                log::info!("task {} expired at t={now}", t.id);
                t.status = TaskStatus::Cancelled;
                self.expired.push(t.id);
            }
        }
        for a in &mut self.agents {
            if a.rogue.is_some_and(|t| self.expired.contains(&t)) {
                a.rogue = None;
            }
            if a.booked.is_some_and(|t| self.expired.contains(&t)) {
                a.booked = None;
            }
        }

        // agents outside allocation keep their commitments
        let mut legs: BTreeMap<AgentId, Vec<Stop>> = BTreeMap::new();
        let mut free: Vec<(AgentState, f64)> = Vec::new();
        for a in &self.agents {
            if a.charge_until.is_some() {
                continue;
            }
            let id = a.state.id;
            if let Some(task) = a.rogue.or(a.booked) {
                let t = self.task(task).expect("rogue task exists");
                let close = if t.mode == TaskMode::Pickup {
                    self.map.warehouse()
                } else {
                    t.destination
                };
                let close_kind = if t.mode == TaskMode::Pickup {
                    LegKind::Warehouse
                } else {
                    LegKind::DeliveryDestination
                };
                legs.insert(
                    id,
                    vec![
                        self.stop_for(t, origin_kind(t.mode), t.origin),
                        Stop {
                            kind: close_kind,
                            task: Some(task),
                            target: close,
                            open_step: 0,
                            service_steps: if t.mode == TaskMode::Delivery {
                                params.steps_for(t.service_time)
                            } else {
                                0
                            },
                        },
                    ],
                );
            } else if let Some(task) = a.delivery {
                let t = self.task(task).expect("carried task exists");
                legs.insert(
                    id,
                    vec![Stop {
                        kind: LegKind::DeliveryDestination,
                        task: Some(task),
                        target: t.destination,
                        open_step: 0,
                        service_steps: params.steps_for(t.service_time),
                    }],
                );
            } else {
                let remaining = a.service.map_or(0, |s| s.remaining);
                let mut state = a.state.clone();
                state.load += a.service.and_then(|s| s.load).unwrap_or(0.0);
                free.push((state, now + f64::from(remaining) * params.phi));
            }
        }

        let open: Vec<Task> = self
            .tasks
            .iter()
            .filter(|t| t.status == TaskStatus::Open)
            .cloned()
            .collect();
        if !free.is_empty() {
            let started = Instant::now();
            let cost = CostParams {
                alpha: params.alpha,
                gamma: params.gamma,
                big_m: params.big_m,
                horizon_end: now + params.horizon,
            };
            let inst = Instance::build(self.map, &free, &open, cost)?;
            let result = solve_mode_allocation(&inst);
            let sequences = extract_sequences(&inst, &result.modes, &result.edges(&inst))?;
            self.solver_ms
                .push(started.elapsed().as_secs_f64() * 1000.0);
            log::debug!(
                "update {update}: F={:.4} modes {:?}",
                result.objective,
                result.modes
            );
            for r in &result.pickup.routes {
                log::debug!("  agent {} pickups {:?}", r.agent, r.tasks);
            }
            for d in &result.delivery.assignments {
                log::debug!("  agent {} delivery {}", d.agent, d.task);
            }
            log::debug!("  open {:?}", open.iter().map(|t| t.id).collect::<Vec<_>>());

            for (id, mode) in &result.modes {
                let charge_steps = params.steps_for(params.charge_duration);
                let a = self
                    .agents
                    .iter_mut()
                    .find(|a| a.state.id == *id)
                    .expect("known agent");
                a.state.mode = *mode;
                if *mode == Mode::ChargingMode {
                    a.charge_until = Some(step + charge_steps);
                    a.stops.clear();
                    a.cells = vec![a.state.position];
                    a.cursor = 0;
                    a.pending = None;
                    log::info!(
                        "agent {id} starts charging until step {}",
                        step + charge_steps
                    );
                }
            }
            for seq in sequences {
                let mut stops = Vec::new();
                for s in &seq.stops {
                    let stop = match (s.kind, s.task) {
                        (VertexKind::PickupStart(t) | VertexKind::DeliveryOrigin(t), _) => {
                            let task = self.task(t).expect("allocated task").clone();
                            self.first_assigned.entry(t).or_insert(update);
                            self.assigned_agent.insert(t, seq.agent);
                            self.set_status(t, TaskStatus::Assigned);
                            if task.mode == TaskMode::Delivery {
                                let a = self
                                    .agents
                                    .iter_mut()
                                    .find(|a| a.state.id == seq.agent)
                                    .expect("known agent");
                                a.booked = Some(t);
                            }
                            self.stop_for(&task, origin_kind(task.mode), task.origin)
                        }
                        (VertexKind::DeliveryDestination(t), _) => {
                            let task = self.task(t).expect("allocated task");
                            Stop {
                                kind: LegKind::DeliveryDestination,
                                task: Some(t),
                                target: task.destination,
                                open_step: 0,
                                service_steps: params.steps_for(task.service_time),
                            }
                        }
                        (VertexKind::Warehouse, _) => Stop {
                            kind: LegKind::Warehouse,
                            task: None,
                            target: self.map.warehouse(),
                            open_step: 0,
                            service_steps: 0,
                        },
                        (VertexKind::Agent(_), _) => continue,
                    };
                    stops.push(stop);
                }
                let a = self
                    .agents
                    .iter_mut()
                    .find(|a| a.state.id == seq.agent)
                    .expect("known agent");
                a.state.task_chain = stops
                    .iter()
                    .filter_map(|s| s.task)
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                legs.insert(seq.agent, stops);
            }
        }

        for a in &self.agents {
            if a.charge_until.is_some() || legs.contains_key(&a.state.id) {
                continue;
            }
            let id = a.state.id;
            // goods still being loaded count as aboard
            let stop = if !a.aboard.is_empty() || a.service.is_some_and(|s| s.load.is_some()) {
                Some(Stop {
                    kind: LegKind::Warehouse,
                    task: None,
                    target: self.map.warehouse(),
                    open_step: 0,
                    service_steps: 0,
                })
            } else if !is_vacate_cell(self.map, a.state.position) && a.service.is_none() {
                Some(Stop {
                    kind: LegKind::Vacate,
                    task: None,
                    target: a.state.position,
                    open_step: 0,
                    service_steps: 0,
                })
            } else {
                None
            };
            legs.insert(id, stop.into_iter().collect());
        }
        // never finish a route standing on a shelf or at the warehouse
        for l in legs.values_mut() {
            if l.last()
                .is_some_and(|s| s.kind != LegKind::Vacate && !is_vacate_cell(self.map, s.target))
            {
                let target = l.last().expect("non-empty").target;
                l.push(Stop {
                    kind: LegKind::Vacate,
                    task: None,
                    target,
                    open_step: 0,
                    service_steps: 0,
                });
            }
        }
        for a in &self.agents {
            if let (Some(s), Some(l)) = (a.service, legs.get_mut(&a.state.id)) {
                l.insert(
                    0,
                    Stop {
                        kind: LegKind::Hold,
                        task: Some(s.task),
                        target: a.state.position,
                        open_step: 0,
                        service_steps: s.remaining,
                    },
                );
            }
        }

        // humans stay on their BFS routes; robots get conflict-free paths
        let occupied: Vec<Position> = self.agents.iter().map(|a| a.state.position).collect();
        let mut robot_legs = Vec::new();
        let mut static_cells = Vec::new();
        let mut idle: Vec<Position> = Vec::new();
        for a in &mut self.agents {
            a.pending = None;
            a.current_task = a
                .service
                .map(|s| s.task)
                .or(a.delivery)
                .or(a.aboard.last().copied());
            let l = legs.remove(&a.state.id).unwrap_or_default();
            if a.is_robot() {
                let close_of = |t: TaskId| {
                    self.tasks
                        .iter()
                        .find(|x| x.id == t)
                        .map(|t| t.window.close)
                };
                // a warehouse run is as urgent as the goods it carries; other
                // legs without a task follow the one before them
                let mut carried: Option<f64> = a
                    .aboard
                    .iter()
                    .filter_map(|&t| close_of(t))
                    .reduce(f64::min);
                let mut previous: Option<f64> = None;
                let mut planned = Vec::with_capacity(l.len());
                for s in &l {
                    let close = match (s.kind, s.task) {
                        (LegKind::Warehouse, _) => carried.take().or(previous),
                        (_, Some(t)) => close_of(t),
                        (_, None) => previous,
                    };
                    if s.kind == LegKind::Pickup {
                        let c = s.task.and_then(close_of);
                        carried = match (carried, c) {
                            (Some(x), Some(y)) => Some(x.min(y)),
                            (x, y) => x.or(y),
                        };
                    }
                    previous = close;
                    planned.push(crate::pathfinding::Leg {
                        agent: a.state.id,
                        task: s.task,
                        kind: s.kind,
                        target: if s.kind == LegKind::Vacate {
                            LegTarget::Vacate
                        } else {
                            LegTarget::Cell(s.target)
                        },
                        open_step: s.open_step,
                        close,
                        service_steps: s.service_steps,
                    });
                }
                robot_legs.push((
                    RobotLegs {
                        agent: a.state.id,
                        start: a.state.position,
                        legs: planned,
                    },
                    l,
                ));
            } else {
                if a.last_action != Action::Move {
                    static_cells.push(a.state.position);
                    if l.is_empty() && a.service.is_none() {
                        idle.push(a.state.position);
                    }
                }
                a.stops = l.into_iter().map(|s| (0, s)).collect();
            }
        }
        let robots: Vec<RobotLegs> = robot_legs.iter().map(|(r, _)| r.clone()).collect();
        let budget = step_budget(self.map);
        let mut set = plan_all(self.map, &robots, &static_cells, step, budget);
        if !set.failed.is_empty() && !idle.is_empty() {
            // an idle human may be standing on the only way through; plan as
            // if it were gone and send it elsewhere
            let busy: Vec<Position> = static_cells
                .iter()
                .copied()
                .filter(|p| !idle.contains(p))
                .collect();
            let retry = plan_all(self.map, &robots, &busy, step, budget);
            if retry.failed.len() < set.failed.len() {
                set = retry;
            }
        }
        let mut routed: HashSet<Position> = set
            .plans
            .iter()
            .flat_map(|p| p.cells.iter().copied())
            .collect();
        routed.extend(occupied.iter().copied());
        let routed: Vec<Position> = routed.into_iter().collect();
        for a in self.agents.iter_mut().filter(|a| !a.is_robot()) {
            let here = a.state.position;
            if a.stops.is_empty()
                && a.service.is_none()
                && set.plans.iter().any(|p| p.cells.contains(&here))
            {
                a.stops.push_back((
                    0,
                    Stop {
                        kind: LegKind::Vacate,
                        task: None,
                        target: here,
                        open_step: 0,
                        service_steps: 0,
                    },
                ));
            }
            for (_, s) in a
                .stops
                .iter_mut()
                .filter(|(_, s)| s.kind == LegKind::Vacate)
            {
                s.target = nearest_vacate_cell(self.map, s.target, &routed)
                    .or_else(|| nearest_vacate_cell(self.map, s.target, &occupied))
                    .unwrap_or(s.target);
            }
        }
        for (r, stops) in robot_legs {
            let a = self
                .agents
                .iter_mut()
                .find(|a| a.state.id == r.agent)
                .expect("known robot");
            let plans = set.plans_for(r.agent);
            a.cells = vec![a.state.position];
            a.cursor = 0;
            a.stops.clear();
            for (plan, stop) in plans.iter().zip(stops) {
                let offset = (plan.start_step - step) as usize;
                a.cells.truncate(offset);
                a.cells.extend_from_slice(&plan.cells);
                let mut stop = stop;
                stop.target = plan.goal();
                a.stops.push_back((offset + plan.arrival, stop));
            }
        }
        Ok(())
    }

    fn stop_for(&self, t: &Task, kind: LegKind, target: Position) -> Stop {
        let phi = self.scenario.params.phi;
        Stop {
            kind,
            task: Some(t.id),
            target,
            open_step: (t.window.open / phi - TIME_EPS).ceil().max(0.0) as u32,
            service_steps: self.scenario.params.steps_for(t.service_time),
        }
    }

    fn advance(&mut self, step: u32) {
        let start: HashSet<Position> = self.agents.iter().map(|a| a.state.position).collect();
        let mut claimed: HashSet<Position> = HashSet::new();
        let order: Vec<usize> = {
            let mut o: Vec<usize> = (0..self.agents.len()).collect();
            o.sort_by_key(|&i| (!self.agents[i].is_robot(), self.agents[i].state.id));
            o
        };
        for i in order {
            let action = self.step_agent(i, step, &start, &mut claimed);
            let a = &mut self.agents[i];
            if matches!(action, Action::Wait | Action::Blocked) {
                self.wait_steps += 1;
            }
            a.last_action = action;
        }
        self.record(step);
    }

    fn step_agent(
        &mut self,
        i: usize,
        step: u32,
        start: &HashSet<Position>,
        claimed: &mut HashSet<Position>,
    ) -> Action {
        let a = &mut self.agents[i];
        claimed.insert(a.state.position);

        if let Some(until) = a.charge_until {
            if step >= until {
                a.state.energy = a.initial_energy;
                a.charge_until = None;
                log::info!("agent {} finished charging", a.state.id);
            }
            return Action::Charge;
        }

        // a stop that is due without moving, e.g. right after a replan
        if a.service.is_none() && a.pending.is_none() {
            if let Some(action) = self.arrive(i, step) {
                consume_wait(&mut self.agents[i]);
                return action;
            }
        }

        let a = &mut self.agents[i];
        if let Some(mut s) = a.service {
            s.remaining = s.remaining.saturating_sub(1);
            consume_wait(a);
            if s.remaining > 0 {
                a.service = Some(s);
                return Action::Serve;
            }
            a.service = None;
            return match s.load {
                Some(load) => {
                    self.take_aboard(i, s.task, load, step);
                    Action::Load
                }
                None => {
                    self.complete_delivery(i, s.task, step);
                    Action::Unload
                }
            };
        }
        if let Some(stop) = self.agents[i].pending.clone() {
            consume_wait(&mut self.agents[i]);
            if let Some(action) = self.try_start(i, &stop, step) {
                return action;
            }
            return Action::Wait;
        }

        let a = &mut self.agents[i];
        let next = if a.is_robot() {
            match a.cells.get(a.cursor + 1) {
                None => None,
                Some(&n) if n == a.state.position => {
                    a.cursor += 1;
                    None
                }
                Some(&n) => {
                    // sensing range: the next two cells along the plan
                    let here = a.state.position;
                    let sensed =
                        |p: Position| p != here && (start.contains(&p) || claimed.contains(&p));
                    if sensed(n) || a.cells.get(a.cursor + 2).is_some_and(|&p| sensed(p)) {
                        return Action::Blocked;
                    }
                    Some(n)
                }
            }
        } else {
            match a.stops.front() {
                Some((_, s)) if s.target != a.state.position => {
                    if a.last_move.is_some_and(|m| step < m + a.stride) {
                        None
                    } else {
                        let others: Vec<Position> = start
                            .iter()
                            .chain(claimed.iter())
                            .copied()
                            .filter(|&p| p != a.state.position)
                            .collect();
                        match next_human_cell(self.map, a.state.position, s.target, &others) {
                            Some(n) => Some(n),
                            None => return Action::Blocked,
                        }
                    }
                }
                _ => None,
            }
        };

        let mut action = Action::Wait;
        if let Some(n) = next {
            let a = &mut self.agents[i];
            if start.contains(&n) || claimed.contains(&n) {
                return Action::Blocked;
            }
            claimed.insert(n);
            a.state.heading = heading_towards(a.state.position, a.state.heading, n);
            a.state.position = advance_pose(self.map, a.state.position, a.state.heading)
                .expect("next cell is adjacent");
            a.state.energy = (a.state.energy - self.scenario.params.energy_per_move).max(0.0);
            a.last_move = Some(step);
            if a.is_robot() {
                a.cursor += 1;
                self.robot_moves += 1;
            }
            action = Action::Move;
        }
        if let Some(arrived) = self.arrive(i, step) {
            return if arrived == Action::Wait {
                action
            } else {
                arrived
            };
        }
        action
    }

    /// Handles every stop reached at the current cell; returns the action
    /// the first non-trivial one causes.
    fn arrive(&mut self, i: usize, step: u32) -> Option<Action> {
        while self.agents[i].service.is_none() && self.agents[i].pending.is_none() {
            let before = self.agents[i].stops.len();
            if let Some(action) = self.arrive_one(i, step) {
                return Some(action);
            }
            if self.agents[i].stops.len() == before {
                break;
            }
        }
        None
    }

    fn arrive_one(&mut self, i: usize, step: u32) -> Option<Action> {
        let a = &mut self.agents[i];
        let reached = match a.stops.front() {
            Some((idx, s)) if a.is_robot() => *idx <= a.cursor && s.target == a.state.position,
            Some((_, s)) => s.target == a.state.position,
            None => false,
        };
        if !reached {
            return None;
        }
        let (_, stop) = a.stops.pop_front().expect("checked above");
        a.current_task = stop.task;
        match stop.kind {
            LegKind::Pickup | LegKind::DeliveryOrigin => match self.try_start(i, &stop, step) {
                Some(action) => Some(action),
                None => {
                    self.agents[i].pending = Some(stop);
                    Some(Action::Wait)
                }
            },
            LegKind::DeliveryDestination => {
                let task = stop.task.expect("delivery stop has a task");
                if self.agents[i].delivery != Some(task) {
                    return None;
                }
                if stop.service_steps == 0 {
                    self.complete_delivery(i, task, step);
                    Some(Action::Unload)
                } else {
                    self.agents[i].service = Some(Service {
                        remaining: stop.service_steps,
                        task,
                        load: None,
                    });
                    Some(Action::Wait)
                }
            }
            LegKind::Warehouse => {
                let aboard = std::mem::take(&mut self.agents[i].aboard);
                if aboard.is_empty() {
                    return None;
                }
                for t in aboard {
                    self.set_status(t, TaskStatus::Completed);
                    self.completed_at.insert(t, step);
                    self.assigned_agent.insert(t, self.agents[i].state.id);
                    log::info!(
                        "step {step}: pickup task {t} stored by agent {}",
                        self.agents[i].state.id
                    );
                }
                let a = &mut self.agents[i];
                a.state.load = 0.0;
                a.state.task_chain.clear();
                a.current_task = None;
                Some(Action::Unload)
            }
            LegKind::Vacate | LegKind::Hold => None,
        }
    }

    /// Starts serving a task origin if its window is open; `None` means keep
    /// waiting. Goods come aboard once the service time has elapsed.
    fn try_start(&mut self, i: usize, stop: &Stop, step: u32) -> Option<Action> {
        let now = self.now(step);
        let task_id = stop.task.expect("service stop has a task");
        let Some(task) = self.task(task_id).cloned() else {
            return Some(Action::Wait);
        };
        let a = &self.agents[i];
        let ours = task.status == TaskStatus::Assigned
            && (a.rogue == Some(task_id) || self.assigned_agent.get(&task_id) == Some(&a.state.id));
        if !ours
            || now > task.window.close + TIME_EPS
            || a.state.load + task.load > a.state.capacity + 1e-9
        {
            log::debug!("agent {} skips task {task_id} at step {step}", a.state.id);
            self.agents[i].pending = None;
            return Some(Action::Wait);
        }
        if now + TIME_EPS < task.window.open {
            return None;
        }
        self.set_status(task_id, TaskStatus::InTransit);
        self.picked_at.insert(task_id, step);
        let a = &mut self.agents[i];
        a.pending = None;
        a.current_task = Some(task_id);
        if a.rogue == Some(task_id) {
            a.rogue = None;
        }
        if a.booked == Some(task_id) {
            a.booked = None;
        }
        if task.mode == TaskMode::Delivery {
            a.delivery = Some(task_id);
        }
        log::debug!(
            "step {step}: agent {} starts serving task {task_id}",
            a.state.id
        );
        if stop.service_steps == 0 {
            self.take_aboard(i, task_id, task.load, step);
            return Some(Action::Load);
        }
        a.service = Some(Service {
            remaining: stop.service_steps,
            task: task_id,
            load: Some(task.load),
        });
        Some(Action::Wait)
    }

    fn take_aboard(&mut self, i: usize, task: TaskId, load: f64, step: u32) {
        let a = &mut self.agents[i];
        a.state.load += load;
        if self.task(task).is_some_and(|t| t.mode == TaskMode::Pickup) {
            self.agents[i].aboard.push(task);
        }
        log::debug!(
            "step {step}: agent {} loads task {task}",
            self.agents[i].state.id
        );
    }

    fn complete_delivery(&mut self, i: usize, task: TaskId, step: u32) {
        let load = self.task(task).map_or(0.0, |t| t.load);
        let a = &mut self.agents[i];
        a.delivery = None;
        a.state.load = (a.state.load - load).max(0.0);
        a.state.task_chain.retain(|&t| t != task);
        a.current_task = None;
        let id = a.state.id;
        self.set_status(task, TaskStatus::Completed);
        self.completed_at.insert(task, step);
        self.assigned_agent.insert(task, id);
        log::info!("step {step}: delivery task {task} completed by agent {id}");
    }

    fn record(&mut self, step: u32) {
        for a in &self.agents {
            self.trace.rows.push(TraceRow {
                step,
                agent: a.state.id,
                kind: a.state.kind,
                position: a.state.position,
                mode: a.state.mode.label().to_string(),
                load: a.state.load,
                action: if step == 0 {
                    Action::Init
                } else {
                    a.last_action
                },
                task: a
                    .current_task
                    .or_else(|| a.stops.front().and_then(|(_, s)| s.task)),
            });
        }
    }

    fn finish(self, finished: bool, step: u32) -> RunResult {
        let status = if !finished {
            RunStatus::Timeout
        } else if self.expired.is_empty() {
            RunStatus::Completed
        } else {
            RunStatus::Incomplete
        };
        let spu = self.spu;
        let phi = self.scenario.params.phi;
        let per_task: Vec<TaskMetrics> = self
            .tasks
            .iter()
            .map(|t| TaskMetrics {
                id: t.id,
                mode: t.mode,
                status: t.status,
                assigned_step: self.first_assigned.get(&t.id).copied(),
                completed_step: self.completed_at.get(&t.id).copied(),
                completion_time: self.completed_at.get(&t.id).map(|&s| f64::from(s) * phi),
                pickup_time: self.picked_at.get(&t.id).map(|&s| f64::from(s) * phi),
                agent: self.assigned_agent.get(&t.id).copied(),
            })
            .collect();
        let collisions = count_collisions(&self.trace);
        let metrics = Metrics {
            status,
            steps: step,
            updates: step.div_ceil(spu),
            completion_step: self
                .completed_at
                .values()
                .max()
                .map_or(0, |&s| s.div_ceil(spu)),
            all_assigned_step: self.first_assigned.values().max().copied().unwrap_or(0),
            total_robot_distance: self.robot_moves as f64 * self.map.grid_side(),
            total_wait_steps: self.wait_steps,
            collisions,
            expired: self.expired.clone(),
            solver_ms_per_update: self.solver_ms.clone(),
            per_task,
        };
        RunResult {
            metrics,
            trace: self.trace,
            tasks: self.tasks,
            agents: self.agents.into_iter().map(|a| a.state).collect(),
        }
    }
}

fn origin_kind(mode: TaskMode) -> LegKind {
    match mode {
        TaskMode::Pickup => LegKind::Pickup,
        TaskMode::Delivery => LegKind::DeliveryOrigin,
    }
}

/// Robots advance through planned waits while held up by service.
fn consume_wait(a: &mut Runtime) {
    if a.is_robot() && a.cells.get(a.cursor + 1) == Some(&a.state.position) {
        a.cursor += 1;
    }
}

/// Steps between moves for an agent crossing one cell at `speed`.
pub fn human_stride(grid_side: f64, speed: f64, phi: f64) -> u32 {
    ((grid_side / (speed * phi)).round() as u32).max(1)
}

fn nearest_vacate_cell(map: &GridMap, from: Position, occupied: &[Position]) -> Option<Position> {
    let dist = map.distance_field(from);
    map.passable_positions()
        .filter(|&p| is_vacate_cell(map, p) && !occupied.contains(&p))
        .filter_map(|p| dist[map.index(p)].map(|d| (d, map.index(p), p)))
        .min()
        .map(|(_, _, p)| p)
}

/// ASCII view of the map with agents drawn by the last digit of their id.
pub fn render_text(map: &GridMap, agents: &[AgentState]) -> String {
    let mut rows: Vec<Vec<char>> = map
        .rows()
        .into_iter()
        .map(|r| r.chars().collect())
        .collect();
    for a in agents {
        let c = char::from_digit(a.id % 10, 10).unwrap_or('?');
        rows[usize::from(a.position.row) - 1][usize::from(a.position.col) - 1] = c;
    }
    rows.into_iter()
        .map(|r| r.into_iter().collect::<String>() + "\n")
        .collect()
}
