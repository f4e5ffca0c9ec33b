//! First-layer planner: mode assignment over the fleet and exact task
//! allocation for the pickup and delivery subproblems.
//!
//! Both subproblems are solved by depth-first search over per-agent options
//! (feasible chains for pickup, single tasks for delivery) with memoization on
//! the set of tasks already claimed by lower-id agents. With the binary
//! routing choices fixed, the big-M timing constraints reduce to forward
//! propagation along each chain, so no relaxation is needed.

mod delivery;
mod mode;
mod pickup;
mod schedule;
mod sequence;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::domain::{AgentId, AgentKind, AgentState, Mode, Task, TaskId, TaskMode, TimeWindow};
use crate::world::{build_task_graph, GridMap, TaskGraph, VertexKind, WorldError};

pub use delivery::{solve_delivery_allocation, DeliveryAssignment, DeliverySolution};
pub use mode::{solve_mode_allocation, AllocationResult};
pub use pickup::{solve_pickup_allocation, PickupRoute, PickupSolution};
pub use schedule::{check_time_feasibility, ChainLeg, Infeasible, Schedule, Stop};
pub use sequence::{extract_sequences, AssignedEdge, Sequence, SequenceStop};

/// Relative tolerance for treating two objective values as tied.
pub const OBJECTIVE_EPS: f64 = 1e-9;

/// True when `candidate` beats `best` by more than the relative tie tolerance.
/// Any finite value beats an infinite incumbent.
pub(crate) fn improves(candidate: f64, best: f64) -> bool {
    if best.is_infinite() {
        return candidate < best;
    }
    candidate < best - OBJECTIVE_EPS * best.abs().max(1.0)
}

/// Tie rule shared by the solvers: lower objective first, and among
/// objectives equal within tolerance, the one serving more tasks.
pub(crate) fn preferred(cost: f64, served: u32, best: (f64, u32)) -> bool {
    improves(cost, best.0) || (!improves(best.0, cost) && served > best.1)
}

/// The largest number of simultaneously open tasks of one mode the solvers
/// accept; task sets are tracked as 64-bit masks.
pub const MAX_TASKS_PER_MODE: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum AllocationError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("{0} open {1:?} tasks exceed the solver limit of {MAX_TASKS_PER_MODE}")]
    TooManyTasks(usize, TaskMode),
    #[error("inconsistent solution: {0}")]
    Inconsistent(String),
}

/// Weights shared by the cost terms of both subproblems.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostParams {
    pub alpha: f64,
    pub gamma: f64,
    pub big_m: f64,
    /// Absolute instant after which no task may start within this horizon.
    pub horizon_end: f64,
}

/// Travel-cost weight ω for moving `distance` meters to serve a task.
///
/// Robots pay `α·d`, humans `(1-α)·d`; a task the agent kind may not serve
/// adds the penalty `big_m`. An infinite distance yields an infinite cost.
pub fn edge_cost(kind: AgentKind, allowed: bool, distance: f64, alpha: f64, big_m: f64) -> f64 {
    if !distance.is_finite() {
        return f64::INFINITY;
    }
    let weight = match kind {
        AgentKind::Robot => alpha,
        AgentKind::Human => 1.0 - alpha,
    };
    weight * distance + if allowed { 0.0 } else { big_m }
}

/// An agent taking part in allocation at this update boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub id: AgentId,
    pub kind: AgentKind,
    /// Task-graph vertex of the agent's planning position.
    pub vertex: usize,
    /// Instant the agent is free to leave `vertex`.
    pub ready_at: f64,
    pub speed: f64,
    pub capacity: f64,
    /// Goods already aboard.
    pub load: f64,
    pub energy: f64,
    pub energy_threshold: f64,
}

impl Candidate {
    pub fn needs_charge(&self) -> bool {
        self.energy <= self.energy_threshold
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskRequest {
    pub id: TaskId,
    pub mode: TaskMode,
    pub origin: usize,
    pub destination: usize,
    pub window: TimeWindow,
    pub load: f64,
    pub service_time: f64,
    pub human_only: bool,
    pub robot_only: bool,
}

impl TaskRequest {
    pub fn allows(&self, kind: AgentKind) -> bool {
        match kind {
            AgentKind::Robot => !self.human_only,
            AgentKind::Human => !self.robot_only,
        }
    }
}

/// A fully specified allocation problem at one update boundary.
#[derive(Clone, Debug)]
pub struct Instance {
    pub graph: TaskGraph,
    /// Sorted by id.
    pub agents: Vec<Candidate>,
    /// Sorted by id.
    pub pickups: Vec<TaskRequest>,
    /// Sorted by id.
    pub deliveries: Vec<TaskRequest>,
    pub params: CostParams,
}

impl Instance {
    /// Assembles an instance from agents (each with the instant it becomes
    /// free) and the tasks open for allocation.
    pub fn build(
        map: &GridMap,
        agents: &[(AgentState, f64)],
        tasks: &[Task],
        params: CostParams,
    ) -> Result<Instance, AllocationError> {
        let mut agents: Vec<(AgentState, f64)> = agents.to_vec();
        agents.sort_by_key(|(a, _)| a.id);
        let mut tasks: Vec<Task> = tasks.to_vec();
        tasks.sort_by_key(|t| t.id);
        let states: Vec<AgentState> = agents.iter().map(|(a, _)| a.clone()).collect();
        let graph = build_task_graph(map, &states, &tasks)?;

        let candidates = agents
            .iter()
            .map(|(a, ready)| Candidate {
                id: a.id,
                kind: a.kind,
                vertex: graph.find(VertexKind::Agent(a.id)).expect("agent vertex"),
                ready_at: *ready,
                speed: a.speed,
                capacity: a.capacity,
                load: a.load,
                energy: a.energy,
                energy_threshold: a.energy_threshold,
            })
            .collect();
        let request = |t: &Task| {
            let (origin, destination) = match t.mode {
                TaskMode::Pickup => (
                    graph.find(VertexKind::PickupStart(t.id)),
                    Some(graph.warehouse()),
                ),
                TaskMode::Delivery => (
                    graph.find(VertexKind::DeliveryOrigin(t.id)),
                    graph.find(VertexKind::DeliveryDestination(t.id)),
                ),
            };
            TaskRequest {
                id: t.id,
                mode: t.mode,
                origin: origin.expect("task origin vertex"),
                destination: destination.expect("task destination vertex"),
                window: t.window,
                load: t.load,
                service_time: t.service_time,
                human_only: t.human_only,
                robot_only: t.robot_only,
            }
        };
        let pickups: Vec<TaskRequest> = tasks
            .iter()
            .filter(|t| t.mode == TaskMode::Pickup)
            .map(request)
            .collect();
        let deliveries: Vec<TaskRequest> = tasks
            .iter()
            .filter(|t| t.mode == TaskMode::Delivery)
            .map(request)
            .collect();
        if pickups.len() > MAX_TASKS_PER_MODE {
            return Err(AllocationError::TooManyTasks(
                pickups.len(),
                TaskMode::Pickup,
            ));
        }
        if deliveries.len() > MAX_TASKS_PER_MODE {
            return Err(AllocationError::TooManyTasks(
                deliveries.len(),
                TaskMode::Delivery,
            ));
        }
        Ok(Instance {
            graph,
            agents: candidates,
            pickups,
            deliveries,
            params,
        })
    }

    /// Indices of agents free to take a task mode (not forced to charge).
    pub fn free_agents(&self) -> Vec<usize> {
        (0..self.agents.len())
            .filter(|&i| !self.agents[i].needs_charge())
            .collect()
    }

    fn omega(&self, kind: AgentKind, allowed: bool, distance: f64) -> f64 {
        edge_cost(
            kind,
            allowed,
            distance,
            self.params.alpha,
            self.params.big_m,
        )
    }

    /// ω for agent `a` travelling between two graph vertices to serve `task`.
    pub fn task_edge_cost(&self, a: usize, from: usize, task: &TaskRequest) -> f64 {
        let agent = &self.agents[a];
        self.omega(
            agent.kind,
            task.allows(agent.kind),
            self.graph.distance(from, task.origin),
        )
    }

    /// Cost of the closing leg from the last pickup to the warehouse.
    pub fn return_cost(&self, a: usize, from: usize) -> f64 {
        let agent = &self.agents[a];
        self.omega(
            agent.kind,
            true,
            self.graph.distance(from, self.graph.warehouse()),
        )
    }

    pub fn travel_time(&self, a: usize, from: usize, to: usize) -> f64 {
        self.graph.distance(from, to) / self.agents[a].speed
    }

    fn worst_omega(&self, task: &TaskRequest, distance: f64) -> f64 {
        self.omega(AgentKind::Robot, task.allows(AgentKind::Robot), distance)
            .max(self.omega(AgentKind::Human, task.allows(AgentKind::Human), distance))
    }

    /// Distance to the task from the closest free agent, or 0 when there is
    /// none. Free means allocatable and carrying nothing.
    fn nearest_free_distance(&self, task: &TaskRequest) -> f64 {
        let idle: Vec<usize> = self
            .free_agents()
            .into_iter()
            .filter(|&i| self.agents[i].load <= 1e-9)
            .collect();
        if idle.is_empty() {
            return 0.0;
        }
        idle.into_iter()
            .map(|i| self.graph.distance(self.agents[i].vertex, task.origin))
            .fold(f64::INFINITY, f64::min)
    }

    /// Cost charged once for a pickup task left without an agent.
    pub fn pickup_penalty(&self, task: &TaskRequest) -> f64 {
        let warehouse = self.graph.warehouse();
        self.worst_omega(task, self.nearest_free_distance(task))
            + self
                .omega(
                    AgentKind::Robot,
                    true,
                    self.graph.distance(task.origin, warehouse),
                )
                .max(self.omega(
                    AgentKind::Human,
                    true,
                    self.graph.distance(task.origin, warehouse),
                ))
    }

    /// Cost charged once for a delivery task left without an agent.
    pub fn delivery_penalty(&self, task: &TaskRequest) -> f64 {
        self.worst_omega(task, self.nearest_free_distance(task))
    }

    /// The chain legs for agent `a` serving pickup tasks `chain` (indices
    /// into `pickups`) in order.
    pub fn pickup_legs(&self, a: usize, chain: &[usize]) -> Vec<ChainLeg> {
        let mut from = self.agents[a].vertex;
        chain
            .iter()
            .map(|&j| {
                let t = &self.pickups[j];
                let leg = ChainLeg {
                    task: t.id,
                    travel: self.travel_time(a, from, t.origin),
                    window: t.window,
                    service_time: t.service_time,
                };
                from = t.origin;
                leg
            })
            .collect()
    }

    /// Chain cost: travel edges into each task plus the return to the
    /// warehouse. An empty chain costs nothing.
    pub fn pickup_chain_cost(&self, a: usize, chain: &[usize]) -> f64 {
        let Some(&last) = chain.last() else {
            return 0.0;
        };
        let mut from = self.agents[a].vertex;
        let mut cost = 0.0;
        for &j in chain {
            cost += self.task_edge_cost(a, from, &self.pickups[j]);
            from = self.pickups[j].origin;
        }
        cost + self.return_cost(a, self.pickups[last].origin)
    }

    /// Canonical C_P: chain costs in agent order, then penalties for every
    /// unassigned pickup in task order.
    pub fn pickup_objective(&self, chains: &[(usize, Vec<usize>)]) -> f64 {
        let mut assigned = vec![false; self.pickups.len()];
        let mut total = 0.0;
        for (a, chain) in chains {
            total += self.pickup_chain_cost(*a, chain);
            for &j in chain {
                assigned[j] = true;
            }
        }
        for (j, t) in self.pickups.iter().enumerate() {
            if !assigned[j] {
                total += self.pickup_penalty(t);
            }
        }
        total
    }

    /// Canonical C_D over (agent, delivery index) pairs.
    pub fn delivery_objective(&self, pairs: &[(usize, usize)]) -> f64 {
        let mut assigned = vec![false; self.deliveries.len()];
        let mut total = 0.0;
        for &(a, j) in pairs {
            total += self.task_edge_cost(a, self.agents[a].vertex, &self.deliveries[j]);
            assigned[j] = true;
        }
        for (j, t) in self.deliveries.iter().enumerate() {
            if !assigned[j] {
                total += self.delivery_penalty(t);
            }
        }
        total
    }

    /// Whether agent `a` may legally serve delivery `j`, with its start time.
    pub fn delivery_start(&self, a: usize, j: usize) -> Option<Stop> {
        let agent = &self.agents[a];
        let t = &self.deliveries[j];
        if !t.allows(agent.kind) || agent.load + t.load > agent.capacity + 1e-9 {
            return None;
        }
        let leg = ChainLeg {
            task: t.id,
            travel: self.travel_time(a, agent.vertex, t.origin),
            window: t.window,
            service_time: t.service_time,
        };
        check_time_feasibility(&[leg], agent.ready_at, self.params.horizon_end)
            .ok()
            .map(|s| s.stops[0])
    }

    pub fn agent_index(&self, id: AgentId) -> Option<usize> {
        self.agents.iter().position(|a| a.id == id)
    }
}

/// Per-agent mode vector.
pub type ModeAssignment = BTreeMap<AgentId, Mode>;
