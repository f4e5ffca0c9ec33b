//! Tasks, agents, modes, time windows and scenario validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::world::{CellKind, GridMap, Position};

pub type TaskId = u32;
pub type AgentId = u32;

/// Absolute tolerance used when comparing times expressed in seconds.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub open: f64,
    pub close: f64,
}

impl TimeWindow {
    pub fn new(open: f64, close: f64) -> Self {
        Self { open, close }
    }

    pub fn contains(&self, t: f64) -> bool {
        t + TIME_EPS >= self.open && t <= self.close + TIME_EPS
    }

    pub fn is_valid(&self) -> bool {
        self.open.is_finite()
            && self.close.is_finite()
            && 0.0 <= self.open
            && self.open <= self.close
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    Pickup,
    Delivery,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Unreleased,
    Open,
    Assigned,
    InTransit,
    Completed,
    Cancelled,
}

impl TaskStatus {
    /// Whether the lifecycle permits moving from `self` to `next`.
    pub fn can_become(self, next: TaskStatus) -> bool {
        use TaskStatus::*;
        matches!(
            (self, next),
            (Unreleased, Open)
                | (Unreleased, Cancelled)
                | (Open, Assigned)
                | (Assigned, Open)
                | (Assigned, InTransit)
                | (InTransit, Completed)
                | (Open, Cancelled)
                | (Assigned, Cancelled)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub mode: TaskMode,
    pub window: TimeWindow,
    pub load: f64,
    pub service_time: f64,
    pub origin: Position,
    /// The warehouse for pickup tasks, the paired destination for deliveries.
    pub destination: Position,
    pub human_only: bool,
    pub robot_only: bool,
    pub release_time: f64,
    pub status: TaskStatus,
}

impl Task {
    pub fn allows(&self, kind: AgentKind) -> bool {
        match kind {
            AgentKind::Robot => !self.human_only,
            AgentKind::Human => !self.robot_only,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Robot,
    Human,
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Robot => "robot",
            AgentKind::Human => "human",
        })
    }
}

/// Motion direction. East is +col, north is -row (rows grow downward).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heading {
    #[default]
    East,
    North,
    West,
    South,
}

impl Heading {
    pub fn angle(self) -> f64 {
        use std::f64::consts::{FRAC_PI_2, PI};
        match self {
            Heading::East => 0.0,
            Heading::North => FRAC_PI_2,
            Heading::West => PI,
            Heading::South => -FRAC_PI_2,
        }
    }

    pub fn from_angle(theta: f64) -> Option<Heading> {
        [Heading::East, Heading::North, Heading::West, Heading::South]
            .into_iter()
            .find(|h| (h.angle() - theta).abs() < 1e-9)
    }

    /// Column and row offset of one move; derived from (cos θ, sin θ) with
    /// the row axis flipped.
    pub fn offset(self) -> (i32, i32) {
        let theta = self.angle();
        (theta.cos().round() as i32, -(theta.sin().round() as i32))
    }

    pub fn between(from: Position, to: Position) -> Option<Heading> {
        [Heading::East, Heading::North, Heading::West, Heading::South]
            .into_iter()
            .find(|h| {
                let (dc, dr) = h.offset();
                from.offset(dc, dr) == Some(to)
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    PickupMode,
    DeliveryMode,
    ChargingMode,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::PickupMode => "pickup",
            Mode::DeliveryMode => "delivery",
            Mode::ChargingMode => "charging",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub kind: AgentKind,
    pub position: Position,
    pub heading: Heading,
    pub mode: Mode,
    pub capacity: f64,
    pub load: f64,
    pub energy: f64,
    pub energy_threshold: f64,
    /// Meters per second.
    pub speed: f64,
    pub task_chain: Vec<TaskId>,
}

impl AgentState {
    pub fn needs_charge(&self) -> bool {
        self.energy <= self.energy_threshold
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    ReleaseTask { task: TaskId },
    CancelTask { task: TaskId },
    HumanWrongTask { human: AgentId, task: TaskId },
    EnergyDrop { agent: AgentId, amount: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub at: f64,
    pub kind: EventKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Update period T in seconds.
    pub update_period: f64,
    /// Prediction horizon T_D in seconds.
    pub horizon: f64,
    /// Minimum time step: seconds to cross one cell.
    pub phi: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub big_m: f64,
    pub energy_per_move: f64,
    pub charge_duration: f64,
    pub seed: u64,
    /// Step cap, in update periods.
    pub max_updates: u32,
}

impl Params {
    pub fn steps_per_update(&self) -> u32 {
        (self.update_period / self.phi).round().max(1.0) as u32
    }

    pub fn horizon_steps(&self) -> u32 {
        (self.horizon / self.phi).round().max(0.0) as u32
    }

    pub fn steps_for(&self, seconds: f64) -> u32 {
        (seconds / self.phi - TIME_EPS).ceil().max(0.0) as u32
    }
}

/// Default penalty constant: dominates any feasible route cost on the map.
pub fn default_big_m(map: &GridMap, task_count: usize) -> f64 {
    10.0 * (f64::from(map.width()) + f64::from(map.height()))
        * map.grid_side()
        * task_count.max(1) as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub map: GridMap,
    pub agents: Vec<AgentState>,
    pub tasks: Vec<Task>,
    pub events: Vec<Event>,
    pub params: Params,
}

impl Scenario {
    pub fn task(&self, id: TaskId) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.id == id)
    }

    /// The robot speed, which fixes the minimum time step.
    pub fn robot_speed(&self) -> Option<f64> {
        self.agents
            .iter()
            .find(|a| a.kind == AgentKind::Robot)
            .map(|a| a.speed)
    }
}

/// A violated scenario invariant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Violation {
    TaskLoadExceedsCapacity {
        task: TaskId,
        load: f64,
        min_capacity: f64,
    },
    NonPositiveLoad {
        task: TaskId,
    },
    BothRestrictions {
        task: TaskId,
    },
    InvalidWindow {
        task: TaskId,
    },
    NegativeServiceTime {
        task: TaskId,
    },
    PickupNotToWarehouse {
        task: TaskId,
    },
    EndpointNotPassable {
        task: TaskId,
        position: Position,
    },
    EndpointUnreachable {
        task: TaskId,
        position: Position,
    },
    DuplicateTaskId {
        task: TaskId,
    },
    DuplicateAgentId {
        agent: AgentId,
    },
    AgentNotPassable {
        agent: AgentId,
        position: Position,
    },
    AgentUnreachable {
        agent: AgentId,
        position: Position,
    },
    DuplicatePosition {
        agents: (AgentId, AgentId),
        position: Position,
    },
    LoadExceedsCapacity {
        agent: AgentId,
    },
    NegativeEnergy {
        agent: AgentId,
    },
    NonPositiveSpeed {
        agent: AgentId,
    },
    MixedRobotSpeeds,
    PhiMismatch {
        phi: f64,
        expected: f64,
    },
    UpdateNotMultipleOfPhi,
    HorizonNotMultipleOfUpdate,
    AlphaOutOfRange {
        alpha: f64,
    },
    NegativeGamma {
        gamma: f64,
    },
    BigMTooSmall {
        big_m: f64,
        bound: f64,
    },
    UnknownEventTask {
        task: TaskId,
    },
    UnknownEventAgent {
        agent: AgentId,
    },
    EventNotHuman {
        agent: AgentId,
    },
    NegativeEventTime,
    ZeroStepCap,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            TaskLoadExceedsCapacity {
                task,
                load,
                min_capacity,
            } => write!(
                f,
                "task {task}: load {load} exceeds the smallest agent capacity {min_capacity}"
            ),
            NonPositiveLoad { task } => write!(f, "task {task}: load must be positive"),
            BothRestrictions { task } => {
                write!(f, "task {task}: human_only and robot_only both set")
            }
            InvalidWindow { task } => write!(
                f,
                "task {task}: time window must satisfy 0 <= open <= close"
            ),
            NegativeServiceTime { task } => write!(f, "task {task}: negative service time"),
            PickupNotToWarehouse { task } => {
                write!(f, "task {task}: pickup destination is not the warehouse")
            }
            EndpointNotPassable { task, position } => {
                write!(f, "task {task}: endpoint {position} is not passable")
            }
            EndpointUnreachable { task, position } => {
                write!(f, "task {task}: endpoint {position} is unreachable")
            }
            DuplicateTaskId { task } => write!(f, "duplicate task id {task}"),
            DuplicateAgentId { agent } => write!(f, "duplicate agent id {agent}"),
            AgentNotPassable { agent, position } => {
                write!(f, "agent {agent}: start {position} is not passable")
            }
            AgentUnreachable { agent, position } => write!(
                f,
                "agent {agent}: start {position} cannot reach the warehouse"
            ),
            DuplicatePosition { agents, position } => {
                write!(
                    f,
                    "agents {} and {} both start at {position}",
                    agents.0, agents.1
                )
            }
            LoadExceedsCapacity { agent } => write!(f, "agent {agent}: load exceeds capacity"),
            NegativeEnergy { agent } => write!(f, "agent {agent}: negative energy"),
            NonPositiveSpeed { agent } => write!(f, "agent {agent}: speed must be positive"),
            MixedRobotSpeeds => write!(f, "robots must share one speed"),
            PhiMismatch { phi, expected } => write!(
                f,
                "phi {phi} differs from grid_side / robot speed = {expected}"
            ),
            UpdateNotMultipleOfPhi => write!(
                f,
                "update period T is not a positive integer multiple of phi"
            ),
            HorizonNotMultipleOfUpdate => {
                write!(f, "horizon T_D is not a positive integer multiple of T")
            }
            AlphaOutOfRange { alpha } => write!(f, "alpha {alpha} outside (0, 1)"),
            NegativeGamma { gamma } => write!(f, "gamma {gamma} is negative"),
            BigMTooSmall { big_m, bound } => write!(
                f,
                "big_m {big_m} does not exceed the route cost bound {bound}"
            ),
            UnknownEventTask { task } => write!(f, "event references unknown task {task}"),
            UnknownEventAgent { agent } => write!(f, "event references unknown agent {agent}"),
            EventNotHuman { agent } => {
                write!(f, "human_wrong_task event names non-human agent {agent}")
            }
            NegativeEventTime => write!(f, "event time is negative"),
            ZeroStepCap => write!(f, "max_updates must be positive"),
        }
    }
}

// NaN has to fail these checks, hence the negated comparisons
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn is_multiple(value: f64, unit: f64) -> bool {
    if !(unit > 0.0) || !(value > 0.0) {
        return false;
    }
    let ratio = value / unit;
    (ratio - ratio.round()).abs() < 1e-6 && ratio.round() >= 1.0
}

/// Reports every violated scenario invariant. An empty list means valid.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let map = &s.map;
    let warehouse = map.warehouse();
    let reach = map.distance_field(warehouse);
    let reachable = |p: Position| map.is_passable(p) && reach[map.index(p)].is_some();

    let min_capacity = s
        .agents
        .iter()
        .map(|a| a.capacity)
        .fold(f64::INFINITY, f64::min);

    let mut task_ids = BTreeSet::new();
    for t in &s.tasks {
        if !task_ids.insert(t.id) {
            out.push(Violation::DuplicateTaskId { task: t.id });
        }
        if !(t.load > 0.0) {
            out.push(Violation::NonPositiveLoad { task: t.id });
        } else if t.load > min_capacity {
            out.push(Violation::TaskLoadExceedsCapacity {
                task: t.id,
                load: t.load,
                min_capacity,
            });
        }
        if t.human_only && t.robot_only {
            out.push(Violation::BothRestrictions { task: t.id });
        }
        if !t.window.is_valid() {
            out.push(Violation::InvalidWindow { task: t.id });
        }
        if !(t.service_time >= 0.0) {
            out.push(Violation::NegativeServiceTime { task: t.id });
        }
        if t.mode == TaskMode::Pickup && t.destination != warehouse {
            out.push(Violation::PickupNotToWarehouse { task: t.id });
        }
        for p in [t.origin, t.destination] {
            if !map.is_passable(p) {
                out.push(Violation::EndpointNotPassable {
                    task: t.id,
                    position: p,
                });
            } else if !reachable(p) {
                out.push(Violation::EndpointUnreachable {
                    task: t.id,
                    position: p,
                });
            }
        }
    }

    let mut agent_ids = BTreeSet::new();
    let mut starts: BTreeMap<Position, AgentId> = BTreeMap::new();
    for a in &s.agents {
        if !agent_ids.insert(a.id) {
            out.push(Violation::DuplicateAgentId { agent: a.id });
        }
        if !map.is_passable(a.position) {
            out.push(Violation::AgentNotPassable {
                agent: a.id,
                position: a.position,
            });
        } else if !reachable(a.position) {
            out.push(Violation::AgentUnreachable {
                agent: a.id,
                position: a.position,
            });
        }
        if let Some(&other) = starts.get(&a.position) {
            out.push(Violation::DuplicatePosition {
                agents: (other, a.id),
                position: a.position,
            });
        } else {
            starts.insert(a.position, a.id);
        }
        if a.load < 0.0 || a.load > a.capacity {
            out.push(Violation::LoadExceedsCapacity { agent: a.id });
        }
        if a.energy < 0.0 {
            out.push(Violation::NegativeEnergy { agent: a.id });
        }
        if !(a.speed > 0.0) {
            out.push(Violation::NonPositiveSpeed { agent: a.id });
        }
    }

    let robot_speeds: Vec<f64> = s
        .agents
        .iter()
        .filter(|a| a.kind == AgentKind::Robot)
        .map(|a| a.speed)
        .collect();
    if robot_speeds.windows(2).any(|w| (w[0] - w[1]).abs() > 1e-12) {
        out.push(Violation::MixedRobotSpeeds);
    }
    let p = &s.params;
    if let Some(&v) = robot_speeds.first() {
        let expected = map.grid_side() / v;
        if v > 0.0 && (p.phi - expected).abs() > 1e-9 {
            out.push(Violation::PhiMismatch {
                phi: p.phi,
                expected,
            });
        }
    }
    if !is_multiple(p.update_period, p.phi) {
        out.push(Violation::UpdateNotMultipleOfPhi);
    }
    if !is_multiple(p.horizon, p.update_period) {
        out.push(Violation::HorizonNotMultipleOfUpdate);
    }
    if !(p.alpha > 0.0 && p.alpha < 1.0) {
        out.push(Violation::AlphaOutOfRange { alpha: p.alpha });
    }
    if !(p.gamma >= 0.0) {
        out.push(Violation::NegativeGamma { gamma: p.gamma });
    }
    if !s.tasks.is_empty() {
        let bound = route_cost_bound(s);
        if !(p.big_m > bound) {
            out.push(Violation::BigMTooSmall {
                big_m: p.big_m,
                bound,
            });
        }
    }
    if p.max_updates == 0 {
        out.push(Violation::ZeroStepCap);
    }

    for e in &s.events {
        if !(e.at >= 0.0) {
            out.push(Violation::NegativeEventTime);
        }
        let (task, agent) = match e.kind {
            EventKind::ReleaseTask { task } | EventKind::CancelTask { task } => (Some(task), None),
            EventKind::HumanWrongTask { human, task } => (Some(task), Some(human)),
            EventKind::EnergyDrop { agent, .. } => (None, Some(agent)),
        };
        if let Some(task) = task {
            if !task_ids.contains(&task) {
                out.push(Violation::UnknownEventTask { task });
            }
        }
        if let Some(agent) = agent {
            match s.agent(agent) {
                None => out.push(Violation::UnknownEventAgent { agent }),
                Some(a)
                    if matches!(e.kind, EventKind::HumanWrongTask { .. })
                        && a.kind != AgentKind::Human =>
                {
                    out.push(Violation::EventNotHuman { agent })
                }
                Some(_) => {}
            }
        }
    }
    out
}

/// Upper bound on the cost of any feasible allocation: at most three edges
/// per task (inbound, outbound, return leg), each no longer than the longest
/// free-space distance between relevant cells.
pub fn route_cost_bound(s: &Scenario) -> f64 {
    let map = &s.map;
    let mut points: Vec<Position> = s.agents.iter().map(|a| a.position).collect();
    for t in &s.tasks {
        points.push(t.origin);
        points.push(t.destination);
    }
    points.push(map.warehouse());
    points.retain(|p| map.is_passable(*p));
    points.sort();
    points.dedup();
    let mut longest = 0u32;
    for &p in &points {
        let field = map.distance_field(p);
        for &q in &points {
            if let Some(d) = field[map.index(q)] {
                longest = longest.max(d);
            }
        }
    }
    3.0 * s.tasks.len() as f64 * f64::from(longest) * map.grid_side()
}

/// Tasks eligible for allocation at an update boundary: released, still
/// open or assigned, with a window that has not closed.
pub fn active_tasks(s: &Scenario, now: f64) -> Vec<&Task> {
    s.tasks.iter().filter(|t| is_active(t, now)).collect()
}

pub(crate) fn is_active(t: &Task, now: f64) -> bool {
    t.release_time <= now + TIME_EPS
        && matches!(t.status, TaskStatus::Open | TaskStatus::Assigned)
        && t.window.close + TIME_EPS >= now
}

/// Whether a cell is one where agents may rest without occupying an endpoint.
pub fn is_road(map: &GridMap, p: Position) -> bool {
    map.kind(p) == Some(CellKind::Road)
}
