//! Helpers shared by the integration tests: scenario builders, random
//! generators, and reference implementations that share no code with the
//! library (their own BFS, cost formula and brute-force enumeration).

#![allow(dead_code)]

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap, VecDeque};

use hs2pd::domain::{AgentKind, AgentState, Scenario, Task, TaskMode};
use hs2pd::engine::Trace;
use hs2pd::pathfinding::{Leg, LegKind, LegTarget, PathPlan, RobotLegs};
use hs2pd::scenario::{
    AgentEntry, EventEntry, MapSection, ParamsSection, ScenarioFile, TaskEntry, TimeUnit,
};
use hs2pd::world::Position;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;
pub type Rng64 = ChaCha8Rng;

pub const EPS: f64 = 1e-9;

pub fn rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- maps

pub fn open_rows(w: usize, h: usize, warehouse: (usize, usize)) -> Vec<String> {
    (1..=h)
        .map(|r| {
            (1..=w)
                .map(|c| if (c, r) == warehouse { 'H' } else { '.' })
                .collect()
        })
        .collect()
}

fn cell(rows: &[String], p: Position) -> Option<char> {
    let r = rows.get(usize::from(p.row).checked_sub(1)?)?;
    r.chars().nth(usize::from(p.col).checked_sub(1)?)
}

pub fn passable(rows: &[String], p: Position) -> bool {
    cell(rows, p).is_some_and(|c| c != '#')
}

/// Breadth-first step count over 4-connected non-wall cells.
pub fn bfs(rows: &[String], a: Position, b: Position) -> Option<u32> {
    if !passable(rows, a) || !passable(rows, b) {
        return None;
    }
    let mut seen = BTreeMap::new();
    seen.insert(a, 0u32);
    let mut queue = VecDeque::from([a]);
    while let Some(p) = queue.pop_front() {
        let d = seen[&p];
        if p == b {
            return Some(d);
        }
        let (c, r) = (i32::from(p.col), i32::from(p.row));
        for (dc, dr) in [(0, -1), (1, 0), (0, 1), (-1, 0)] {
            let (nc, nr) = (c + dc, r + dr);
            if nc < 1 || nr < 1 {
                continue;
            }
            let q = Position::new(nc as u16, nr as u16);
            if passable(rows, q) && !seen.contains_key(&q) {
                seen.insert(q, d + 1);
                queue.push_back(q);
            }
        }
    }
    None
}

pub fn cells(rows: &[String]) -> Vec<Position> {
    let mut out = Vec::new();
    for (r, line) in rows.iter().enumerate() {
        for (c, _) in line.chars().enumerate() {
            out.push(Position::new(c as u16 + 1, r as u16 + 1));
        }
    }
    out
}

pub fn passable_cells(rows: &[String]) -> Vec<Position> {
    cells(rows)
        .into_iter()
        .filter(|&p| passable(rows, p))
        .collect()
}

fn set_cell(rows: &mut [String], p: Position, ch: char) {
    let r = &mut rows[usize::from(p.row) - 1];
    let c = usize::from(p.col) - 1;
    r.replace_range(c..=c, &ch.to_string());
}

/// A random connected map with one warehouse. Walls are added one at a time
/// and kept only if every open cell stays connected.
pub fn random_rows(rng: &mut Rng64, w: usize, h: usize, wall_share: f64) -> Vec<String> {
    let mut rows = open_rows(w, h, (0, 0));
    let all = cells(&rows);
    let target = ((w * h) as f64 * wall_share) as usize;
    let mut walls = 0;
    for _ in 0..(4 * target) {
        if walls >= target {
            break;
        }
        let p = *all.choose(rng).unwrap();
        if !passable(&rows, p) {
            continue;
        }
        set_cell(&mut rows, p, '#');
        if connected(&rows) {
            walls += 1;
        } else {
            set_cell(&mut rows, p, '.');
        }
    }
    let open = passable_cells(&rows);
    let wh = *open.choose(rng).unwrap();
    set_cell(&mut rows, wh, 'H');
    rows
}

pub fn connected(rows: &[String]) -> bool {
    let open = passable_cells(rows);
    let Some(&first) = open.first() else {
        return false;
    };
    open.iter().all(|&p| bfs(rows, first, p).is_some())
}

pub fn warehouse(rows: &[String]) -> Position {
    cells(rows)
        .into_iter()
        .find(|&p| cell(rows, p) == Some('H'))
        .unwrap()
}

pub fn mark(rows: &mut [String], p: Position, ch: char) {
    if cell(rows, p) == Some('.') {
        set_cell(rows, p, ch);
    }
}

// ---------------------------------------------------------------- files

pub fn params(t: f64, td: f64) -> ParamsSection {
    ParamsSection {
        update_period: t,
        horizon: td,
        phi: None,
        gamma: 0.5,
        alpha: 0.4,
        big_m: None,
        energy_per_move: 0.0,
        charge_duration: 0.0,
        seed: 0,
        max_updates: 100,
    }
}

pub fn agent(id: u32, kind: AgentKind, p: Position) -> AgentEntry {
    AgentEntry {
        id,
        kind,
        col: p.col,
        row: p.row,
        capacity: 60.0,
        energy: 100.0,
        energy_threshold: 0.0,
        speed: Some(1.0),
        goal: None,
    }
}

pub fn pickup(id: u32, origin: Position, open: f64, close: f64, load: f64) -> TaskEntry {
    TaskEntry {
        id,
        mode: TaskMode::Pickup,
        open,
        close,
        load,
        service_time: Some(1.0),
        origin: [origin.col, origin.row],
        destination: None,
        human_only: false,
        robot_only: false,
        release_time: 0.0,
    }
}

pub fn delivery(
    id: u32,
    origin: Position,
    dest: Position,
    open: f64,
    close: f64,
    load: f64,
) -> TaskEntry {
    TaskEntry {
        destination: Some([dest.col, dest.row]),
        mode: TaskMode::Delivery,
        ..pickup(id, origin, open, close, load)
    }
}

pub fn event(at: f64, kind: &str) -> EventEntry {
    EventEntry {
        at,
        kind: kind.into(),
        task: None,
        human: None,
        agent: None,
        amount: None,
    }
}

pub fn file(rows: Vec<String>, agents: Vec<AgentEntry>, tasks: Vec<TaskEntry>) -> ScenarioFile {
    ScenarioFile {
        time_unit: TimeUnit::Seconds,
        map: MapSection {
            grid_side: 1.0,
            rows,
        },
        params: params(5.0, 30.0),
        agents,
        tasks,
        events: Vec::new(),
    }
}

/// A random simulation scenario: a walled map with workstations at task
/// endpoints, a few robots and humans, and tasks released over time.
pub fn random_run_file(seed: u64) -> ScenarioFile {
    let mut rng = rng(seed);
    let w = rng.gen_range(6..=10);
    let h = rng.gen_range(5..=8);
    let mut rows = random_rows(&mut rng, w, h, 0.12);
    let wh = warehouse(&rows);
    let mut free: Vec<Position> = passable_cells(&rows)
        .into_iter()
        .filter(|&p| p != wh)
        .collect();
    free.shuffle(&mut rng);

    let robots = rng.gen_range(1..=3);
    let humans = rng.gen_range(0..=1);
    let mut agents = Vec::new();
    for id in 1..=(robots + humans) {
        let kind = if id <= robots {
            AgentKind::Robot
        } else {
            AgentKind::Human
        };
        agents.push(agent(id as u32, kind, free.pop().unwrap()));
    }
    let mut tasks = Vec::new();
    let n = rng.gen_range(0..=5);
    for id in 1..=n {
        let Some(origin) = free.pop() else { break };
        mark(&mut rows, origin, 'W');
        let open = f64::from(rng.gen_range(0..4u32)) * 5.0;
        let close = open + f64::from(rng.gen_range(6..12u32)) * 5.0;
        let load = f64::from(rng.gen_range(1..=6u32)) * 5.0;
        let mut t = if rng.gen_bool(0.6) {
            pickup(id, origin, open, close, load)
        } else {
            let Some(dest) = free.pop() else { break };
            mark(&mut rows, dest, 'W');
            delivery(id, origin, dest, open, close, load)
        };
        t.service_time = Some(f64::from(rng.gen_range(0..=2u32)));
        if humans > 0 && rng.gen_bool(0.15) {
            t.human_only = true;
        } else if rng.gen_bool(0.15) {
            t.robot_only = true;
        }
        if rng.gen_bool(0.3) {
            t.release_time = open.min(5.0 * f64::from(rng.gen_range(1..3u32)));
            t.open = t.open.max(t.release_time);
            t.close = t.close.max(t.open + 30.0);
        }
        tasks.push(t);
    }
    let mut f = file(rows, agents, tasks);
    f.params.seed = seed;
    f.params.max_updates = 60;
    f
}

// ---------------------------------------------------------------- traces

/// Vertex and swap conflicts between any two agents, recomputed from raw rows.
pub fn unsafe_steps(trace: &Trace) -> Vec<String> {
    let mut at: BTreeMap<u32, BTreeMap<u32, Position>> = BTreeMap::new();
    for r in &trace.rows {
        at.entry(r.step).or_default().insert(r.agent, r.position);
    }
    let mut out = Vec::new();
    let steps: Vec<u32> = at.keys().copied().collect();
    for (k, s) in steps.iter().enumerate() {
        let now = &at[s];
        for (a, pa) in now {
            for (b, pb) in now {
                if a >= b {
                    continue;
                }
                if pa == pb {
                    out.push(format!("step {s}: {a} and {b} share {pa}"));
                }
                if k > 0 {
                    let before = &at[&steps[k - 1]];
                    if before.get(a) == Some(pb) && before.get(b) == Some(pa) && pa != pb {
                        out.push(format!("step {s}: {a} and {b} swap"));
                    }
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------- allocation

/// A reference allocation problem: agents all ready at time zero.
pub struct RefProblem {
    pub rows: Vec<String>,
    pub side: f64,
    pub agents: Vec<AgentState>,
    pub tasks: Vec<Task>,
    pub alpha: f64,
    pub gamma: f64,
    pub big_m: f64,
    pub horizon_end: f64,
    cache: RefCell<HashMap<(Position, Position), f64>>,
}

impl RefProblem {
    pub fn from_scenario(s: &Scenario, horizon_end: f64) -> RefProblem {
        let mut agents = s.agents.clone();
        agents.sort_by_key(|a| a.id);
        let mut tasks = s.tasks.clone();
        tasks.sort_by_key(|t| t.id);
        RefProblem {
            rows: s.map.rows(),
            side: s.map.grid_side(),
            agents,
            tasks,
            alpha: s.params.alpha,
            gamma: s.params.gamma,
            big_m: s.params.big_m,
            horizon_end,
            cache: RefCell::default(),
        }
    }

    pub fn dist(&self, a: Position, b: Position) -> f64 {
        if let Some(&d) = self.cache.borrow().get(&(a, b)) {
            return d;
        }
        let d = bfs(&self.rows, a, b).map_or(f64::INFINITY, |d| f64::from(d) * self.side);
        self.cache.borrow_mut().insert((a, b), d);
        d
    }

    fn weight(&self, kind: AgentKind) -> f64 {
        match kind {
            AgentKind::Robot => self.alpha,
            AgentKind::Human => 1.0 - self.alpha,
        }
    }

    fn allowed(t: &Task, kind: AgentKind) -> bool {
        match kind {
            AgentKind::Robot => !t.human_only,
            AgentKind::Human => !t.robot_only,
        }
    }

    fn omega(&self, kind: AgentKind, allowed: bool, d: f64) -> f64 {
        self.weight(kind) * d + if allowed { 0.0 } else { self.big_m }
    }

    pub fn charging(&self, a: usize) -> bool {
        self.agents[a].energy <= self.agents[a].energy_threshold
    }

    pub fn pickups(&self) -> Vec<usize> {
        (0..self.tasks.len())
            .filter(|&j| self.tasks[j].mode == TaskMode::Pickup)
            .collect()
    }

    pub fn deliveries(&self) -> Vec<usize> {
        (0..self.tasks.len())
            .filter(|&j| self.tasks[j].mode == TaskMode::Delivery)
            .collect()
    }

    /// Unassigned-task penalty.
    pub fn penalty(&self, j: usize) -> f64 {
        let t = &self.tasks[j];
        let d = (0..self.agents.len())
            .filter(|&a| !self.charging(a) && self.agents[a].load <= EPS)
            .map(|a| self.dist(self.agents[a].position, t.origin))
            .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))))
            .unwrap_or(0.0);
        let reach = self
            .omega(AgentKind::Robot, Self::allowed(t, AgentKind::Robot), d)
            .max(self.omega(AgentKind::Human, Self::allowed(t, AgentKind::Human), d));
        if t.mode == TaskMode::Delivery {
            return reach;
        }
        let back = self.dist(t.origin, warehouse(&self.rows));
        reach + self.alpha.max(1.0 - self.alpha) * back
    }

    /// Arrival instants along a chain, or `None` if a window or the horizon
    /// is missed.
    pub fn schedule(&self, a: usize, chain: &[usize]) -> Option<Vec<f64>> {
        let agent = &self.agents[a];
        let mut t = 0.0;
        let mut at = agent.position;
        let mut out = Vec::new();
        for &j in chain {
            let task = &self.tasks[j];
            let arrive = t + self.dist(at, task.origin) / agent.speed;
            let start = arrive.max(task.window.open);
            if !(start <= task.window.close + EPS && start <= self.horizon_end + EPS) {
                return None;
            }
            out.push(start);
            t = start + task.service_time;
            at = task.origin;
        }
        Some(out)
    }

    pub fn chain_feasible(&self, a: usize, chain: &[usize]) -> bool {
        let agent = &self.agents[a];
        let load: f64 = chain.iter().map(|&j| self.tasks[j].load).sum();
        chain
            .iter()
            .all(|&j| Self::allowed(&self.tasks[j], agent.kind))
            && agent.load + load <= agent.capacity + EPS
            && self.schedule(a, chain).is_some()
    }

    pub fn chain_cost(&self, a: usize, chain: &[usize]) -> f64 {
        let agent = &self.agents[a];
        let Some(&last) = chain.last() else {
            return 0.0;
        };
        let mut at = agent.position;
        let mut cost = 0.0;
        for &j in chain {
            let t = &self.tasks[j];
            cost += self.omega(
                agent.kind,
                Self::allowed(t, agent.kind),
                self.dist(at, t.origin),
            );
            at = t.origin;
        }
        cost + self.weight(agent.kind) * self.dist(self.tasks[last].origin, warehouse(&self.rows))
    }

    /// Cheapest feasible order of `set` for agent `a`.
    fn best_order(&self, a: usize, set: &[usize]) -> f64 {
        let mut best = f64::INFINITY;
        let mut order = set.to_vec();
        permutations(&mut order, 0, &mut |chain| {
            if self.chain_feasible(a, chain) {
                best = best.min(self.chain_cost(a, chain));
            }
        });
        best
    }

    /// Minimum C_P over every task-to-agent map and visiting order.
    pub fn pickup_optimum(&self, agents: &[usize]) -> f64 {
        let tasks = self.pickups();
        let mut best = f64::INFINITY;
        let choices = agents.len() + 1;
        let total = choices.pow(tasks.len() as u32);
        for code in 0..total {
            let mut c = code;
            let mut sets = vec![Vec::new(); agents.len()];
            let mut cost = 0.0;
            for &j in &tasks {
                let k = c % choices;
                c /= choices;
                if k == 0 {
                    cost += self.penalty(j);
                } else {
                    sets[k - 1].push(j);
                }
            }
            for (k, set) in sets.iter().enumerate() {
                if !set.is_empty() {
                    cost += self.best_order(agents[k], set);
                }
            }
            best = best.min(cost);
        }
        best
    }

    /// Same optimum as [`Self::pickup_optimum`], computed by a subset DP over
    /// agents so that larger instances stay tractable.
    pub fn pickup_optimum_dp(&self, agents: &[usize]) -> f64 {
        let tasks = self.pickups();
        let n = tasks.len();
        let full = 1usize << n;
        let subset = |mask: usize| -> Vec<usize> {
            (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| tasks[i])
                .collect()
        };
        let mut best_for: Vec<Vec<f64>> = Vec::new();
        for &a in agents {
            let agent = &self.agents[a];
            let mut row = vec![f64::INFINITY; full];
            row[0] = 0.0;
            for (mask, slot) in row.iter_mut().enumerate().skip(1) {
                let set = subset(mask);
                let load: f64 = set.iter().map(|&j| self.tasks[j].load).sum();
                if agent.load + load <= agent.capacity + EPS {
                    *slot = self.best_order(a, &set);
                }
            }
            best_for.push(row);
        }
        // cost[used] after the agents seen so far
        let mut cost = vec![f64::INFINITY; full];
        cost[0] = 0.0;
        for row in &best_for {
            let mut next = vec![f64::INFINITY; full];
            for used in 0..full {
                if cost[used].is_infinite() {
                    continue;
                }
                let rest = (full - 1) & !used;
                let mut sub = rest;
                loop {
                    let c = cost[used] + row[sub];
                    if c < next[used | sub] {
                        next[used | sub] = c;
                    }
                    if sub == 0 {
                        break;
                    }
                    sub = (sub - 1) & rest;
                }
            }
            cost = next;
        }
        (0..full)
            .map(|used| {
                let penalties: f64 = (0..n)
                    .filter(|i| used & (1 << i) == 0)
                    .map(|i| self.penalty(tasks[i]))
                    .sum();
                cost[used] + penalties
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Minimum C_D over every partial one-to-one agent/task map.
    pub fn delivery_optimum(&self, agents: &[usize]) -> f64 {
        let tasks = self.deliveries();
        let mut best = f64::INFINITY;
        let choices = agents.len() + 1;
        let total = choices.pow(tasks.len() as u32);
        'codes: for code in 0..total {
            let mut c = code;
            let mut used = vec![false; agents.len()];
            let mut cost = 0.0;
            for &j in &tasks {
                let k = c % choices;
                c /= choices;
                if k == 0 {
                    cost += self.penalty(j);
                    continue;
                }
                if used[k - 1] {
                    continue 'codes;
                }
                used[k - 1] = true;
                let a = agents[k - 1];
                let agent = &self.agents[a];
                let t = &self.tasks[j];
                if !Self::allowed(t, agent.kind) || agent.load + t.load > agent.capacity + EPS {
                    continue 'codes;
                }
                if self.schedule(a, &[j]).is_none() {
                    continue 'codes;
                }
                cost += self.omega(agent.kind, true, self.dist(agent.position, t.origin));
            }
            best = best.min(cost);
        }
        best
    }

    /// Minimum F over every pickup/delivery split of the non-charging agents.
    pub fn mode_optimum(&self) -> f64 {
        let free: Vec<usize> = (0..self.agents.len())
            .filter(|&a| !self.charging(a))
            .collect();
        let mut best = f64::INFINITY;
        for mask in 0..(1u32 << free.len()) {
            let p: Vec<usize> = free
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) == 0)
                .map(|(_, &a)| a)
                .collect();
            let d: Vec<usize> = free
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, &a)| a)
                .collect();
            best = best.min(self.pickup_optimum_dp(&p) + self.gamma * self.delivery_optimum(&d));
        }
        best
    }

    pub fn task_index(&self, id: u32) -> usize {
        self.tasks.iter().position(|t| t.id == id).unwrap()
    }

    pub fn agent_index(&self, id: u32) -> usize {
        self.agents.iter().position(|a| a.id == id).unwrap()
    }
}

fn permutations(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, f);
        v.swap(k, i);
    }
}

pub fn close(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// A random allocation problem on an open map of at most 8 x 8 cells.
pub struct AllocSpec {
    pub max_agents: usize,
    pub max_pickups: usize,
    pub max_deliveries: usize,
    pub depleted_share: f64,
}

pub fn random_alloc_file(seed: u64, spec: &AllocSpec) -> ScenarioFile {
    let mut rng = rng(seed);
    let w = rng.gen_range(3..=8usize);
    let h = rng.gen_range(3..=8usize);
    let wall_share = if rng.gen_bool(0.5) { 0.0 } else { 0.15 };
    let rows = random_rows(&mut rng, w, h, wall_share);
    let mut spots = passable_cells(&rows);
    spots.shuffle(&mut rng);
    let n_agents = rng.gen_range(1..=spec.max_agents);
    let mut agents = Vec::new();
    for id in 1..=n_agents {
        let kind = if rng.gen_bool(0.65) {
            AgentKind::Robot
        } else {
            AgentKind::Human
        };
        let mut a = agent(id as u32, kind, spots[id - 1]);
        a.speed = Some(if kind == AgentKind::Robot {
            1.0
        } else {
            [0.5, 1.0][rng.gen_range(0..2)]
        });
        if rng.gen_bool(spec.depleted_share) {
            a.energy = 0.0;
            a.energy_threshold = 5.0;
        } else {
            a.energy_threshold = 5.0;
        }
        agents.push(a);
    }
    let all = passable_cells(&rows);
    let mut tasks = Vec::new();
    let np = rng.gen_range(0..=spec.max_pickups);
    let nd = rng.gen_range(0..=spec.max_deliveries);
    for k in 0..(np + nd) {
        let id = k as u32 + 1;
        let origin = *all.choose(&mut rng).unwrap();
        let open = f64::from(rng.gen_range(0..15u32));
        let close = open + f64::from(rng.gen_range(0..25u32));
        let load = f64::from(rng.gen_range(1..=8u32)) * 5.0;
        let mut t = if k < np {
            pickup(id, origin, open, close, load)
        } else {
            delivery(
                id,
                origin,
                *all.choose(&mut rng).unwrap(),
                open,
                close,
                load,
            )
        };
        t.service_time = Some(f64::from(rng.gen_range(0..=3u32)));
        match rng.gen_range(0..8) {
            0 => t.human_only = true,
            1 => t.robot_only = true,
            _ => {}
        }
        tasks.push(t);
    }
    // robots fix phi = grid_side / speed; a human-only fleet keeps phi = 1
    let mut f = file(rows, agents, tasks);
    f.params.alpha = [0.2, 0.4, 0.5, 0.7][rng.gen_range(0..4)];
    f.params.gamma = [0.0, 0.5, 1.0, 2.0][rng.gen_range(0..4)];
    f.params.phi = Some(1.0);
    f
}

// ---------------------------------------------------------------- planning

pub fn leg(agent: u32, goal: Position, close: f64) -> Leg {
    Leg {
        agent,
        task: Some(agent),
        kind: LegKind::Pickup,
        target: LegTarget::Cell(goal),
        open_step: 0,
        close: Some(close),
        service_steps: 0,
    }
}

pub fn random_legs(rng: &mut Rng64, grid: &[String], n: usize) -> Vec<RobotLegs> {
    let mut spots = passable_cells(grid);
    spots.shuffle(rng);
    (0..n)
        .map(|k| {
            let agent = k as u32 + 1;
            let legs = (0..rng.gen_range(1..=2))
                .map(|i| {
                    let mut l = leg(
                        agent,
                        *spots.choose(rng).unwrap(),
                        f64::from(rng.gen_range(5..40u32)),
                    );
                    l.task = Some(agent * 10 + i);
                    l.open_step = rng.gen_range(0..6);
                    l.service_steps = rng.gen_range(0..3);
                    l
                })
                .collect();
            RobotLegs {
                agent,
                start: spots[k],
                legs,
            }
        })
        .collect()
}

/// Vertex and swap checks over the plans joined per robot.
pub fn independent_conflicts(plans: &[PathPlan], still: &[Position]) -> usize {
    let mut traj: std::collections::BTreeMap<u32, Vec<(u32, Position)>> = Default::default();
    for (k, &c) in still.iter().enumerate() {
        traj.insert(u32::MAX - k as u32, vec![(0, c)]);
    }
    for pl in plans {
        for (k, &c) in pl.cells.iter().enumerate() {
            traj.entry(pl.agent)
                .or_default()
                .push((pl.start_step + k as u32, c));
        }
    }
    let end = traj.values().flatten().map(|(t, _)| *t).max().unwrap_or(0);
    let pos = |v: &Vec<(u32, Position)>, t: u32| -> Position {
        v.iter()
            .filter(|(s, _)| *s <= t)
            .max_by_key(|(s, _)| *s)
            .map(|(_, c)| *c)
            .unwrap_or(v[0].1)
    };
    let agents: Vec<&Vec<(u32, Position)>> = traj.values().collect();
    let mut bad = 0;
    for t in 0..=end {
        for i in 0..agents.len() {
            for j in (i + 1)..agents.len() {
                let (a, b) = (pos(agents[i], t), pos(agents[j], t));
                let swap = pos(agents[i], t + 1) == b && pos(agents[j], t + 1) == a;
                if a == b || swap {
                    bad += 1;
                }
            }
        }
    }
    bad
}

// ---------------------------------------------------------------- events

/// One robot, one human: the human takes the robot's task at 5 s, task 10 is
/// cancelled at 10 s and task 11 is released early at 7 s.
pub fn scripted_events() -> ScenarioFile {
    let mut g = open_rows(10, 6, (1, 1));
    for c in [
        Position::new(9, 6),
        Position::new(5, 3),
        Position::new(8, 2),
    ] {
        mark(&mut g, c, 'W');
    }
    let stolen = pickup(9, Position::new(9, 6), 0.0, 120.0, 10.0);
    let cancelled = pickup(10, Position::new(5, 3), 40.0, 120.0, 10.0);
    let mut late = pickup(11, Position::new(8, 2), 50.0, 150.0, 10.0);
    late.release_time = 50.0;
    let mut f = file(
        g,
        vec![
            agent(1, AgentKind::Robot, Position::new(1, 6)),
            agent(2, AgentKind::Human, Position::new(5, 1)),
        ],
        vec![stolen, cancelled, late],
    );
    let mut wrong = event(5.0, "human_wrong_task");
    wrong.human = Some(2);
    wrong.task = Some(9);
    let mut cancel = event(10.0, "cancel_task");
    cancel.task = Some(10);
    let mut release = event(7.0, "release_task");
    release.task = Some(11);
    f.events = vec![wrong, cancel, release];
    // long enough to see task 11 as soon as it is released
    f.params.horizon = 60.0;
    f
}
