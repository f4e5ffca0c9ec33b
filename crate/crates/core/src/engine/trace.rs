use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::domain::{AgentId, AgentKind, Scenario, TaskId};
use crate::world::Position;

pub const TRACE_HEADER: &str = "step,agent_id,kind,col,row,mode,load,action,task_id";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Init,
    Move,
    Wait,
    Blocked,
    Serve,
    Load,
    Unload,
    Charge,
}

impl Action {
    pub fn label(self) -> &'static str {
        match self {
            Action::Init => "init",
            Action::Move => "move",
            Action::Wait => "wait",
            Action::Blocked => "blocked",
            Action::Serve => "serve",
            Action::Load => "load",
            Action::Unload => "unload",
            Action::Charge => "charge",
        }
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "init" => Action::Init,
            "move" => Action::Move,
            "wait" => Action::Wait,
            "blocked" => Action::Blocked,
            "serve" => Action::Serve,
            "load" => Action::Load,
            "unload" => Action::Unload,
            "charge" => Action::Charge,
            other => return Err(format!("unknown action {other:?}")),
        })
    }
}

/// One agent's state after a step.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub step: u32,
    pub agent: AgentId,
    pub kind: AgentKind,
    pub position: Position,
    pub mode: String,
    pub load: f64,
    pub action: Action,
    pub task: Option<TaskId>,
}

impl fmt::Display for TraceRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{},{},{},",
            self.step,
            self.agent,
            self.kind,
            self.position.col,
            self.position.row,
            self.mode,
            self.load,
            self.action.label()
        )?;
        match self.task {
            Some(t) => write!(f, "{t}"),
            None => f.write_str("-"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("trace header must be {TRACE_HEADER:?}")]
    Header,
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
}

impl Trace {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 32);
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{r}");
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Trace, TraceError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == TRACE_HEADER => {}
            _ => return Err(TraceError::Header),
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let err = |message: String| TraceError::Row {
                line: i + 1,
                message,
            };
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 9 {
                return Err(err(format!("expected 9 fields, found {}", f.len())));
            }
            let num = |s: &str, what: &str| {
                s.parse::<u32>()
                    .map_err(|_| err(format!("bad {what} {s:?}")))
            };
            let kind = match f[2] {
                "robot" => AgentKind::Robot,
                "human" => AgentKind::Human,
                other => return Err(err(format!("unknown agent kind {other:?}"))),
            };
            let col = num(f[3], "col")?;
            let row = num(f[4], "row")?;
            let position = Position::new(
                u16::try_from(col).map_err(|_| err("col out of range".into()))?,
                u16::try_from(row).map_err(|_| err("row out of range".into()))?,
            );
            rows.push(TraceRow {
                step: num(f[0], "step")?,
                agent: num(f[1], "agent id")?,
                kind,
                position,
                mode: f[5].to_string(),
                load: f[6]
                    .parse()
                    .map_err(|_| err(format!("bad load {:?}", f[6])))?,
                action: f[7].parse().map_err(err)?,
                task: if f[8] == "-" {
                    None
                } else {
                    Some(num(f[8], "task id")?)
                },
            });
        }
        Ok(Trace { rows })
    }

    /// Positions per step, keyed by agent.
    pub fn positions(&self) -> BTreeMap<u32, BTreeMap<AgentId, Position>> {
        let mut out: BTreeMap<u32, BTreeMap<AgentId, Position>> = BTreeMap::new();
        for r in &self.rows {
            out.entry(r.step).or_default().insert(r.agent, r.position);
        }
        out
    }

    pub fn last_step(&self) -> u32 {
        self.rows.iter().map(|r| r.step).max().unwrap_or(0)
    }
}

/// A pair of agents in the same cell, or trading cells, at one step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceConflict {
    pub step: u32,
    pub agents: (AgentId, AgentId),
    /// The shared cell, or `None` for a swap.
    pub cell: Option<Position>,
}

impl fmt::Display for TraceConflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.agents;
        match self.cell {
            Some(p) => write!(
                f,
                "step {}: vertex conflict, agents {a} and {b} both at {p}",
                self.step
            ),
            None => write!(
                f,
                "step {}: swap conflict, agents {a} and {b} trade cells",
                self.step
            ),
        }
    }
}

/// Every shared-cell and swap event between two agents.
pub fn trace_conflicts(trace: &Trace) -> Vec<TraceConflict> {
    let steps = trace.positions();
    let mut out = Vec::new();
    let mut prev: Option<&BTreeMap<AgentId, Position>> = None;
    for (&step, at) in &steps {
        let agents: Vec<(&AgentId, &Position)> = at.iter().collect();
        for i in 0..agents.len() {
            for j in (i + 1)..agents.len() {
                let (&a, &pa) = agents[i];
                let (&b, &pb) = agents[j];
                if pa == pb {
                    out.push(TraceConflict {
                        step,
                        agents: (a, b),
                        cell: Some(pa),
                    });
                } else if let Some(prev) = prev {
                    if prev.get(&a) == Some(&pb) && prev.get(&b) == Some(&pa) {
                        out.push(TraceConflict {
                            step,
                            agents: (a, b),
                            cell: None,
                        });
                    }
                }
            }
        }
        prev = Some(at);
    }
    out
}

pub fn count_collisions(trace: &Trace) -> usize {
    trace_conflicts(trace).len()
}

/// Checks a trace against a scenario: every agent appears once per step,
/// starts where declared, moves at most one cell per step onto passable
/// cells, respects capacity, and never collides. A task's pickup instant is
/// the step its goods were loaded at the origin minus the service time, and
/// must lie inside the task's window.
pub fn validate_trace(trace: &Trace, scenario: &Scenario) -> Vec<String> {
    let mut problems = Vec::new();
    let steps = trace.positions();
    let Some(first) = steps.get(&0) else {
        return vec!["trace has no step 0".into()];
    };
    for a in &scenario.agents {
        if first.get(&a.id) != Some(&a.position) {
            problems.push(format!("agent {} does not start at {}", a.id, a.position));
        }
    }
    let mut counts: BTreeMap<(u32, AgentId), usize> = BTreeMap::new();
    for r in &trace.rows {
        *counts.entry((r.step, r.agent)).or_default() += 1;
        let Some(agent) = scenario.agent(r.agent) else {
            problems.push(format!("step {}: unknown agent {}", r.step, r.agent));
            continue;
        };
        if agent.kind != r.kind {
            problems.push(format!(
                "step {}: agent {} has the wrong kind",
                r.step, r.agent
            ));
        }
        if !scenario.map.is_passable(r.position) {
            problems.push(format!(
                "step {}: agent {} on blocked cell {}",
                r.step, r.agent, r.position
            ));
        }
        if r.load > agent.capacity + 1e-9 || r.load < -1e-9 {
            problems.push(format!(
                "step {}: agent {} load {} outside capacity",
                r.step, r.agent, r.load
            ));
        }
    }
    for ((step, agent), n) in counts {
        if n != 1 {
            problems.push(format!("step {step}: agent {agent} appears {n} times"));
        }
    }
    let mut prev: Option<(u32, &BTreeMap<AgentId, Position>)> = None;
    for (&step, at) in &steps {
        if at.len() != scenario.agents.len() {
            problems.push(format!(
                "step {step}: {} of {} agents present",
                at.len(),
                scenario.agents.len()
            ));
        }
        if let Some((ps, before)) = prev {
            if step != ps + 1 {
                problems.push(format!("steps jump from {ps} to {step}"));
            }
            for (id, p) in at {
                if let Some(q) = before.get(id) {
                    if p.manhattan(*q) > 1 {
                        problems.push(format!("step {step}: agent {id} jumps from {q} to {p}"));
                    }
                }
            }
        }
        prev = Some((step, at));
    }
    problems.extend(trace_conflicts(trace).iter().map(ToString::to_string));
    problems.extend(window_violations(trace, scenario));
    problems
}

fn window_violations(trace: &Trace, scenario: &Scenario) -> Vec<String> {
    let p = &scenario.params;
    let mut seen = BTreeMap::new();
    for r in &trace.rows {
        let Some(id) = r.task else { continue };
        if r.action != Action::Load || seen.contains_key(&id) {
            continue;
        }
        let Some(task) = scenario.task(id) else {
            seen.insert(
                id,
                format!("step {}: agent {} loads unknown task {id}", r.step, r.agent),
            );
            continue;
        };
        if r.position != task.origin {
            seen.insert(
                id,
                format!(
                    "step {}: agent {} loads task {id} away from its origin",
                    r.step, r.agent
                ),
            );
            continue;
        }
        let at = f64::from(r.step.saturating_sub(p.steps_for(task.service_time))) * p.phi;
        let problem = if task.window.contains(at) {
            String::new()
        } else {
            format!(
                "step {}: window violation, agent {} picks up task {id} at {at} s outside [{}, {}]",
                r.step, r.agent, task.window.open, task.window.close
            )
        };
        seen.insert(id, problem);
    }
    seen.into_values().filter(|m| !m.is_empty()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u32, agent: AgentId, col: u16, row: u16) -> TraceRow {
        TraceRow {
            step,
            agent,
            kind: AgentKind::Robot,
            position: Position::new(col, row),
            mode: "pickup".into(),
            load: 0.0,
            action: Action::Move,
            task: Some(3),
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut t = Trace {
            rows: vec![row(0, 1, 2, 3), row(1, 1, 2, 4)],
        };
        t.rows[0].task = None;
        t.rows[1].load = 12.5;
        let text = t.to_csv();
        assert!(text.starts_with(TRACE_HEADER));
        assert!(text.contains("0,1,robot,2,3,pickup,0,move,-"));
        assert_eq!(Trace::parse_csv(&text).unwrap(), t);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert_eq!(Trace::parse_csv("a,b\n"), Err(TraceError::Header));
        let bad = format!("{TRACE_HEADER}\n0,1,robot,2,3,pickup,0,fly,-\n");
        assert!(matches!(
            Trace::parse_csv(&bad),
            Err(TraceError::Row { line: 2, .. })
        ));
    }

    #[test]
    fn collisions_count_vertex_and_swap() {
        let t = Trace {
            rows: vec![
                row(0, 1, 1, 1),
                row(0, 2, 2, 1),
                row(1, 1, 2, 1),
                row(1, 2, 1, 1),
                row(2, 1, 2, 1),
                row(2, 2, 2, 1),
            ],
        };
        assert_eq!(count_collisions(&t), 2);
    }
}
