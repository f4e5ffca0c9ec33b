//! TOML scenario files: loading, `--set` overrides, and writing back.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    default_big_m, route_cost_bound, AgentKind, AgentState, Event, EventKind, Heading, Mode,
    Params, Scenario, Task, TaskMode, TaskStatus, TimeWindow,
};
use crate::world::{GridMap, Position, WorldError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("bad override {0:?}: expected section.field=value")]
    Override(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("{0}")]
    Field(String),
}

/// Unit of the task schedule: windows, service and release times, and event
/// times. The `params` timings are always in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeUnit {
    #[default]
    #[serde(rename = "s")]
    Seconds,
    #[serde(rename = "min")]
    Minutes,
}

impl TimeUnit {
    pub fn seconds(self) -> f64 {
        match self {
            TimeUnit::Seconds => 1.0,
            TimeUnit::Minutes => 60.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    pub grid_side: f64,
    pub rows: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    #[serde(rename = "T")]
    pub update_period: f64,
    #[serde(rename = "T_D")]
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    pub gamma: f64,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub big_m: Option<f64>,
    #[serde(default)]
    pub energy_per_move: f64,
    #[serde(default)]
    pub charge_duration: f64,
    /// Stored as a signed integer in the file; larger values wrap.
    #[serde(default, with = "wrapped_seed")]
    pub seed: u64,
    #[serde(default = "default_max_updates")]
    pub max_updates: u32,
}

// toml integers are i64, so a u64 seed travels as its two's complement
mod wrapped_seed {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i64(*seed as i64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        i64::deserialize(d).map(|v| v as u64)
    }
}

fn default_max_updates() -> u32 {
    100
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub id: u32,
    pub kind: AgentKind,
    pub col: u16,
    pub row: u16,
    pub capacity: f64,
    pub energy: f64,
    #[serde(default)]
    pub energy_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
    /// Target cell, used only by path-planning oracle instances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<[u16; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub id: u32,
    pub mode: TaskMode,
    pub open: f64,
    pub close: f64,
    pub load: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_time: Option<f64>,
    pub origin: [u16; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination: Option<[u16; 2]>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub human_only: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub robot_only: bool,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub release_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventEntry {
    pub at: f64,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amount: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub time_unit: TimeUnit,
    pub map: MapSection,
    pub params: ParamsSection,
    #[serde(default)]
    pub agents: Vec<AgentEntry>,
    #[serde(default)]
    pub tasks: Vec<TaskEntry>,
    #[serde(default)]
    pub events: Vec<EventEntry>,
}

fn pos([col, row]: [u16; 2]) -> Position {
    Position::new(col, row)
}

impl ScenarioFile {
    pub fn parse(text: &str, overrides: &[String]) -> Result<ScenarioFile, ScenarioError> {
        let mut value: toml::Table = toml::from_str(text)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Ok(ScenarioFile::deserialize(toml::Value::Table(value))?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Builds the in-memory scenario. Missing phi, robot speeds and big_m are
    /// derived from each other and the map.
    pub fn to_scenario(&self) -> Result<Scenario, ScenarioError> {
        let map = GridMap::parse(&self.map.rows, self.map.grid_side)?;
        let side = self.map.grid_side;
        let declared_robot_speed = self
            .agents
            .iter()
            .find(|a| a.kind == AgentKind::Robot)
            .and_then(|a| a.speed);
        let phi = match (self.params.phi, declared_robot_speed) {
            (Some(phi), _) => phi,
            (None, Some(v)) if v > 0.0 => side / v,
            (None, _) => 1.0,
        };
        let default_speed = side / phi;
        let unit = self.time_unit.seconds();

        let agents = self
            .agents
            .iter()
            .map(|a| AgentState {
                id: a.id,
                kind: a.kind,
                position: Position::new(a.col, a.row),
                heading: Heading::East,
                mode: Mode::PickupMode,
                capacity: a.capacity,
                load: 0.0,
                energy: a.energy,
                energy_threshold: a.energy_threshold,
                speed: a.speed.unwrap_or(default_speed),
                task_chain: Vec::new(),
            })
            .collect();
        let mut tasks = Vec::new();
        for t in &self.tasks {
            let destination = match (t.mode, t.destination) {
                (_, Some(d)) => pos(d),
                (TaskMode::Pickup, None) => map.warehouse(),
                (TaskMode::Delivery, None) => {
                    return Err(ScenarioError::Field(format!(
                        "delivery task {} needs a destination",
                        t.id
                    )))
                }
            };
            let release_time = t.release_time * unit;
            tasks.push(Task {
                id: t.id,
                mode: t.mode,
                window: TimeWindow::new(t.open * unit, t.close * unit),
                load: t.load,
                service_time: t.service_time.map_or(phi, |s| s * unit),
                origin: pos(t.origin),
                destination,
                human_only: t.human_only,
                robot_only: t.robot_only,
                release_time,
                status: if release_time > 0.0 {
                    TaskStatus::Unreleased
                } else {
                    TaskStatus::Open
                },
            });
        }
        let events = self
            .events
            .iter()
            .map(|e| {
                event_kind(e).map(|kind| Event {
                    at: e.at * unit,
                    kind,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let params = Params {
            update_period: self.params.update_period,
            horizon: self.params.horizon,
            phi,
            gamma: self.params.gamma,
            alpha: self.params.alpha,
            big_m: 0.0,
            energy_per_move: self.params.energy_per_move,
            charge_duration: self.params.charge_duration,
            seed: self.params.seed,
            max_updates: self.params.max_updates,
        };
        let mut scenario = Scenario {
            map,
            agents,
            tasks,
            events,
            params,
        };
        scenario.params.big_m = match self.params.big_m {
            Some(m) => m,
            None => default_big_m(&scenario.map, scenario.tasks.len())
                .max(2.0 * route_cost_bound(&scenario)),
        };
        Ok(scenario)
    }

    /// Writes a scenario back out with every derived value explicit.
    pub fn from_scenario(s: &Scenario) -> ScenarioFile {
        let p = &s.params;
        ScenarioFile {
            time_unit: TimeUnit::Seconds,
            map: MapSection {
                grid_side: s.map.grid_side(),
                rows: s.map.rows(),
            },
            params: ParamsSection {
                update_period: p.update_period,
                horizon: p.horizon,
                phi: Some(p.phi),
                gamma: p.gamma,
                alpha: p.alpha,
                big_m: Some(p.big_m),
                energy_per_move: p.energy_per_move,
                charge_duration: p.charge_duration,
                seed: p.seed,
                max_updates: p.max_updates,
            },
            agents: s
                .agents
                .iter()
                .map(|a| AgentEntry {
                    id: a.id,
                    kind: a.kind,
                    col: a.position.col,
                    row: a.position.row,
                    capacity: a.capacity,
                    energy: a.energy,
                    energy_threshold: a.energy_threshold,
                    speed: Some(a.speed),
                    goal: None,
                })
                .collect(),
            tasks: s
                .tasks
                .iter()
                .map(|t| TaskEntry {
                    id: t.id,
                    mode: t.mode,
                    open: t.window.open,
                    close: t.window.close,
                    load: t.load,
                    service_time: Some(t.service_time),
                    origin: [t.origin.col, t.origin.row],
                    destination: match t.mode {
                        TaskMode::Pickup => None,
                        TaskMode::Delivery => Some([t.destination.col, t.destination.row]),
                    },
                    human_only: t.human_only,
                    robot_only: t.robot_only,
                    release_time: t.release_time,
                })
                .collect(),
            events: s.events.iter().map(event_entry).collect(),
        }
    }
}

fn event_kind(e: &EventEntry) -> Result<EventKind, ScenarioError> {
    let need = |v: Option<u32>, field: &str| {
        v.ok_or_else(|| {
            ScenarioError::Field(format!("{} event at {} needs `{field}`", e.kind, e.at))
        })
    };
    Ok(match e.kind.as_str() {
        "release_task" => EventKind::ReleaseTask {
            task: need(e.task, "task")?,
        },
        "cancel_task" => EventKind::CancelTask {
            task: need(e.task, "task")?,
        },
        "human_wrong_task" => EventKind::HumanWrongTask {
            human: need(e.human, "human")?,
            task: need(e.task, "task")?,
        },
        "energy_drop" => EventKind::EnergyDrop {
            agent: need(e.agent, "agent")?,
            amount: e.amount.ok_or_else(|| {
                ScenarioError::Field(format!("energy_drop at {} needs `amount`", e.at))
            })?,
        },
        other => {
            return Err(ScenarioError::Field(format!(
                "unknown event kind {other:?}"
            )))
        }
    })
}

fn event_entry(e: &Event) -> EventEntry {
    let mut out = EventEntry {
        at: e.at,
        kind: String::new(),
        task: None,
        human: None,
        agent: None,
        amount: None,
    };
    match e.kind {
        EventKind::ReleaseTask { task } => {
            out.kind = "release_task".into();
            out.task = Some(task);
        }
        EventKind::CancelTask { task } => {
            out.kind = "cancel_task".into();
            out.task = Some(task);
        }
        EventKind::HumanWrongTask { human, task } => {
            out.kind = "human_wrong_task".into();
            out.human = Some(human);
            out.task = Some(task);
        }
        EventKind::EnergyDrop { agent, amount } => {
            out.kind = "energy_drop".into();
            out.agent = Some(agent);
            out.amount = Some(amount);
        }
    }
    out
}

/// Applies `section.field=value` to a parsed document. The value is read as
/// a TOML literal, falling back to a bare string.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), ScenarioError> {
    let bad = || ScenarioError::Override(spec.to_string());
    let (key, raw) = spec.split_once('=').ok_or_else(bad)?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(bad());
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = path.split_last().ok_or_else(bad)?;
    let mut table = doc;
    for p in parents {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(bad)?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

pub fn parse_scenario(text: &str, overrides: &[String]) -> Result<Scenario, ScenarioError> {
    ScenarioFile::parse(text, overrides)?.to_scenario()
}

pub fn load_scenario_file(
    path: &Path,
    overrides: &[String],
) -> Result<ScenarioFile, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioFile::parse(&text, overrides)
}

pub fn load_scenario(path: &Path, overrides: &[String]) -> Result<Scenario, ScenarioError> {
    load_scenario_file(path, overrides)?.to_scenario()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::validate_scenario;

    const TINY: &str = r#"
[map]
grid_side = 1.0
rows = ["W..H", "...."]

[params]
T = 2
T_D = 10
gamma = 0.5
alpha = 0.4

[[agents]]
id = 1
kind = "robot"
col = 2
row = 2
capacity = 10
energy = 100

[[tasks]]
id = 1
mode = "pickup"
open = 0
close = 30
load = 5
origin = [1, 1]
"#;

    #[test]
    fn tiny_scenario_derives_defaults() {
        let s = parse_scenario(TINY, &[]).unwrap();
        assert_eq!(s.params.phi, 1.0);
        assert_eq!(s.agents[0].speed, 1.0);
        assert_eq!(s.tasks[0].destination, s.map.warehouse());
        assert_eq!(s.tasks[0].service_time, 1.0);
        assert_eq!(s.params.max_updates, 100);
        assert!(validate_scenario(&s).is_empty());
    }

    #[test]
    fn overrides_edit_before_parsing() {
        let s = parse_scenario(
            TINY,
            &["params.alpha=0.7".into(), "params.max_updates=3".into()],
        )
        .unwrap();
        assert_eq!(s.params.alpha, 0.7);
        assert_eq!(s.params.max_updates, 3);
        assert!(parse_scenario(TINY, &["alpha".into()]).is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = TINY.replace("alpha = 0.4", "alpha = 0.4\nbeta = 1");
        assert!(matches!(
            parse_scenario(&text, &[]),
            Err(ScenarioError::Toml(_))
        ));
    }

    #[test]
    fn minutes_scale_task_times() {
        let text = format!("time_unit = \"min\"\n{TINY}");
        let s = parse_scenario(&text, &[]).unwrap();
        assert_eq!(s.tasks[0].window.close, 1800.0);
    }

    #[test]
    fn round_trip_preserves_scenario() {
        let s = parse_scenario(TINY, &[]).unwrap();
        let text = ScenarioFile::from_scenario(&s).to_toml();
        assert_eq!(parse_scenario(&text, &[]).unwrap(), s);
    }
}
