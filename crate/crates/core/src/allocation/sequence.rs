use std::collections::BTreeMap;

use crate::domain::{AgentId, Mode, TaskId};
use crate::world::{Position, VertexKind};

use super::{AllocationError, AllocationResult, Instance};

/// A directed task-graph edge travelled by one agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct AssignedEdge {
    pub agent: AgentId,
    pub from: usize,
    pub to: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceStop {
    pub vertex: usize,
    pub kind: VertexKind,
    pub position: Position,
    pub task: Option<TaskId>,
}

/// The ordered stops one agent must visit, excluding its start.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub agent: AgentId,
    pub mode: Mode,
    pub stops: Vec<SequenceStop>,
}

impl AllocationResult {
    /// Chosen routing edges: agent start to first task and task to task.
    /// Closing legs (to the warehouse or a delivery destination) are implied.
    pub fn edges(&self, inst: &Instance) -> Vec<AssignedEdge> {
        let mut out = Vec::new();
        for route in &self.pickup.routes {
            let a = inst.agent_index(route.agent).expect("known agent");
            let mut from = inst.agents[a].vertex;
            for task in &route.tasks {
                let to = inst
                    .graph
                    .find(VertexKind::PickupStart(*task))
                    .expect("pickup vertex");
                out.push(AssignedEdge {
                    agent: route.agent,
                    from,
                    to,
                });
                from = to;
            }
        }
        for d in &self.delivery.assignments {
            let a = inst.agent_index(d.agent).expect("known agent");
            let to = inst
                .graph
                .find(VertexKind::DeliveryOrigin(d.task))
                .expect("delivery vertex");
            out.push(AssignedEdge {
                agent: d.agent,
                from: inst.agents[a].vertex,
                to,
            });
        }
        out
    }
}

fn task_of(kind: VertexKind) -> Option<TaskId> {
    match kind {
        VertexKind::PickupStart(t)
        | VertexKind::DeliveryOrigin(t)
        | VertexKind::DeliveryDestination(t) => Some(t),
        VertexKind::Agent(_) | VertexKind::Warehouse => None,
    }
}

/// Walks each agent's edges from its start vertex into an ordered visit
/// list, appending the warehouse after pickups and the destination after a
/// delivery origin. Branching, cycles and stray edges are rejected.
pub fn extract_sequences(
    inst: &Instance,
    modes: &BTreeMap<AgentId, Mode>,
    edges: &[AssignedEdge],
) -> Result<Vec<Sequence>, AllocationError> {
    let mut by_agent: BTreeMap<AgentId, BTreeMap<usize, usize>> = BTreeMap::new();
    for e in edges {
        let next = by_agent.entry(e.agent).or_default();
        if next.insert(e.from, e.to).is_some() {
            return Err(AllocationError::Inconsistent(format!(
                "agent {} leaves vertex {} twice",
                e.agent, e.from
            )));
        }
    }
    let mut out = Vec::new();
    for (agent, next) in by_agent {
        let a = inst
            .agent_index(agent)
            .ok_or_else(|| AllocationError::Inconsistent(format!("unknown agent {agent}")))?;
        let mode = modes.get(&agent).copied().unwrap_or(Mode::PickupMode);
        let start = inst.agents[a].vertex;
        let mut seen = vec![start];
        let mut stops = Vec::new();
        let mut at = start;
        while let Some(&to) = next.get(&at) {
            if seen.contains(&to) {
                return Err(AllocationError::Inconsistent(format!(
                    "agent {agent} revisits vertex {to}"
                )));
            }
            seen.push(to);
            let v = inst.graph.vertices()[to];
            stops.push(SequenceStop {
                vertex: to,
                kind: v.kind,
                position: v.position,
                task: task_of(v.kind),
            });
            at = to;
        }
        if seen.len() != next.len() + 1 {
            return Err(AllocationError::Inconsistent(format!(
                "agent {agent} has edges unreachable from its start"
            )));
        }
        let closing = match (mode, stops.last().map(|s| s.kind)) {
            (Mode::DeliveryMode, Some(VertexKind::DeliveryOrigin(t))) => {
                if stops.len() != 1 {
                    return Err(AllocationError::Inconsistent(format!(
                        "agent {agent} holds more than one delivery"
                    )));
                }
                inst.graph.find(VertexKind::DeliveryDestination(t))
            }
            (Mode::PickupMode, Some(VertexKind::PickupStart(_))) => Some(inst.graph.warehouse()),
            _ => {
                return Err(AllocationError::Inconsistent(format!(
                    "agent {agent} in {} mode visits the wrong task kind",
                    mode.label()
                )))
            }
        };
        if let Some(c) = closing {
            let v = inst.graph.vertices()[c];
            stops.push(SequenceStop {
                vertex: c,
                kind: v.kind,
                position: v.position,
                task: task_of(v.kind),
            });
        }
        out.push(Sequence { agent, mode, stops });
    }
    Ok(out)
}
