use std::collections::HashMap;

use crate::domain::{AgentId, TaskId};

use super::schedule::Stop;
use super::{preferred, Instance};

#[derive(Clone, Debug, PartialEq)]
pub struct DeliveryAssignment {
    pub agent: AgentId,
    pub task: TaskId,
    /// Timing at the delivery origin.
    pub stop: Stop,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct DeliverySolution {
    /// In agent order.
    pub assignments: Vec<DeliveryAssignment>,
    pub unassigned: Vec<TaskId>,
    /// C_D: travel costs plus penalties for unassigned tasks.
    pub objective: f64,
}

impl DeliverySolution {
    pub fn assigned_agent(&self, task: TaskId) -> Option<AgentId> {
        self.assignments
            .iter()
            .find(|d| d.task == task)
            .map(|d| d.agent)
    }
}

/// Exact minimum of C_D with each agent at indices `agents` taking at most
/// one delivery task.
pub fn solve_delivery_allocation(inst: &Instance, agents: &[usize]) -> DeliverySolution {
    let penalties: Vec<f64> = inst
        .deliveries
        .iter()
        .map(|t| inst.delivery_penalty(t))
        .collect();
    // (delivery index, reduced cost) per agent; None means stay unassigned.
    let options: Vec<Vec<Option<(usize, f64)>>> = agents
        .iter()
        .map(|&a| {
            let mut opts = vec![None];
            for (j, (task, penalty)) in inst.deliveries.iter().zip(&penalties).enumerate() {
                if inst.delivery_start(a, j).is_some() {
                    let cost = inst.task_edge_cost(a, inst.agents[a].vertex, task);
                    opts.push(Some((j, cost - penalty)));
                }
            }
            opts
        })
        .collect();

    let mut memo: HashMap<(usize, u64), (f64, u32, usize)> = HashMap::new();
    fn best(
        k: usize,
        used: u64,
        options: &[Vec<Option<(usize, f64)>>],
        memo: &mut HashMap<(usize, u64), (f64, u32, usize)>,
    ) -> (f64, u32, usize) {
        if k == options.len() {
            return (0.0, 0, 0);
        }
        if let Some(&hit) = memo.get(&(k, used)) {
            return hit;
        }
        let mut out = (f64::INFINITY, 0, 0);
        for (i, opt) in options[k].iter().enumerate() {
            let (mask, reduced) = match opt {
                None => (0, 0.0),
                Some((j, r)) => (1u64 << j, *r),
            };
            if mask & used != 0 {
                continue;
            }
            let (rest, rest_served, _) = best(k + 1, used | mask, options, memo);
            let total = reduced + rest;
            let served = mask.count_ones() + rest_served;
            if preferred(total, served, (out.0, out.1)) {
                out = (total, served, i);
            }
        }
        memo.insert((k, used), out);
        out
    }

    let mut used = 0u64;
    let mut pairs = Vec::new();
    for (k, &a) in agents.iter().enumerate() {
        let (_, _, choice) = best(k, used, &options, &mut memo);
        if let Some((j, _)) = options[k][choice] {
            used |= 1 << j;
            pairs.push((a, j));
        }
    }
    build_solution(inst, &pairs)
}

pub(crate) fn build_solution(inst: &Instance, pairs: &[(usize, usize)]) -> DeliverySolution {
    let assignments = pairs
        .iter()
        .map(|&(a, j)| DeliveryAssignment {
            agent: inst.agents[a].id,
            task: inst.deliveries[j].id,
            stop: inst.delivery_start(a, j).expect("feasible delivery"),
            cost: inst.task_edge_cost(a, inst.agents[a].vertex, &inst.deliveries[j]),
        })
        .collect();
    let unassigned = inst
        .deliveries
        .iter()
        .enumerate()
        .filter(|(j, _)| !pairs.iter().any(|&(_, k)| k == *j))
        .map(|(_, t)| t.id)
        .collect();
    DeliverySolution {
        assignments,
        unassigned,
        objective: inst.delivery_objective(pairs),
    }
}
