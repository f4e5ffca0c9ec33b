use std::collections::HashMap;

use crate::domain::{AgentId, TaskId};

use super::schedule::{check_time_feasibility, next_stop, Schedule};
use super::{preferred, Instance};

/// One agent's ordered pickup chain. The warehouse leg is implied.
#[derive(Clone, Debug, PartialEq)]
pub struct PickupRoute {
    pub agent: AgentId,
    pub tasks: Vec<TaskId>,
    pub schedule: Schedule,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PickupSolution {
    /// Non-empty chains, in agent order.
    pub routes: Vec<PickupRoute>,
    pub unassigned: Vec<TaskId>,
    /// C_P: chain costs plus penalties for unassigned tasks.
    pub objective: f64,
}

impl PickupSolution {
    pub fn assigned_agent(&self, task: TaskId) -> Option<AgentId> {
        self.routes
            .iter()
            .find(|r| r.tasks.contains(&task))
            .map(|r| r.agent)
    }
}

#[derive(Clone, Debug)]
struct ChainOption {
    mask: u64,
    chain: Vec<usize>,
    /// Chain cost minus the penalties it avoids.
    reduced: f64,
}

/// Every time-, capacity- and kind-feasible chain for agent `a`, the empty
/// chain first, then in lexicographic task order.
fn feasible_chains(inst: &Instance, a: usize, penalties: &[f64]) -> Vec<ChainOption> {
    let mut out = vec![ChainOption {
        mask: 0,
        chain: Vec::new(),
        reduced: 0.0,
    }];
    let agent = &inst.agents[a];
    let mut chain = Vec::new();
    extend(
        inst,
        a,
        penalties,
        agent.ready_at,
        agent.load,
        0,
        &mut chain,
        &mut out,
    );
    out
}

#[allow(clippy::too_many_arguments)]
fn extend(
    inst: &Instance,
    a: usize,
    penalties: &[f64],
    departure: f64,
    load: f64,
    mask: u64,
    chain: &mut Vec<usize>,
    out: &mut Vec<ChainOption>,
) {
    let agent = &inst.agents[a];
    let from = chain
        .last()
        .map_or(agent.vertex, |&j| inst.pickups[j].origin);
    for (j, t) in inst.pickups.iter().enumerate() {
        if mask & (1 << j) != 0 || !t.allows(agent.kind) || load + t.load > agent.capacity + 1e-9 {
            continue;
        }
        let leg = super::ChainLeg {
            task: t.id,
            travel: inst.travel_time(a, from, t.origin),
            window: t.window,
            service_time: t.service_time,
        };
        let Ok(stop) = next_stop(departure, &leg, inst.params.horizon_end) else {
            continue;
        };
        chain.push(j);
        let next_mask = mask | (1 << j);
        let saved: f64 = chain.iter().map(|&k| penalties[k]).sum();
        out.push(ChainOption {
            mask: next_mask,
            chain: chain.clone(),
            reduced: inst.pickup_chain_cost(a, chain) - saved,
        });
        extend(
            inst,
            a,
            penalties,
            stop.departure,
            load + t.load,
            next_mask,
            chain,
            out,
        );
        chain.pop();
    }
}

struct Search<'a> {
    options: &'a [Vec<ChainOption>],
    memo: HashMap<(usize, u64), (f64, u32, usize)>,
}

impl Search<'_> {
    /// Minimum reduced cost for agents `k..` given tasks in `used` are taken,
    /// with the number of tasks served and the chosen option for agent `k`.
    fn best(&mut self, k: usize, used: u64) -> (f64, u32, usize) {
        if k == self.options.len() {
            return (0.0, 0, 0);
        }
        if let Some(&hit) = self.memo.get(&(k, used)) {
            return hit;
        }
        let mut best = (f64::INFINITY, 0, 0);
        for (i, opt) in self.options[k].iter().enumerate() {
            if opt.mask & used != 0 {
                continue;
            }
            let (rest, rest_served, _) = self.best(k + 1, used | opt.mask);
            let total = opt.reduced + rest;
            let served = opt.mask.count_ones() + rest_served;
            if preferred(total, served, (best.0, best.1)) {
                best = (total, served, i);
            }
        }
        self.memo.insert((k, used), best);
        best
    }
}

/// Exact minimum of C_P over the agents at indices `agents` (ascending).
pub fn solve_pickup_allocation(inst: &Instance, agents: &[usize]) -> PickupSolution {
    let penalties: Vec<f64> = inst
        .pickups
        .iter()
        .map(|t| inst.pickup_penalty(t))
        .collect();
    let options: Vec<Vec<ChainOption>> = agents
        .iter()
        .map(|&a| feasible_chains(inst, a, &penalties))
        .collect();
    let mut search = Search {
        options: &options,
        memo: HashMap::new(),
    };
    let mut used = 0u64;
    let mut chains: Vec<(usize, Vec<usize>)> = Vec::new();
    for (k, &a) in agents.iter().enumerate() {
        let (_, _, choice) = search.best(k, used);
        let opt = &options[k][choice];
        used |= opt.mask;
        if !opt.chain.is_empty() {
            chains.push((a, opt.chain.clone()));
        }
    }
    build_solution(inst, &chains)
}

/// Materializes a solution from chains of pickup indices, recomputing the
/// objective in canonical order.
pub(crate) fn build_solution(inst: &Instance, chains: &[(usize, Vec<usize>)]) -> PickupSolution {
    let routes = chains
        .iter()
        .filter(|(_, c)| !c.is_empty())
        .map(|(a, chain)| {
            let schedule = check_time_feasibility(
                &inst.pickup_legs(*a, chain),
                inst.agents[*a].ready_at,
                inst.params.horizon_end,
            )
            .unwrap_or_default();
            PickupRoute {
                agent: inst.agents[*a].id,
                tasks: chain.iter().map(|&j| inst.pickups[j].id).collect(),
                schedule,
                cost: inst.pickup_chain_cost(*a, chain),
            }
        })
        .collect::<Vec<_>>();
    let unassigned = inst
        .pickups
        .iter()
        .enumerate()
        .filter(|(j, _)| !chains.iter().any(|(_, c)| c.contains(j)))
        .map(|(_, t)| t.id)
        .collect();
    PickupSolution {
        routes,
        unassigned,
        objective: inst.pickup_objective(chains),
    }
}
