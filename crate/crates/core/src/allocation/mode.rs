use std::collections::HashMap;

use crate::domain::Mode;

use super::delivery::{solve_delivery_allocation, DeliverySolution};
use super::pickup::{solve_pickup_allocation, PickupSolution};
use super::{preferred, Instance, ModeAssignment};

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationResult {
    pub modes: ModeAssignment,
    pub pickup: PickupSolution,
    pub delivery: DeliverySolution,
    /// F = C_P + γ·C_D.
    pub objective: f64,
}

/// Agents at or below their energy threshold are forced to charge; every
/// pickup/delivery split of the rest is evaluated and the cheapest kept.
/// Ties go to the vector serving more tasks, then to the one that comes first
/// when read as a binary number with the lowest-id agent most significant and
/// pickup as 0.
pub fn solve_mode_allocation(inst: &Instance) -> AllocationResult {
    let free = inst.free_agents();
    let f = free.len();
    let mut pickup_cache: HashMap<u64, PickupSolution> = HashMap::new();
    let mut delivery_cache: HashMap<u64, DeliverySolution> = HashMap::new();
    let mut best: Option<(f64, u32, u64)> = None;

    for v in 0..(1u64 << f) {
        let (p_mask, d_mask) = split(v, f);
        let p = pickup_cache
            .entry(p_mask)
            .or_insert_with(|| solve_pickup_allocation(inst, &select(&free, p_mask)));
        let (cp, p_served) = (
            p.objective,
            p.routes.iter().map(|r| r.tasks.len() as u32).sum::<u32>(),
        );
        let d = delivery_cache
            .entry(d_mask)
            .or_insert_with(|| solve_delivery_allocation(inst, &select(&free, d_mask)));
        let total = cp + inst.params.gamma * d.objective;
        let served = p_served + d.assignments.len() as u32;
        let better = match best {
            None => true,
            Some((b, n, _)) => preferred(total, served, (b, n)),
        };
        if better {
            best = Some((total, served, v));
        }
    }

    let (objective, _, v) = best.expect("at least the empty vector");
    let (p_mask, d_mask) = split(v, f);
    let mut modes = ModeAssignment::new();
    for (i, a) in inst.agents.iter().enumerate() {
        let mode = match free.iter().position(|&k| k == i) {
            None => Mode::ChargingMode,
            Some(bit) if p_mask & (1 << bit) != 0 => Mode::PickupMode,
            Some(_) => Mode::DeliveryMode,
        };
        modes.insert(a.id, mode);
    }
    AllocationResult {
        modes,
        pickup: pickup_cache.remove(&p_mask).unwrap_or_default(),
        delivery: delivery_cache.remove(&d_mask).unwrap_or_default(),
        objective,
    }
}

/// Masks over positions in the free-agent list for agents in pickup and
/// delivery mode under vector `v`.
fn split(v: u64, f: usize) -> (u64, u64) {
    let mut pickup = 0;
    let mut delivery = 0;
    for i in 0..f {
        if (v >> (f - 1 - i)) & 1 == 0 {
            pickup |= 1 << i;
        } else {
            delivery |= 1 << i;
        }
    }
    (pickup, delivery)
}

fn select(free: &[usize], mask: u64) -> Vec<usize> {
    free.iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, &a)| a)
        .collect()
}
