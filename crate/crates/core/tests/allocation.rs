mod common;

use std::collections::BTreeMap;
use std::path::Path;

use common::*;
use hs2pd::allocation::{
    check_time_feasibility, extract_sequences, solve_delivery_allocation, solve_mode_allocation,
    solve_pickup_allocation, AssignedEdge, ChainLeg, CostParams, Instance,
};
use hs2pd::domain::{active_tasks, AgentKind, Mode, Scenario, TaskStatus, TimeWindow};
use hs2pd::scenario::{load_scenario, ScenarioFile};
use hs2pd::world::{Position, VertexKind};
use proptest::prelude::*;

fn scenario(f: &ScenarioFile) -> Scenario {
    f.to_scenario().unwrap()
}

fn instance(s: &Scenario) -> Instance {
    let agents: Vec<_> = s.agents.iter().map(|a| (a.clone(), 0.0)).collect();
    let p = &s.params;
    let cost = CostParams {
        alpha: p.alpha,
        gamma: p.gamma,
        big_m: p.big_m,
        horizon_end: p.horizon,
    };
    Instance::build(&s.map, &agents, &s.tasks, cost).unwrap()
}

fn all(inst: &Instance) -> Vec<usize> {
    (0..inst.agents.len()).collect()
}

fn pos(c: u16, r: u16) -> Position {
    Position::new(c, r)
}

#[test]
fn no_tasks_cost_nothing() {
    let f = file(
        open_rows(4, 4, (4, 4)),
        vec![agent(1, AgentKind::Robot, pos(1, 1))],
        vec![],
    );
    let inst = instance(&scenario(&f));
    assert_eq!(solve_pickup_allocation(&inst, &all(&inst)).objective, 0.0);
    assert_eq!(solve_delivery_allocation(&inst, &all(&inst)).objective, 0.0);
    let r = solve_mode_allocation(&inst);
    assert_eq!(r.objective, 0.0);
    assert_eq!(r.modes[&1], Mode::PickupMode);
}

#[test]
fn lone_robot_takes_task_three_cells_away() {
    // robot (1,1), task (4,1), warehouse (4,5)
    let f = file(
        open_rows(5, 5, (4, 5)),
        vec![agent(1, AgentKind::Robot, pos(1, 1))],
        vec![pickup(1, pos(4, 1), 0.0, 60.0, 20.0)],
    );
    let s = scenario(&f);
    let inst = instance(&s);
    let sol = solve_pickup_allocation(&inst, &all(&inst));
    assert_eq!(sol.routes.len(), 1);
    assert_eq!(sol.routes[0].tasks, vec![1]);
    assert_eq!(sol.routes[0].schedule.stops[0].start, 3.0);
    // both options by hand: serve (0.4*3 + 0.4*4) or leave it (0.6*3 + 0.6*4)
    let serve = 0.4 * 3.0 + 0.4 * 4.0;
    let skip = 0.6 * 3.0 + 0.6 * 4.0;
    assert!(serve < skip);
    assert!(close(sol.objective, serve));
}

#[test]
fn two_agents_three_pickups_match_enumeration() {
    let f = file(
        open_rows(7, 7, (7, 4)),
        vec![
            agent(1, AgentKind::Robot, pos(1, 1)),
            agent(2, AgentKind::Human, pos(1, 7)),
        ],
        vec![
            pickup(1, pos(3, 2), 0.0, 20.0, 20.0),
            pickup(2, pos(5, 6), 4.0, 18.0, 30.0),
            pickup(3, pos(2, 5), 0.0, 9.0, 20.0),
        ],
    );
    let s = scenario(&f);
    let inst = instance(&s);
    let reference = RefProblem::from_scenario(&s, s.params.horizon);
    let got = solve_pickup_allocation(&inst, &all(&inst)).objective;
    assert!(
        close(got, reference.pickup_optimum(&[0, 1])),
        "{got} vs {}",
        reference.pickup_optimum(&[0, 1])
    );
}

#[test]
fn single_delivery_starts_at_window_or_arrival() {
    let rows = open_rows(6, 3, (6, 3));
    for (open, expect) in [(0.0, 4.0), (7.0, 7.0)] {
        let f = file(
            rows.clone(),
            vec![agent(1, AgentKind::Robot, pos(1, 1))],
            vec![delivery(1, pos(5, 1), pos(1, 3), open, 20.0, 10.0)],
        );
        let inst = instance(&scenario(&f));
        let sol = solve_delivery_allocation(&inst, &all(&inst));
        assert_eq!(sol.assignments.len(), 1);
        assert_eq!(sol.assignments[0].stop.start, expect);
    }
}

#[test]
fn two_by_two_delivery_matches_enumeration() {
    let f = file(
        open_rows(8, 4, (8, 4)),
        vec![
            agent(1, AgentKind::Robot, pos(1, 1)),
            agent(2, AgentKind::Robot, pos(6, 1)),
        ],
        vec![
            delivery(1, pos(2, 3), pos(7, 3), 0.0, 30.0, 10.0),
            delivery(2, pos(5, 2), pos(1, 4), 0.0, 30.0, 10.0),
        ],
    );
    let s = scenario(&f);
    let inst = instance(&s);
    let reference = RefProblem::from_scenario(&s, s.params.horizon);
    let sol = solve_delivery_allocation(&inst, &all(&inst));
    assert!(close(sol.objective, reference.delivery_optimum(&[0, 1])));
    // the nearer robot gets each task
    assert_eq!(sol.assigned_agent(1), Some(1));
    assert_eq!(sol.assigned_agent(2), Some(2));
}

#[test]
fn depleted_agent_charges() {
    let mut a = agent(1, AgentKind::Robot, pos(1, 1));
    a.energy = 0.0;
    a.energy_threshold = 1.0;
    let f = file(
        open_rows(4, 4, (4, 4)),
        vec![a, agent(2, AgentKind::Robot, pos(2, 2))],
        vec![pickup(1, pos(1, 2), 0.0, 30.0, 10.0)],
    );
    let inst = instance(&scenario(&f));
    let r = solve_mode_allocation(&inst);
    assert_eq!(r.modes[&1], Mode::ChargingMode);
    assert_eq!(r.modes[&2], Mode::PickupMode);
    assert_eq!(r.pickup.assigned_agent(1), Some(2));
}

#[test]
fn lone_pickup_puts_agent_in_pickup_mode() {
    let f = file(
        open_rows(4, 4, (4, 4)),
        vec![agent(1, AgentKind::Robot, pos(1, 1))],
        vec![pickup(1, pos(2, 1), 0.0, 30.0, 10.0)],
    );
    let s = scenario(&f);
    let inst = instance(&s);
    let r = solve_mode_allocation(&inst);
    assert_eq!(r.modes[&1], Mode::PickupMode);
    assert_eq!(r.pickup.assigned_agent(1), Some(1));
    assert!(close(
        r.objective,
        RefProblem::from_scenario(&s, s.params.horizon).mode_optimum()
    ));
}

#[test]
fn sequences_follow_chains() {
    let f = file(
        open_rows(6, 6, (6, 6)),
        vec![
            agent(1, AgentKind::Robot, pos(1, 1)),
            agent(2, AgentKind::Human, pos(1, 6)),
        ],
        vec![
            pickup(1, pos(2, 1), 0.0, 30.0, 10.0),
            pickup(2, pos(3, 1), 0.0, 30.0, 10.0),
            delivery(3, pos(1, 5), pos(4, 4), 0.0, 30.0, 10.0),
        ],
    );
    let inst = instance(&scenario(&f));
    let r = solve_mode_allocation(&inst);
    let seqs = extract_sequences(&inst, &r.modes, &r.edges(&inst)).unwrap();
    let by: BTreeMap<_, _> = seqs.iter().map(|s| (s.agent, s)).collect();
    let kinds = |a: u32| by[&a].stops.iter().map(|s| s.kind).collect::<Vec<_>>();
    assert_eq!(
        kinds(1),
        vec![
            VertexKind::PickupStart(1),
            VertexKind::PickupStart(2),
            VertexKind::Warehouse
        ]
    );
    assert_eq!(
        kinds(2),
        vec![
            VertexKind::DeliveryOrigin(3),
            VertexKind::DeliveryDestination(3)
        ]
    );
    assert!(extract_sequences(&inst, &r.modes, &[]).unwrap().is_empty());
}

#[test]
fn sequences_reject_broken_edge_sets() {
    let f = file(
        open_rows(6, 6, (6, 6)),
        vec![agent(1, AgentKind::Robot, pos(1, 1))],
        vec![
            pickup(1, pos(2, 1), 0.0, 30.0, 10.0),
            pickup(2, pos(3, 1), 0.0, 30.0, 10.0),
        ],
    );
    let inst = instance(&scenario(&f));
    let modes = BTreeMap::from([(1, Mode::PickupMode)]);
    let start = inst.graph.find(VertexKind::Agent(1)).unwrap();
    let a = inst.graph.find(VertexKind::PickupStart(1)).unwrap();
    let b = inst.graph.find(VertexKind::PickupStart(2)).unwrap();
    let e = |from, to| AssignedEdge { agent: 1, from, to };
    assert!(extract_sequences(&inst, &modes, &[e(start, a), e(start, b)]).is_err());
    assert!(extract_sequences(&inst, &modes, &[e(start, a), e(a, b), e(b, a)]).is_err());
    assert!(extract_sequences(&inst, &modes, &[e(start, a), e(b, a)]).is_err());
}

#[test]
fn time_feasibility_examples() {
    let leg = |travel, open, close| ChainLeg {
        task: 1,
        travel,
        window: TimeWindow::new(open, close),
        service_time: 1.0,
    };
    let s = check_time_feasibility(&[leg(5.0, 0.0, 30.0)], 0.0, 30.0).unwrap();
    assert_eq!((s.stops[0].start, s.stops[0].wait), (5.0, 0.0));
    let s = check_time_feasibility(&[leg(5.0, 10.0, 30.0)], 0.0, 30.0).unwrap();
    assert_eq!((s.stops[0].start, s.stops[0].wait), (10.0, 5.0));
    let mut second = leg(3.0, 0.0, 7.0);
    second.task = 2;
    assert!(check_time_feasibility(&[leg(5.0, 0.0, 30.0), second], 0.0, 30.0).is_err());
}

#[test]
fn bundled_first_update_is_optimal() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/warehouse_16x13.toml");
    let mut s = load_scenario(&path, &[]).unwrap();
    let open: Vec<u32> = active_tasks(&s, 0.0).iter().map(|t| t.id).collect();
    assert_eq!(open, vec![1, 2, 7, 8, 9, 10, 11, 12, 13, 14, 15]);
    s.tasks.retain(|t| open.contains(&t.id));
    let inst = instance(&s);
    let reference = RefProblem::from_scenario(&s, s.params.horizon);
    let r = solve_mode_allocation(&inst);
    assert!(
        close(r.objective, reference.mode_optimum()),
        "{} vs {}",
        r.objective,
        reference.mode_optimum()
    );

    // the published first-step chains are feasible, so they bound the optimum
    let chains = [
        (2, vec![13, 15, 9]),
        (3, vec![14, 12, 10]),
        (4, vec![8, 7, 11]),
    ];
    let mut published = 0.0;
    let mut served = Vec::new();
    for (agent, ids) in &chains {
        let a = reference.agent_index(*agent);
        let chain: Vec<usize> = ids.iter().map(|&id| reference.task_index(id)).collect();
        if reference.chain_feasible(a, &chain) {
            published += reference.chain_cost(a, &chain);
            served.extend(chain);
        }
    }
    for j in reference.pickups() {
        if !served.contains(&j) {
            published += reference.penalty(j);
        }
    }
    let trio: Vec<usize> = [2, 3, 4]
        .iter()
        .map(|&id| reference.agent_index(id))
        .collect();
    let best = solve_pickup_allocation(&inst, &trio).objective;
    assert!(close(best, reference.pickup_optimum_dp(&trio)));
    assert!(best <= published + 1e-9, "{best} > {published}");
}

/// Checks a returned pickup solution against the reference cost model.
fn recheck_pickup(reference: &RefProblem, inst: &Instance, agents: &[usize]) {
    let sol = solve_pickup_allocation(inst, agents);
    let mut seen = Vec::new();
    let mut total = 0.0;
    for route in &sol.routes {
        let a = reference.agent_index(route.agent);
        assert!(agents.contains(&a), "route for an agent outside the mode");
        let chain: Vec<usize> = route
            .tasks
            .iter()
            .map(|&id| reference.task_index(id))
            .collect();
        assert!(
            reference.chain_feasible(a, &chain),
            "infeasible chain {:?}",
            route.tasks
        );
        let times = reference.schedule(a, &chain).unwrap();
        for (stop, t) in route.schedule.stops.iter().zip(&times) {
            assert!(close(stop.start, *t));
            let task = &reference.tasks[reference.task_index(stop.task)];
            assert!(task.window.contains(stop.start));
        }
        total += reference.chain_cost(a, &chain);
        for j in chain {
            assert!(!seen.contains(&j), "task served twice");
            seen.push(j);
        }
    }
    for j in reference.pickups() {
        if !seen.contains(&j) {
            total += reference.penalty(j);
            assert!(sol.unassigned.contains(&reference.tasks[j].id));
        }
    }
    assert!(close(sol.objective, total), "{} vs {total}", sol.objective);
}

fn alloc_spec() -> AllocSpec {
    AllocSpec {
        max_agents: 3,
        max_pickups: 4,
        max_deliveries: 4,
        depleted_share: 0.0,
    }
}

fn random_scenario(seed: u64, spec: &AllocSpec) -> Scenario {
    let mut s = scenario(&random_alloc_file(seed, spec));
    // some agents already carry goods, which matters for the penalty
    let mut r = rng(seed ^ 0x5eed);
    for a in &mut s.agents {
        if rand::Rng::gen_bool(&mut r, 0.2) {
            a.load = 10.0;
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solutions_pass_independent_checks(seed in any::<u64>()) {
        let s = random_scenario(seed, &alloc_spec());
        let inst = instance(&s);
        let reference = RefProblem::from_scenario(&s, s.params.horizon);
        recheck_pickup(&reference, &inst, &all(&inst));
        let d = solve_delivery_allocation(&inst, &all(&inst));
        let mut used = Vec::new();
        for x in &d.assignments {
            prop_assert!(!used.contains(&x.agent));
            used.push(x.agent);
            let t = &reference.tasks[reference.task_index(x.task)];
            prop_assert!(t.window.contains(x.stop.start));
            prop_assert!(x.stop.start <= s.params.horizon + 1e-9);
        }
        prop_assert!(close(d.objective, reference.delivery_optimum(&all(&inst))));
    }

    #[test]
    fn scaling_costs_keeps_the_argmin(seed in any::<u64>(), factor in 1u32..5) {
        let s = random_scenario(seed, &alloc_spec());
        let mut f2 = ScenarioFile::from_scenario(&s);
        let c = f64::from(factor) * 0.5 + 0.5;
        f2.map.grid_side *= c;
        for a in &mut f2.agents {
            a.speed = a.speed.map(|v| v * c);
        }
        f2.params.big_m = Some(s.params.big_m * c);
        let mut s2 = scenario(&f2);
        for (a, b) in s2.agents.iter_mut().zip(&s.agents) {
            a.load = b.load;
        }
        let (i1, i2) = (instance(&s), instance(&s2));
        let (p1, p2) = (solve_pickup_allocation(&i1, &all(&i1)), solve_pickup_allocation(&i2, &all(&i2)));
        let chains = |p: &hs2pd::allocation::PickupSolution| p.routes.iter().map(|r| (r.agent, r.tasks.clone())).collect::<Vec<_>>();
        prop_assert_eq!(chains(&p1), chains(&p2));
        prop_assert!(close(p1.objective * c, p2.objective));
        let (d1, d2) = (solve_delivery_allocation(&i1, &all(&i1)), solve_delivery_allocation(&i2, &all(&i2)));
        let pairs = |d: &hs2pd::allocation::DeliverySolution| d.assignments.iter().map(|x| (x.agent, x.task)).collect::<Vec<_>>();
        prop_assert_eq!(pairs(&d1), pairs(&d2));
    }

    #[test]
    fn wider_windows_never_cost_more(seed in any::<u64>(), pick in 0usize..8, widen in 1u32..20) {
        let s = random_scenario(seed, &alloc_spec());
        let inst = instance(&s);
        let before = solve_pickup_allocation(&inst, &all(&inst)).objective;
        let mut wide = s.clone();
        let pickups: Vec<usize> = (0..wide.tasks.len()).filter(|&j| wide.tasks[j].mode == hs2pd::domain::TaskMode::Pickup).collect();
        prop_assume!(!pickups.is_empty());
        let j = pickups[pick % pickups.len()];
        let w = &mut wide.tasks[j].window;
        w.close += f64::from(widen);
        w.open = (w.open - f64::from(widen) / 2.0).max(0.0);
        let inst2 = instance(&wide);
        let after = solve_pickup_allocation(&inst2, &all(&inst2)).objective;
        prop_assert!(after <= before + 1e-9 * before.abs().max(1.0), "{after} > {before}");
    }

    #[test]
    fn mode_objective_is_minimum_over_vectors(seed in any::<u64>()) {
        let spec = AllocSpec { max_agents: 3, max_pickups: 3, max_deliveries: 2, depleted_share: 0.25 };
        let s = random_scenario(seed, &spec);
        let inst = instance(&s);
        let r = solve_mode_allocation(&inst);
        let reference = RefProblem::from_scenario(&s, s.params.horizon);
        prop_assert!(close(r.objective, reference.mode_optimum()));
        prop_assert!(close(r.objective, r.pickup.objective + s.params.gamma * r.delivery.objective));
        for a in &s.agents {
            prop_assert_eq!(r.modes[&a.id] == Mode::ChargingMode, a.energy <= a.energy_threshold);
        }
        let statuses_untouched = s.tasks.iter().all(|t| t.status != TaskStatus::Assigned);
        prop_assert!(statuses_untouched);
    }
}
