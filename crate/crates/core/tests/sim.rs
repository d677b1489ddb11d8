mod common;

use common::{one_crossroad, scenario_path};
use scso::network::load_scenario;
use scso::plan::{build_layout, midpoint_plan, PlanBounds, SignalPlan};
use scso::sim::{simulate, SimConfig, SimError, Simulator};

const STRAIGHT: [(f64, f64, f64); 4] = [(0.0, 1.0, 0.0); 4];

fn config(horizon: u32) -> SimConfig {
    SimConfig {
        horizon,
        ..SimConfig::default()
    }
}

#[test]
fn lone_vehicle_waits_out_the_red() {
    // 100 m at 10 m/s: a westbound car entering at t=0 reaches the stop line at
    // t=10. E/W through is phase 2, which starts at 20 + 20 = 40.
    let s = one_crossroad(10.0, 100.0, STRAIGHT, [0.0; 4]);
    let sim = Simulator::new(&s, config(200)).unwrap();
    let plan = SignalPlan(vec![20, 20, 30, 25]);
    let r = sim.run_scripted(&plan, &[(1, 0)]).unwrap();
    assert_eq!(r.vehicles_entered, 1);
    assert_eq!(r.vehicles_exited, 1);
    assert_eq!(r.total_delay, 30.0);
    assert_eq!(r.avg_delay, 30.0);
}

#[test]
fn lone_vehicle_on_green_has_no_delay() {
    // southbound through is green during phase 0, [0, 20)
    let s = one_crossroad(10.0, 100.0, STRAIGHT, [0.0; 4]);
    let sim = Simulator::new(&s, config(200)).unwrap();
    let r = sim.run_scripted(&SignalPlan(vec![20, 20, 30, 25]), &[(0, 0)]).unwrap();
    assert_eq!(r.total_delay, 0.0);
    assert_eq!(r.vehicles_exited, 1);
}

#[test]
fn queue_discharges_one_vehicle_per_headway() {
    // three westbound cars reach the stop line at t = 10, 11, 12 and leave at 40, 42, 44
    let s = one_crossroad(10.0, 100.0, STRAIGHT, [0.0; 4]);
    let sim = Simulator::new(&s, config(200)).unwrap();
    let r = sim
        .run_scripted(&SignalPlan(vec![20, 20, 30, 25]), &[(1, 0), (1, 1), (1, 2)])
        .unwrap();
    assert_eq!(r.total_delay, (30 + 31 + 32) as f64);
}

#[test]
fn vehicle_stuck_at_horizon_counts_its_wait_so_far() {
    let s = one_crossroad(10.0, 100.0, STRAIGHT, [0.0; 4]);
    let sim = Simulator::new(&s, config(25)).unwrap();
    let r = sim.run_scripted(&SignalPlan(vec![20, 20, 30, 25]), &[(1, 0)]).unwrap();
    assert_eq!(r.vehicles_in_network, 1);
    assert_eq!(r.total_delay, 15.0);
}

#[test]
fn zero_demand_gives_zero_delay() {
    let s = one_crossroad(13.89, 300.0, [(0.2, 0.6, 0.2); 4], [0.0; 4]);
    let r = simulate(&s, &SignalPlan(vec![35; 4]), SimConfig::default()).unwrap();
    assert_eq!(r.vehicles_entered, 0);
    assert_eq!(r.avg_delay, 0.0);
    assert_eq!(r.total_delay, 0.0);
}

#[test]
fn repeated_runs_are_bit_identical() {
    let s = load_scenario(scenario_path("desk8.json")).unwrap();
    let layout = build_layout(&s);
    let plan = midpoint_plan(&layout, PlanBounds::default());
    let a = simulate(&s, &plan, SimConfig::default()).unwrap();
    let b = simulate(&s, &plan, SimConfig::default()).unwrap();
    assert_eq!(a.avg_delay.to_bits(), b.avg_delay.to_bits());
    assert_eq!(a.total_delay.to_bits(), b.total_delay.to_bits());
    assert_eq!(a.vehicles_exited, b.vehicles_exited);
}

#[test]
fn arrivals_do_not_depend_on_the_plan() {
    let s = load_scenario(scenario_path("desk8.json")).unwrap();
    let layout = build_layout(&s);
    let a = simulate(&s, &SignalPlan(vec![20; layout.dim()]), SimConfig::default()).unwrap();
    let b = simulate(&s, &SignalPlan(vec![50; layout.dim()]), SimConfig::default()).unwrap();
    assert_eq!(a.vehicles_entered, b.vehicles_entered);
}

#[test]
fn vehicles_are_conserved_at_every_horizon() {
    let s = load_scenario(scenario_path("desk8.json")).unwrap();
    let layout = build_layout(&s);
    let plan = midpoint_plan(&layout, PlanBounds::default());
    for horizon in [1, 7, 60, 199, 500, 1500] {
        let r = simulate(&s, &plan, config(horizon)).unwrap();
        assert_eq!(r.vehicles_entered, r.vehicles_exited + r.vehicles_in_network, "horizon {horizon}");
        assert_eq!(r.avg_delay, r.total_delay / r.vehicles_entered.max(1) as f64);
    }
}

#[test]
fn doubling_demand_never_lowers_total_delay() {
    let mut s = load_scenario(scenario_path("desk8.json")).unwrap();
    let layout = build_layout(&s);
    let plans = [
        midpoint_plan(&layout, PlanBounds::default()),
        SignalPlan(vec![20; layout.dim()]),
        SignalPlan((0..layout.dim()).map(|i| 20 + (i as u32 * 7) % 31).collect()),
    ];
    let base: Vec<f64> = plans
        .iter()
        .map(|p| simulate(&s, p, SimConfig::default()).unwrap().total_delay)
        .collect();
    for e in &mut s.entrances {
        e.demand_vph *= 2.0;
    }
    for (p, b) in plans.iter().zip(base) {
        let doubled = simulate(&s, p, SimConfig::default()).unwrap().total_delay;
        assert!(doubled >= b, "{doubled} < {b}");
    }
}

#[test]
fn invalid_plans_are_rejected() {
    let s = one_crossroad(10.0, 100.0, STRAIGHT, [100.0; 4]);
    let sim = Simulator::new(&s, SimConfig::default()).unwrap();
    assert!(matches!(sim.run(&SignalPlan(vec![20, 20, 20])), Err(SimError::InvalidPlan(_))));
    assert!(matches!(sim.run(&SignalPlan(vec![20, 20, 20, 51])), Err(SimError::InvalidPlan(_))));
    assert!(matches!(
        sim.run_scripted(&SignalPlan(vec![20; 4]), &[(9, 0)]),
        Err(SimError::UnknownEntrance(9))
    ));
}

#[test]
fn guiyang_scenarios_simulate() {
    for name in ["guiyang43.json", "guiyang43_evening.json"] {
        let s = load_scenario(scenario_path(name)).unwrap();
        let layout = build_layout(&s);
        assert_eq!(layout.dim(), 26 * 4 + 17 * 3);
        let r = simulate(&s, &midpoint_plan(&layout, PlanBounds::default()), SimConfig::default()).unwrap();
        assert!(r.vehicles_entered > 0 && r.avg_delay >= 0.0);
    }
}
