//! Energy, feeder and chance-constraint behaviour.

use evgrid::energy::{check_energy, envelope_lower, envelope_upper};
use evgrid::grid::{build_lindistflow, couple_demand, radial_sweep, GridLine, GridNetwork, GridNode, GridState};
use evgrid::instance::generate_synthetic;
use evgrid::milp::{solve_lp, LpStatus, MilpModel};
use evgrid::model::solve_instance;
use evgrid::stochastic::{inv_norm_cdf, norm_cdf, RiskSpec};
use evgrid::vrp::Route;
use evgrid::{BnbOptions, Mode};
use proptest::prelude::*;

#[test]
fn envelope_worked_value() {
    // p in [10, 50] kW, tau in [0, 30] min.
    assert_eq!(envelope_upper(25.0, 15.0, [10.0, 50.0], [0.0, 30.0]), 600.0);
}

#[test]
fn depot_round_trip_needs_no_station() {
    let inst = generate_synthetic(21, 1, 1, 5.0).unwrap();
    let spec = &inst.vehicles[0];
    let travel = inst.travel_time[0][1] + inst.travel_time[1][0];
    let mut route = Route::new(0, vec![0, 1, 0]);
    route.charge_minutes[2] = spec.consumption_rate * travel / spec.charge_rate;
    assert!(check_energy(&route, &inst, 1e-6).is_ok());
}

#[test]
fn battery_floor_breach_is_reported() {
    let mut inst = generate_synthetic(21, 1, 1, 5.0).unwrap();
    inst.travel_time[0][1] = 500.0;
    inst.travel_time[1][0] = 500.0;
    let report = check_energy(&Route::new(0, vec![0, 1, 0]), &inst, 1e-6);
    assert!(!report.is_ok());
}

#[test]
fn solved_traces_stay_within_battery_limits() {
    let inst = generate_synthetic(31, 4, 2, 30.0).unwrap();
    let out = solve_instance(&inst, Mode::Deterministic, &BnbOptions::default()).unwrap();
    let sol = out.solution.unwrap();
    for t in &sol.traces {
        let spec = &inst.vehicles[t.vehicle];
        for e in &t.entries {
            assert!(e.energy_kwh >= spec.battery_min - 1e-6 && e.energy_kwh <= spec.battery_max + 1e-6);
        }
    }
    assert!(out.assembled.validate(&inst, &sol, 1e-6).is_ok());
}

#[test]
fn chance_mode_is_never_cheaper() {
    let inst = generate_synthetic(5, 5, 3, 60.0).unwrap();
    let exact = BnbOptions { gap_tol: 1e-9, ..Default::default() };
    let det = solve_instance(&inst, Mode::Deterministic, &exact).unwrap();
    let cc = solve_instance(
        &inst,
        Mode::ChanceConstrained(RiskSpec::uniform(&inst, 0.005).unwrap()),
        &exact,
    )
    .unwrap();
    let d = det.solution.unwrap();
    let c = cc.solution.unwrap();
    assert!(c.objective >= d.objective - 1e-6);
}

fn random_tree(parents: &[usize], loads: &[(f64, f64)], imp: &[(f64, f64)]) -> GridNetwork {
    let mut nodes = vec![GridNode::substation("sub", 1e6)];
    let mut lines = Vec::new();
    for (k, &parent) in parents.iter().enumerate() {
        let b = k + 1;
        nodes.push(GridNode::load(format!("b{b}"), loads[k].0, loads[k].1));
        lines.push(GridLine::new(parent % b, b, imp[k].0, imp[k].1));
    }
    GridNetwork { slack: 0, base_kva: 1000.0, flow_limits: false, nodes, lines }
}

proptest! {
    #[test]
    fn envelopes_bracket_the_product(
        a in 0.0f64..100.0, w in 0.1f64..100.0, c in 0.0f64..30.0, h in 0.1f64..60.0,
        s in 0.0f64..=1.0, r in 0.0f64..=1.0,
    ) {
        let (pb, tb) = ([a, a + w], [c, c + h]);
        let (p, t) = (a + s * w, c + r * h);
        prop_assert!(envelope_upper(p, t, pb, tb) >= p * t - 1e-9);
        prop_assert!(envelope_lower(p, t, pb, tb) <= p * t + 1e-9);
    }

    #[test]
    fn quantile_is_antisymmetric(p in 1e-6f64..0.5) {
        let lo = inv_norm_cdf(p).unwrap();
        let hi = inv_norm_cdf(1.0 - p).unwrap();
        prop_assert!((lo + hi).abs() < 1e-9);
        prop_assert!((norm_cdf(lo) - p).abs() < 1e-9 * p.max(1e-3));
    }

    #[test]
    fn buffer_grows_as_tolerance_shrinks(e1 in 0.001f64..0.5, e2 in 0.001f64..0.5, sigma in 0.0f64..10.0) {
        let a = RiskSpec::new(vec![e1], vec![sigma]).unwrap().buffers()[0];
        let b = RiskSpec::new(vec![e2], vec![sigma]).unwrap().buffers()[0];
        if e1 < e2 {
            prop_assert!(a >= b);
        }
    }

    #[test]
    fn lindistflow_matches_sweep_on_random_trees(
        spec in (2usize..9).prop_flat_map(|n| (
            prop::collection::vec(0usize..64, n),
            prop::collection::vec((0.0f64..200.0, 0.0f64..60.0), n),
            prop::collection::vec((0.0005f64..0.01, 0.0005f64..0.01), n),
        ))
    ) {
        let (parents, loads, imp) = spec;
        let g = random_tree(&parents, &loads, &imp);
        let mut m = MilpModel::new();
        let vars = build_lindistflow(&mut m, &g).unwrap();
        couple_demand(&mut m, &g, &vars, &[]).unwrap();
        let lp = solve_lp(&m).unwrap();
        prop_assert_eq!(lp.status, LpStatus::Optimal);
        let solved = GridState::from_values(&vars, &lp.values);
        let base: Vec<f64> = g.nodes.iter().map(|n| n.base_p_kw).collect();
        let sweep = radial_sweep(&g, &base).unwrap();
        for (a, b) in solved.u.iter().zip(&sweep.u) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
