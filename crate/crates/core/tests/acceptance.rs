//! Acceptance checks. Each test writes one `criterion N ...: PASS|FAIL`
//! line straight to stderr so the verdicts show up in the test log.

use std::io::Write;
use std::time::{Duration, Instant};

use evgrid::cli::{cmd_solve, ModeKind, RunConfig, RunFlags};
use evgrid::energy::envelope_upper;
use evgrid::grid::{build_lindistflow, couple_demand, radial_sweep, GridLine, GridNetwork, GridNode, GridState};
use evgrid::instance::{generate_synthetic, ProblemInstance, VehicleSpec};
use evgrid::milp::{solve_lp, LpStatus, MilpModel, VarKind};
use evgrid::model::solve_instance;
use evgrid::oracle::enumerate_optimal;
use evgrid::report::{emissions_report, EmissionFactors};
use evgrid::stochastic::{empirical_violation_rate, rate_bound, RiskSpec};
use evgrid::{assemble, BnbOptions, Mode};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, name: &str, pass: bool, detail: &str) {
    let word = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n} {name}: {word} ({detail})");
}

/// The 15-location, 6-vehicle instance sized like the largest
/// mid-scale experiment.
fn reference_instance() -> ProblemInstance {
    generate_synthetic(1, 15, 6, 696.0).unwrap()
}

fn exact() -> BnbOptions {
    BnbOptions { gap_tol: 1e-9, ..Default::default() }
}

#[test]
fn criterion_01_oracle_equivalence() {
    let start = Instant::now();
    let mut agree = 0;
    let mut infeasible = 0;
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for seed in 1..=50u64 {
        let n = 1 + (seed % 5) as usize;
        let v = 1 + (seed % 2) as usize;
        let mut inst = generate_synthetic(seed, n, v, 5.0 + (seed % 7) as f64 * 10.0).unwrap();
        if seed % 10 == 0 {
            // Unreachable window at customer 1.
            let lt = 0.5 * inst.travel_time[0][1];
            inst.demand.nodes[0].earliest_arrival = 0.0;
            inst.demand.nodes[0].latest_arrival = lt;
        }
        let oracle = enumerate_optimal(&inst, 7, &vec![0.0; n]).unwrap();
        let milp = solve_instance(&inst, Mode::Deterministic, &exact()).unwrap();
        let milp_feasible = milp.solution.is_some();
        let ok = if oracle.feasible && milp_feasible {
            let d = (oracle.objective - milp.result.objective).abs();
            worst = worst.max(d);
            d <= 1e-5
        } else {
            oracle.feasible == milp_feasible
        };
        if !oracle.feasible {
            infeasible += 1;
        }
        if ok {
            agree += 1;
        } else {
            notes.push(format!("seed {seed}: oracle {} milp {}", oracle.objective, milp.result.objective));
        }
    }
    let elapsed = start.elapsed();
    let pass = agree == 50 && elapsed < Duration::from_secs(300);
    verdict(
        1,
        "oracle equivalence",
        pass,
        &format!("{agree}/50 agree, {infeasible} infeasible, max diff {worst:.2e}, {:.1}s", elapsed.as_secs_f64()),
    );
    assert!(pass, "{notes:?}");
}

#[test]
fn criterion_02_half_tolerance_collapse() {
    let inst = generate_synthetic(4, 4, 2, 60.0).unwrap();
    let det = assemble(&inst, Mode::Deterministic).unwrap();
    let cc = assemble(&inst, Mode::ChanceConstrained(RiskSpec::uniform(&inst, 0.5).unwrap())).unwrap();
    let rows_same = det.model.constraints().len() == cc.model.constraints().len()
        && det.model.constraints().iter().zip(cc.model.constraints()).all(|(a, b)| {
            a.sense == b.sense
                && a.rhs.to_bits() == b.rhs.to_bits()
                && a.terms.len() == b.terms.len()
                && a.terms.iter().zip(&b.terms).all(|(s, t)| s.0 == t.0 && s.1.to_bits() == t.1.to_bits())
        });
    let vars_same = det.model.vars() == cc.model.vars();
    let a = solve_instance(&inst, Mode::Deterministic, &exact()).unwrap().result.objective;
    let b = solve_instance(&inst, cc.mode.clone(), &exact()).unwrap().result.objective;
    let pass = rows_same && vars_same && (a - b).abs() <= 1e-6;
    verdict(
        2,
        "epsilon 0.5 collapse",
        pass,
        &format!("matrix identical {}, objectives {a:.9} vs {b:.9}", rows_same && vars_same),
    );
    assert!(pass);
}

#[test]
fn criterion_03_uncertainty_cost() {
    let inst = reference_instance();
    let opts = BnbOptions { node_limit: Some(200), ..Default::default() };
    let det = solve_instance(&inst, Mode::Deterministic, &opts).unwrap();
    let risk = RiskSpec::uniform(&inst, 0.005).unwrap();
    let cc = solve_instance(&inst, Mode::ChanceConstrained(risk), &opts).unwrap();
    let (d, u) = (det.solution.as_ref().map(|s| s.deployed()), cc.solution.as_ref().map(|s| s.deployed()));
    let pass = matches!((d, u), (Some(d), Some(u)) if u >= d);
    verdict(
        3,
        "uncertainty cost",
        pass,
        &format!(
            "deterministic {d:?} vehicles ({:.4}), 1-eps 0.995 {u:?} vehicles ({:.4})",
            det.result.objective, cc.result.objective
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_violation_rate() {
    let inst = reference_instance();
    let opts = BnbOptions { node_limit: Some(50), ..Default::default() };
    let mut worst = f64::NEG_INFINITY;
    let mut pass = true;
    for eps in [0.05, 0.1, 0.2] {
        let risk = RiskSpec::uniform(&inst, eps).unwrap();
        let out = solve_instance(&inst, Mode::ChanceConstrained(risk.clone()), &opts).unwrap();
        let Some(sol) = out.solution.as_ref() else {
            pass = false;
            continue;
        };
        let visits = out.assembled.planned_visits(&inst, sol);
        for r in empirical_violation_rate(&visits, &inst, &risk, 10_000, 42) {
            let bound = rate_bound(eps, 10_000);
            worst = worst.max(r.rate - bound);
            pass &= r.rate <= bound;
        }
    }
    verdict(4, "violation rate", pass, &format!("largest rate minus bound {worst:.4}"));
    assert!(pass);
}

fn five_bus_feeder() -> GridNetwork {
    let mut nodes = vec![GridNode::substation("sub", 1000.0)];
    for (k, (p, q)) in [(40.0, 12.0), (25.0, 8.0), (60.0, 15.0), (10.0, 3.0)].into_iter().enumerate() {
        nodes.push(GridNode::load(format!("b{}", k + 1), p, q));
    }
    GridNetwork {
        slack: 0,
        base_kva: 1000.0,
        flow_limits: false,
        nodes,
        lines: vec![
            GridLine::new(0, 1, 0.010, 0.020),
            GridLine::new(1, 2, 0.015, 0.010),
            GridLine::new(1, 3, 0.020, 0.030),
            GridLine::new(3, 4, 0.012, 0.018),
        ],
    }
}

#[test]
fn criterion_05_lindistflow() {
    let g = five_bus_feeder();
    let mut m = MilpModel::new();
    let vars = build_lindistflow(&mut m, &g).unwrap();
    couple_demand(&mut m, &g, &vars, &[]).unwrap();
    let lp = solve_lp(&m).unwrap();
    let solved = GridState::from_values(&vars, &lp.values);
    let base: Vec<f64> = g.nodes.iter().map(|n| n.base_p_kw).collect();
    let sweep = radial_sweep(&g, &base).unwrap();
    let residual = solved.u.iter().zip(&sweep.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let single = GridNetwork {
        slack: 0,
        base_kva: 1.0,
        flow_limits: false,
        nodes: vec![GridNode::substation("sub", 10.0), GridNode::load("m", 0.5, 0.2)],
        lines: vec![GridLine::new(0, 1, 0.01, 0.02)],
    };
    let u_m = radial_sweep(&single, &[0.0, 0.5]).unwrap().u[1];
    let hand = 1.0 - 2.0 * (0.01 * 0.5 + 0.02 * 0.2);
    let pass = lp.status == LpStatus::Optimal && residual < 1e-9 && (u_m - 0.982).abs() <= 1e-12 && u_m == hand;
    verdict(5, "LinDistFlow", pass, &format!("max residual {residual:.1e}, single line u = {u_m:.12}"));
    assert!(pass);
}

#[test]
fn criterion_06_coupling() {
    let spec = VehicleSpec {
        capacity: 4.0,
        battery_min: 5.0,
        battery_max: 60.0,
        consumption_rate: 0.2,
        charge_rate: 50.0 / 60.0,
        max_time_before_recharge: 120.0,
    };
    let mut nodes = vec![GridNode::substation("sub", 5000.0)];
    let mut lines = Vec::new();
    for k in 1..=20 {
        nodes.push(GridNode::load(format!("s{k}"), 0.0, 0.0));
        lines.push(GridLine::new(0, k, 0.001, 0.001));
    }
    let g = GridNetwork { slack: 0, base_kva: 1000.0, flow_limits: false, nodes, lines };
    let mut m = MilpModel::new();
    let vars = build_lindistflow(&mut m, &g).unwrap();
    let mut draws = Vec::new();
    for k in 1..=20 {
        let y = m.add_var(format!("y{k}"), 1.0, 1.0, VarKind::Binary, 0.0).unwrap();
        draws.push((k, y, spec.charge_power_kw()));
    }
    couple_demand(&mut m, &g, &vars, &draws).unwrap();
    let lp = solve_lp(&m).unwrap();
    let added: f64 = vars.p_dem.iter().map(|id| lp.values[id.index()]).sum();
    let pass = lp.status == LpStatus::Optimal && added == 1000.0;
    verdict(6, "coupling arithmetic", pass, &format!("20 chargers add {added} kW"));
    assert!(pass);
}

#[test]
fn criterion_07_emissions() {
    let f = EmissionFactors::default();
    let det = emissions_report(402.9, 12, 30.0, &f, "taxi")[0].emissions_kg;
    let cc = emissions_report(422.9, 14, 30.0, &f, "taxi")[0].emissions_kg;
    let pass = (det - 103.5).abs() <= 0.1 && (cc - 108.7).abs() <= 0.1;
    verdict(7, "emissions", pass, &format!("402.9 kWh -> {det:.3} kg, 422.9 kWh -> {cc:.3} kg"));
    assert!(pass);
}

#[test]
fn criterion_08_mccormick() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pass = true;
    let mut worst_edge: f64 = 0.0;
    for _ in 0..1000 {
        let a = rng.random_range(0.0..100.0);
        let pb = [a, a + rng.random_range(0.1..100.0)];
        let c = rng.random_range(0.0..30.0);
        let tb = [c, c + rng.random_range(0.1..60.0)];
        let p = rng.random_range(pb[0]..=pb[1]);
        let t = rng.random_range(tb[0]..=tb[1]);
        pass &= envelope_upper(p, t, pb, tb) >= p * t - 1e-9;
        for (pe, te) in [(pb[0], t), (pb[1], t), (p, tb[0]), (p, tb[1])] {
            let gap = (envelope_upper(pe, te, pb, tb) - pe * te).abs();
            worst_edge = worst_edge.max(gap);
            pass &= gap <= 1e-9;
        }
    }
    verdict(8, "McCormick tightness", pass, &format!("largest gap on the box edge {worst_edge:.1e}"));
    assert!(pass);
}

#[test]
fn criterion_09_scale() {
    let inst = reference_instance();
    let asm = assemble(&inst, Mode::Deterministic).unwrap();
    let vars = asm.model.num_vars();
    let rows = asm.model.num_constraints();
    let opts = BnbOptions { node_limit: Some(100), ..Default::default() };
    let start = Instant::now();
    let out = solve_instance(&inst, Mode::Deterministic, &opts).unwrap();
    let elapsed = start.elapsed();
    let pass = vars > 1350 && out.solution.is_some() && elapsed < opts.time_limit;
    verdict(
        9,
        "scale",
        pass,
        &format!(
            "{vars} variables, {rows} rows, incumbent {:.4} after {} nodes in {:.1}s",
            out.result.objective,
            out.result.node_count,
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let inst_path = tmp.path().join("instance.toml");
    generate_synthetic(9, 5, 2, 50.0).unwrap().write(&inst_path).unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let flags = RunFlags {
            mode: Some(ModeKind::Cc),
            epsilon: Some(0.1),
            seed: Some(5),
            threads: Some(1),
            ..Default::default()
        };
        let out = tmp.path().join(run);
        let cfg = RunConfig::resolve("solve", &inst_path, &flags, Some(&out), &Default::default()).unwrap();
        cmd_solve(&cfg).unwrap();
        let read = |f: &str| std::fs::read(out.join(f)).unwrap();
        outputs.push((read("summary.csv"), read("routes.csv")));
    }
    let pass = outputs[0] == outputs[1];
    verdict(10, "determinism", pass, "summary.csv and routes.csv compared byte by byte");
    assert!(pass);
}
