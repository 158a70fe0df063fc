use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use evgrid::instance::{generate_synthetic, ProblemInstance};

fn evgrid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evgrid"))
        .current_dir(dir)
        .env_remove("EVGRID_OUT")
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn objective(dir: &Path) -> f64 {
    let text = fs::read_to_string(dir.join("result.toml")).unwrap();
    let t: toml::Table = text.parse().unwrap();
    t["objective"].as_float().unwrap()
}

const TRIPS: &str = "pickup_datetime,dropoff_datetime,trip_distance,pulid,dolid,passenger_count
12/31/2018 11:58:45,1/1/2019 12:37:04,16.6,162,26,1
1/1/2019 08:10:00,1/1/2019 08:30:00,2.0,26,48,2
1/1/2019 09:15:00,1/1/2019 09:40:00,3.1,48,162,1
1/2/2019 08:05:00,1/2/2019 08:25:00,1.2,26,48,3
1/2/2019 10:00:00,1/2/2019 10:20:00,4.0,162,26,2
";

#[test]
fn ingest_writes_a_parsable_instance() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("trips.csv"), TRIPS).unwrap();
    let o = evgrid(tmp.path(), &["ingest", "--trips", "trips.csv", "--window", "08:00-11:00", "--out", "."]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let inst = ProblemInstance::read(&tmp.path().join("instance.toml")).unwrap();
    assert_eq!(inst.num_customers(), 3);
    let written = inst.to_toml().unwrap();
    assert_eq!(ProblemInstance::from_toml(&written).unwrap(), inst);
}

#[test]
fn ingest_with_empty_window_warns() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("trips.csv"), TRIPS).unwrap();
    let o = evgrid(tmp.path(), &["ingest", "--trips", "trips.csv", "--window", "20:00-21:00", "--out", "."]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("zero demand"));
    let inst = ProblemInstance::read(&tmp.path().join("instance.toml")).unwrap();
    assert!(inst.demand.nodes.iter().all(|d| d.mean_pickup == 0.0));
}

#[test]
fn ingest_rejects_missing_column() {
    let tmp = tempfile::tempdir().unwrap();
    let broken = TRIPS.replace(",passenger_count", "").replace(",1\n", "\n");
    fs::write(tmp.path().join("trips.csv"), broken).unwrap();
    let o = evgrid(tmp.path(), &["ingest", "--trips", "trips.csv", "--out", "."]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("passenger_count"));
}

#[test]
fn half_tolerance_on_zero_deviation_matches_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let mut inst = generate_synthetic(3, 4, 2, 30.0).unwrap();
    for d in &mut inst.demand.nodes {
        d.net_demand_std = 0.0;
    }
    inst.write(&tmp.path().join("instance.toml")).unwrap();
    assert_eq!(code(&evgrid(tmp.path(), &["solve", "--instance", "instance.toml", "--gap", "0", "--out", "det"])), 0);
    let cc = ["solve", "--instance", "instance.toml", "--gap", "0", "--mode", "cc", "--epsilon", "0.5", "--out", "cc"];
    assert_eq!(code(&evgrid(tmp.path(), &cc)), 0);
    assert!((objective(&tmp.path().join("det")) - objective(&tmp.path().join("cc"))).abs() < 1e-6);
}

#[test]
fn solve_validate_report_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let o = evgrid(dir, &["generate", "--locations", "4", "--vehicles", "2", "--scale", "40", "--seed", "3", "--out", "."]);
    assert_eq!(code(&o), 0);
    let solve = ["solve", "--instance", "instance.toml", "--mode", "cc", "--epsilon", "0.1", "--seed", "4", "--out", "run"];
    assert_eq!(code(&evgrid(dir, &solve)), 0);
    for f in ["summary.csv", "routes.csv", "battery_traces.csv", "grid_snapshot.csv", "run_manifest.toml", "violations.csv"] {
        assert!(dir.join("run").join(f).exists(), "{f}");
    }
    let manifest = fs::read_to_string(dir.join("run/run_manifest.toml")).unwrap();
    assert!(manifest.contains("epsilon = 0.1"));

    let validate = [
        "validate", "--instance", "instance.toml", "--routes", "run/routes.csv", "--solution", "run/solution.csv",
        "--mode", "cc", "--epsilon", "0.1", "--seed", "9",
    ];
    let o = evgrid(dir, &validate);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("violation rate"));

    let o = evgrid(dir, &["report", "--runs", "run", "--fleet", "taxi", "--out", "rep"]);
    assert_eq!(code(&o), 0);
    for f in ["summary.csv", "emissions.csv", "objective.svg"] {
        assert!(dir.join("rep").join(f).exists(), "{f}");
    }
}

#[test]
fn swapped_stops_fail_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut inst = generate_synthetic(3, 3, 1, 20.0).unwrap();
    // Tight, well separated windows make the order matter.
    let order = [2usize, 1, 3];
    let mut t = 0.0;
    let mut prev = 0;
    for &j in &order {
        t += inst.travel_time[prev][j];
        inst.demand.nodes[j - 1].earliest_arrival = t;
        inst.demand.nodes[j - 1].latest_arrival = t + 0.5;
        prev = j;
    }
    inst.write(&dir.join("instance.toml")).unwrap();
    let good = "vehicle,position,node,arrival_min,load,energy_kwh,charge_min\n\
                0,0,0,0,0,0,0\n0,1,2,0,0,0,0\n0,2,1,0,0,0,0\n0,3,3,0,0,0,0\n0,4,0,0,0,0,0\n";
    let bad = good.replace("0,1,2,", "0,1,X,").replace("0,2,1,", "0,2,2,").replace("0,1,X,", "0,1,1,");
    fs::write(dir.join("good.csv"), good).unwrap();
    fs::write(dir.join("bad.csv"), bad).unwrap();
    let run = |f: &str| evgrid(dir, &["validate", "--instance", "instance.toml", "--routes", f]);
    let o = run("bad.csv");
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("TimeWindow"));
    let o = run("good.csv");
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(!out.contains("TimeWindow"), "{out}");
}

#[test]
fn chance_validation_requires_seed() {
    let tmp = tempfile::tempdir().unwrap();
    generate_synthetic(3, 2, 1, 10.0).unwrap().write(&tmp.path().join("instance.toml")).unwrap();
    fs::write(tmp.path().join("r.csv"), "vehicle,position,node,arrival_min,load,energy_kwh,charge_min\n").unwrap();
    let o = evgrid(tmp.path(), &["validate", "--instance", "instance.toml", "--routes", "r.csv", "--mode", "cc"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--seed"));
}

#[test]
fn flags_override_config_and_env_sets_default_out() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate_synthetic(3, 2, 1, 10.0).unwrap().write(&dir.join("instance.toml")).unwrap();
    fs::write(dir.join("cfg.toml"), "mode = \"cc\"\nepsilon = 0.2\ngap = 0.01\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_evgrid"))
        .current_dir(dir)
        .env("EVGRID_OUT", "from-env")
        .args(["--config", "cfg.toml", "solve", "--instance", "instance.toml", "--epsilon", "0.3"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = fs::read_to_string(dir.join("from-env/run_manifest.toml")).unwrap();
    assert!(manifest.contains("mode = \"cc\""));
    assert!(manifest.contains("epsilon = 0.3"));
    assert!(manifest.contains("gap = 0.01"));
}

#[test]
fn bad_epsilon_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    generate_synthetic(3, 2, 1, 10.0).unwrap().write(&tmp.path().join("instance.toml")).unwrap();
    let o = evgrid(tmp.path(), &["solve", "--instance", "instance.toml", "--mode", "cc", "--epsilon", "1.5"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn infeasible_instance_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let mut inst = generate_synthetic(3, 2, 1, 10.0).unwrap();
    inst.demand.nodes[0].earliest_arrival = 0.0;
    inst.demand.nodes[0].latest_arrival = inst.travel_time[0][1] * 0.5;
    inst.write(&tmp.path().join("instance.toml")).unwrap();
    let o = evgrid(tmp.path(), &["solve", "--instance", "instance.toml", "--out", "run"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn node_limit_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    generate_synthetic(9, 5, 2, 40.0).unwrap().write(&tmp.path().join("instance.toml")).unwrap();
    let o = evgrid(tmp.path(), &["solve", "--instance", "instance.toml", "--node-limit", "1", "--gap", "0", "--out", "run"]);
    assert_eq!(code(&o), 3);
    assert!(tmp.path().join("run/routes.csv").exists());
}
