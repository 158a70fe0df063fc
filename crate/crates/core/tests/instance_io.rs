use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use evgrid::grid::{GridLine, GridNetwork, GridNode};
use evgrid::instance::{
    build_instance, clusterize, generate_synthetic, parse_trip_records, write_trip_records, ChargingStation,
    ClusterDefaults, Costs, DayWindow, DemandProfile, InstanceError, NodeDemand, ProblemInstance, TripRecord,
    VehicleSpec,
};
use proptest::prelude::*;

fn at(day: u32, h: u32, m: u32) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2019, 1, day).unwrap().and_hms_opt(h, m, 0).unwrap()
}

fn trip(day: u32, h: u32, from: u32, to: u32, pax: u32) -> TripRecord {
    TripRecord {
        pickup_datetime: at(day, h, 0),
        dropoff_datetime: at(day, h, 20),
        trip_distance: 2.5,
        pickup_location_id: from,
        dropoff_location_id: to,
        passenger_count: pax,
    }
}

#[test]
fn two_day_means() {
    let trips = vec![trip(1, 9, 3, 7, 4), trip(2, 9, 3, 7, 6)];
    let map: BTreeMap<u32, usize> = [(3, 1), (7, 2)].into_iter().collect();
    let w = DayWindow::whole_day();
    let p = clusterize(&trips, &w, &map, &ClusterDefaults::for_window(&w)).unwrap();
    assert_eq!(p.nodes[0].mean_pickup, 5.0);
    assert_eq!(p.nodes[1].mean_dropoff, 5.0);
    // Net samples at location 3 are -4 and -6.
    assert!((p.nodes[0].net_demand_std - 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn one_day_has_no_dispersion() {
    let trips = vec![trip(1, 9, 3, 7, 4), trip(1, 11, 7, 3, 2)];
    let map: BTreeMap<u32, usize> = [(3, 1), (7, 2)].into_iter().collect();
    let w = DayWindow::whole_day();
    let p = clusterize(&trips, &w, &map, &ClusterDefaults::for_window(&w)).unwrap();
    assert!(p.nodes.iter().all(|d| d.net_demand_std == 0.0));
}

#[test]
fn window_excluding_everything_gives_zero_profile() {
    let trips = vec![trip(1, 9, 3, 7, 4)];
    let map: BTreeMap<u32, usize> = [(3, 1), (7, 2)].into_iter().collect();
    let w = DayWindow::new(NaiveTime::from_hms_opt(18, 0, 0).unwrap(), NaiveTime::from_hms_opt(20, 0, 0).unwrap())
        .unwrap();
    let p = clusterize(&trips, &w, &map, &ClusterDefaults::for_window(&w)).unwrap();
    assert!(p.nodes.iter().all(|d| d.mean_pickup == 0.0 && d.mean_dropoff == 0.0 && d.net_demand_std == 0.0));
}

#[test]
fn unmapped_ids_are_listed() {
    let trips = vec![trip(1, 9, 3, 9, 1), trip(1, 10, 11, 3, 1)];
    let map: BTreeMap<u32, usize> = [(3, 1)].into_iter().collect();
    let w = DayWindow::whole_day();
    match clusterize(&trips, &w, &map, &ClusterDefaults::for_window(&w)) {
        Err(InstanceError::UnmappedLocations(ids)) => assert_eq!(ids, vec![9, 11]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_timestamp_names_line_and_field() {
    let text = "pickup_datetime,dropoff_datetime,trip_distance,pulid,dolid,passenger_count\n\
                12/31/2018 11:58:45,1/1/2019 12:37:04,16.6,162,26,1\n\
                12/31/2018 25:00:00,1/1/2019 12:37:04,1.0,162,26,1\n";
    match parse_trip_records(text.as_bytes()) {
        Err(InstanceError::Parse { line, field, .. }) => {
            assert_eq!(line, 3);
            assert_eq!(field, "pickup_datetime");
        }
        other => panic!("{other:?}"),
    }
}

fn small_parts() -> (DemandProfile, Vec<VehicleSpec>, Vec<ChargingStation>, GridNetwork, Costs, Vec<Vec<f64>>) {
    let n = 5;
    let nodes = (0..n)
        .map(|k| NodeDemand {
            mean_dropoff: 1.0,
            mean_pickup: k as f64,
            net_demand_std: 0.5,
            risk_tolerance: 0.05,
            earliest_arrival: 0.0,
            latest_arrival: 120.0,
        })
        .collect();
    let profile = DemandProfile { labels: (1..=n).map(|k| k.to_string()).collect(), nodes };
    let vehicles = vec![VehicleSpec {
        capacity: 10.0,
        battery_min: 5.0,
        battery_max: 60.0,
        consumption_rate: 0.2,
        charge_rate: 50.0 / 60.0,
        max_time_before_recharge: 90.0,
    }];
    let stations = vec![ChargingStation {
        transport_node: 2,
        grid_node: 1,
        min_charge_time: 0.0,
        max_charge_time: 30.0,
        power_bounds: None,
    }];
    let grid = GridNetwork {
        slack: 0,
        base_kva: 1000.0,
        flow_limits: false,
        nodes: vec![GridNode::substation("sub", 1000.0), GridNode::load("s", 50.0, 10.0)],
        lines: vec![GridLine::new(0, 1, 0.002, 0.002)],
    };
    let tt = (0..=n).map(|i| (0..=n).map(|j| if i == j { 0.0 } else { 10.0 }).collect()).collect();
    (profile, vehicles, stations, grid, Costs { time: 0.02, energy: 0.15 }, tt)
}

#[test]
fn builder_counts_depot() {
    let (d, v, s, g, c, t) = small_parts();
    let inst = build_instance(d, v, s, g, c, t).unwrap();
    assert_eq!(inst.num_nodes(), 6);
}

#[test]
fn builder_rejects_dangling_grid_node() {
    let (d, v, mut s, g, c, t) = small_parts();
    s[0].grid_node = 7;
    assert!(build_instance(d, v, s, g, c, t).is_err());
}

#[test]
fn builder_rejects_empty_fleet() {
    let (d, _, s, g, c, t) = small_parts();
    assert!(matches!(build_instance(d, Vec::new(), s, g, c, t), Err(InstanceError::NoVehicles)));
}

#[test]
fn instance_file_round_trip() {
    let inst = generate_synthetic(7, 6, 3, 80.0).unwrap();
    let text = inst.to_toml().unwrap();
    let table: toml::Table = text.parse().unwrap();
    let keys: Vec<&str> = table.keys().map(String::as_str).collect();
    for section in ["nodes", "travel_time", "demand", "vehicles", "stations", "grid", "costs"] {
        assert!(keys.contains(&section), "missing {section}");
    }
    assert_eq!(ProblemInstance::from_toml(&text).unwrap(), inst);
}

#[test]
fn synthetic_travel_times_obey_triangle_inequality() {
    let inst = generate_synthetic(13, 8, 2, 50.0).unwrap();
    let t = &inst.travel_time;
    let n = t.len();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                assert!(t[i][j] <= t[i][k] + t[k][j] + 1e-9);
            }
        }
    }
}

fn arb_trip() -> impl Strategy<Value = TripRecord> {
    (1u32..=28, 0u32..24, 0u32..60, 0u32..600, 0u32..1000, 1u32..40, 1u32..40, 1u32..7).prop_map(
        |(day, h, m, dur, dist, from, to, pax)| {
            let start = at(day, h, m);
            TripRecord {
                pickup_datetime: start,
                dropoff_datetime: start + chrono::Duration::minutes(dur as i64),
                trip_distance: dist as f64 / 10.0,
                pickup_location_id: from,
                dropoff_location_id: to,
                passenger_count: pax,
            }
        },
    )
}

proptest! {
    #[test]
    fn trip_csv_round_trip(trips in prop::collection::vec(arb_trip(), 0..30)) {
        let mut buf = Vec::new();
        write_trip_records(&trips, &mut buf).unwrap();
        prop_assert_eq!(parse_trip_records(buf.as_slice()).unwrap(), trips);
    }

    #[test]
    fn clusterize_ignores_order(
        trips in prop::collection::vec(arb_trip(), 1..40),
        shuffle in prop::collection::vec(any::<prop::sample::Index>(), 40),
    ) {
        let map: BTreeMap<u32, usize> = (1..40).map(|id| (id, id as usize)).collect();
        let w = DayWindow::new(NaiveTime::from_hms_opt(6, 0, 0).unwrap(), NaiveTime::from_hms_opt(20, 0, 0).unwrap())
            .unwrap();
        let defaults = ClusterDefaults::for_window(&w);
        let mut permuted = trips.clone();
        for (k, ix) in shuffle.iter().enumerate().take(permuted.len()) {
            let j = ix.index(permuted.len());
            permuted.swap(k, j);
        }
        prop_assert_eq!(
            clusterize(&trips, &w, &map, &defaults).unwrap(),
            clusterize(&permuted, &w, &map, &defaults).unwrap()
        );
    }

    #[test]
    fn synthetic_is_deterministic(seed in any::<u64>(), n in 1usize..10, v in 1usize..4) {
        let a = generate_synthetic(seed, n, v, 30.0).unwrap();
        prop_assert_eq!(&a, &generate_synthetic(seed, n, v, 30.0).unwrap());
        let total: f64 = a.demand.nodes.iter().map(|d| d.mean_pickup).sum();
        prop_assert!((total - 30.0).abs() < 1e-9);
    }
}
