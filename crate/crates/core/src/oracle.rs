//! Exhaustive reference solver for tiny instances.
//!
//! Every assignment of customers to vehicles and every visiting order is
//! tried. For a fixed tour the only remaining freedom is when and where to
//! charge; each on/off pattern of the tour's chargers is a small linear
//! program over arrival times, arrival energies and charging minutes, solved
//! exactly. Feeder limits are checked afterwards with the radial sweep.

use thiserror::Error;

use crate::grid::{demand_with_draws, limit_violations, radial_sweep};
use crate::instance::{ChargeSite, ProblemInstance};
use crate::milp::{solve_lp, LinearConstraint, LpStatus, MilpModel, Sense, VarKind};
use crate::report::route_cost;
use crate::vrp::Route;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{customers} customers exceed the enumeration limit of {max}")]
    TooLarge { customers: usize, max: usize },
    #[error("charging subproblem failed: {0}")]
    Subproblem(String),
}

/// Hard ceiling on enumerated customers.
pub const MAX_CUSTOMERS: usize = 7;

const TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct EnumeratedSolution {
    /// One route per vehicle, with charging minutes.
    pub routes: Vec<Route>,
    pub objective: f64,
    pub feasible: bool,
    /// Complete assignments examined.
    pub evaluated: usize,
}

/// A priced option for one vehicle's tour.
#[derive(Clone, Debug)]
struct TourOption {
    cost: f64,
    charge_minutes: Vec<f64>,
    /// `(bus, kW)` drawn by the chargers switched on.
    draws: Vec<(usize, f64)>,
}

/// Best charging plan per on/off pattern of a tour, cheapest first.
fn tour_options(inst: &ProblemInstance, v: usize, seq: &[usize], buffers: &[f64]) -> Result<Vec<TourOption>, OracleError> {
    let spec = &inst.vehicles[v];
    // Loads: leave with every drop-off on board, keep the minimum allowed.
    let mut load: f64 = seq.iter().map(|&j| inst.node(j).mean_dropoff).sum();
    if load > spec.capacity + TOL {
        return Ok(Vec::new());
    }
    for &j in seq {
        load = (load - inst.node(j).mean_net() + buffers[j - 1]).max(0.0);
        if load > spec.capacity + TOL {
            return Ok(Vec::new());
        }
    }
    let mut nodes = Vec::with_capacity(seq.len() + 2);
    nodes.push(0);
    nodes.extend_from_slice(seq);
    nodes.push(0);
    let leg_cap = inst.vehicles.iter().map(|s| s.max_time_before_recharge).fold(f64::INFINITY, f64::min);
    if nodes.windows(2).any(|w| inst.travel_time[w[0]][w[1]] > leg_cap + TOL) {
        return Ok(Vec::new());
    }

    let sites = inst.charge_sites();
    // Chargers on this tour: (position, site); the depot charge sits on
    // the closing position.
    let chargers: Vec<(usize, &ChargeSite)> = nodes
        .iter()
        .enumerate()
        .skip(1)
        .filter_map(|(pos, &n)| sites.iter().find(|s| s.node == n).map(|s| (pos, s)))
        .collect();

    let mut out = Vec::new();
    for mask in 0u32..(1 << chargers.len()) {
        let on: Vec<bool> = (0..chargers.len()).map(|b| mask >> b & 1 == 1).collect();
        if let Some((cost, minutes)) = charging_lp(inst, v, &nodes, &chargers, &on)? {
            let draws = chargers
                .iter()
                .zip(&on)
                .filter(|(_, &o)| o)
                .filter_map(|((_, s), _)| s.grid_node.map(|b| (b, spec.charge_power_kw())))
                .collect();
            out.push(TourOption { cost, charge_minutes: minutes, draws });
        }
    }
    out.sort_by(|a, b| a.cost.total_cmp(&b.cost));
    Ok(out)
}

/// Cheapest charging minutes for a fixed tour and charger pattern.
fn charging_lp(
    inst: &ProblemInstance,
    v: usize,
    nodes: &[usize],
    chargers: &[(usize, &ChargeSite)],
    on: &[bool],
) -> Result<Option<(f64, Vec<f64>)>, OracleError> {
    let spec = &inst.vehicles[v];
    let last = nodes.len() - 1;
    let mut m = MilpModel::new();
    let err = |e: crate::milp::MilpError| OracleError::Subproblem(e.to_string());
    let c = VarKind::Continuous;
    // Arrival time and energy per position 1..=last; energy at `last` is the
    // return level before the depot top-up.
    let mut t = vec![None; nodes.len()];
    let mut e = vec![None; nodes.len()];
    for pos in 1..=last {
        let (lo, hi) = if pos == last {
            (0.0, inst.horizon)
        } else {
            let d = inst.node(nodes[pos]);
            (d.earliest_arrival, d.latest_arrival)
        };
        if lo > hi {
            return Ok(None);
        }
        t[pos] = Some(m.add_var(format!("t{pos}"), lo, hi, c, 0.0).map_err(err)?);
        e[pos] = Some(m.add_var(format!("e{pos}"), spec.battery_min, spec.battery_max, c, 0.0).map_err(err)?);
    }
    let mut tau = vec![None; nodes.len()];
    for ((pos, site), &is_on) in chargers.iter().zip(on) {
        if is_on {
            let price = inst.costs.energy * site.power[0];
            let var = m.add_var(format!("tau{pos}"), site.min_time, site.max_time, c, price).map_err(err)?;
            tau[*pos] = Some(var);
        }
    }
    let mut rows = Vec::new();
    for pos in 1..=last {
        let (i, j) = (nodes[pos - 1], nodes[pos]);
        let tij = inst.travel_time[i][j];
        let tj = t[pos].expect("time var");
        let ej = e[pos].expect("energy var");
        // Time: depart after arrival plus charging, the depot at zero.
        let mut tt = vec![(tj, 1.0)];
        let mut et = vec![(ej, 1.0)];
        if pos == 1 {
            // Departure energy is the return level plus the depot top-up.
            et.push((e[last].expect("return energy"), -1.0));
            if let Some(tz) = tau[last] {
                et.push((tz, -spec.charge_rate));
            }
        } else {
            tt.push((t[pos - 1].expect("time var"), -1.0));
            et.push((e[pos - 1].expect("energy var"), -1.0));
            if let Some(tp) = tau[pos - 1] {
                tt.push((tp, -1.0));
                et.push((tp, -spec.charge_rate));
            }
        }
        rows.push(LinearConstraint::new("time", format!("t{pos}"), tt, Sense::Ge, tij));
        rows.push(LinearConstraint::new("energy", format!("e{pos}"), et, Sense::Le, -spec.consumption_rate * tij));
        if let Some(tp) = tau[pos] {
            rows.push(LinearConstraint::new(
                "full",
                format!("f{pos}"),
                vec![(ej, 1.0), (tp, spec.charge_rate)],
                Sense::Le,
                spec.battery_max,
            ));
        }
    }
    m.extend_constraints(rows).map_err(err)?;
    let res = solve_lp(&m).map_err(err)?;
    if res.status != LpStatus::Optimal {
        return Ok(None);
    }
    let minutes = (0..nodes.len())
        .map(|pos| tau[pos].map_or(0.0, |id| res.values[id.index()]))
        .collect::<Vec<_>>();
    Ok(Some((res.objective, minutes)))
}

fn grid_ok(inst: &ProblemInstance, draws: &[(usize, f64)]) -> bool {
    radial_sweep(&inst.grid, &demand_with_draws(&inst.grid, draws))
        .is_ok_and(|state| limit_violations(&inst.grid, &state, TOL).is_empty())
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for k in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(k);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Finds the cheapest plan by enumeration. `buffers[j - 1]` is the extra
/// retained load at customer `j` (all zero for mean demand).
pub fn enumerate_optimal(
    inst: &ProblemInstance,
    max_customers: usize,
    buffers: &[f64],
) -> Result<EnumeratedSolution, OracleError> {
    let n = inst.num_customers();
    let limit = max_customers.min(MAX_CUSTOMERS);
    if n > limit {
        return Err(OracleError::TooLarge { customers: n, max: limit });
    }
    let nv = inst.num_vehicles();
    let mut cache: std::collections::HashMap<(usize, Vec<usize>), Vec<TourOption>> = Default::default();
    let mut best: Option<(f64, Vec<Route>)> = None;
    let mut evaluated = 0usize;

    // Vehicle of each customer, counted in base nv.
    let combos = nv.pow(n as u32);
    for code in 0..combos {
        let mut subsets = vec![Vec::new(); nv];
        let mut c = code;
        for j in 1..=n {
            subsets[c % nv].push(j);
            c /= nv;
        }
        let orders: Vec<Vec<Vec<usize>>> = subsets.iter().map(|s| permutations(s)).collect();
        let mut idx = vec![0usize; nv];
        loop {
            evaluated += 1;
            let mut per_vehicle = Vec::with_capacity(nv);
            let mut dead = false;
            for v in 0..nv {
                let seq = &orders[v][idx[v]];
                if seq.is_empty() {
                    per_vehicle.push(vec![TourOption { cost: 0.0, charge_minutes: vec![0.0, 0.0], draws: Vec::new() }]);
                    continue;
                }
                let key = (v, seq.clone());
                if !cache.contains_key(&key) {
                    let opts = tour_options(inst, v, seq, buffers)?;
                    cache.insert(key.clone(), opts);
                }
                let opts = cache[&key].clone();
                if opts.is_empty() {
                    dead = true;
                    break;
                }
                per_vehicle.push(opts);
            }
            if !dead {
                let travel: f64 = (0..nv)
                    .map(|v| {
                        let seq = &orders[v][idx[v]];
                        tour_nodes(seq).windows(2).map(|w| inst.travel_time[w[0]][w[1]]).sum::<f64>()
                    })
                    .sum();
                let base = inst.costs.time * travel;
                if let Some((cost, choice)) = cheapest_grid_feasible(inst, &per_vehicle, base, best.as_ref().map(|b| b.0)) {
                    let routes: Vec<Route> = (0..nv)
                        .map(|v| {
                            let nodes = tour_nodes(&orders[v][idx[v]]);
                            Route { vehicle: v, charge_minutes: per_vehicle[v][choice[v]].charge_minutes.clone(), nodes }
                        })
                        .collect();
                    let total = route_cost(inst, &routes).total;
                    debug_assert!((total - cost).abs() < 1e-6);
                    log::debug!("candidate {:?} -> {total}", routes.iter().map(|r| &r.nodes).collect::<Vec<_>>());
                    let better = match &best {
                        None => true,
                        Some((b, r)) => {
                            total < b - 1e-12
                                || ((total - b).abs() <= 1e-12
                                    && routes.iter().map(|x| &x.nodes).lt(r.iter().map(|x| &x.nodes)))
                        }
                    };
                    if better {
                        best = Some((total, routes));
                    }
                }
            }
            // Next combination of orders.
            let mut k = 0;
            while k < nv {
                idx[k] += 1;
                if idx[k] < orders[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == nv {
                break;
            }
        }
    }
    Ok(match best {
        Some((objective, routes)) => EnumeratedSolution { routes, objective, feasible: true, evaluated },
        None => EnumeratedSolution {
            routes: (0..nv).map(|v| Route::new(v, vec![0, 0])).collect(),
            objective: f64::INFINITY,
            feasible: false,
            evaluated,
        },
    })
}

fn tour_nodes(seq: &[usize]) -> Vec<usize> {
    let mut nodes = Vec::with_capacity(seq.len() + 2);
    nodes.push(0);
    nodes.extend_from_slice(seq);
    nodes.push(0);
    nodes
}

/// Cheapest per-vehicle option combination whose joint charging draw the
/// feeder can carry; combinations not beating `cutoff` are skipped.
fn cheapest_grid_feasible(
    inst: &ProblemInstance,
    per_vehicle: &[Vec<TourOption>],
    base: f64,
    cutoff: Option<f64>,
) -> Option<(f64, Vec<usize>)> {
    let nv = per_vehicle.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut idx = vec![0usize; nv];
    loop {
        let cost = base + (0..nv).map(|v| per_vehicle[v][idx[v]].cost).sum::<f64>();
        let beat_cutoff = cutoff.is_none_or(|c| cost <= c + 1e-12);
        let beat_best = best.as_ref().is_none_or(|(b, _)| cost < *b);
        if beat_cutoff && beat_best {
            let draws: Vec<(usize, f64)> = (0..nv).flat_map(|v| per_vehicle[v][idx[v]].draws.clone()).collect();
            if grid_ok(inst, &draws) {
                best = Some((cost, idx.clone()));
            }
        }
        let mut k = 0;
        while k < nv {
            idx[k] += 1;
            if idx[k] < per_vehicle[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == nv {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::generate_synthetic;

    #[test]
    fn single_customer_round_trip() {
        let inst = generate_synthetic(11, 1, 1, 10.0).unwrap();
        let sol = enumerate_optimal(&inst, 7, &[0.0]).unwrap();
        assert!(sol.feasible);
        assert_eq!(sol.routes[0].nodes, vec![0, 1, 0]);
        let travel = inst.travel_time[0][1] + inst.travel_time[1][0];
        let spec = &inst.vehicles[0];
        let energy = inst.costs.energy * spec.charge_rate * (spec.consumption_rate * travel / spec.charge_rate);
        assert!((sol.objective - (inst.costs.time * travel + energy)).abs() < 1e-9);
    }

    #[test]
    fn unreachable_window_is_infeasible() {
        let mut inst = generate_synthetic(11, 2, 1, 10.0).unwrap();
        let t = inst.travel_time[0][2];
        inst.demand.nodes[1].earliest_arrival = 0.0;
        inst.demand.nodes[1].latest_arrival = t * 0.5;
        assert!(!enumerate_optimal(&inst, 7, &[0.0, 0.0]).unwrap().feasible);
    }

    #[test]
    fn too_many_customers() {
        let inst = generate_synthetic(1, 8, 2, 10.0).unwrap();
        assert!(matches!(enumerate_optimal(&inst, 7, &[0.0; 8]), Err(OracleError::TooLarge { .. })));
    }
}
