//! Battery dynamics, charging decisions and the McCormick envelope of the
//! priced charging energy `w = p * tau`.

use std::io::Write;

use thiserror::Error;

use crate::instance::{ChargeSite, ProblemInstance};
use crate::milp::{LinearConstraint, MilpError, MilpModel, Sense, VarId, VarKind};
use crate::vrp::{BigM, Route, RoutingVariables, ValidationReport, Violation, INT_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("route of vehicle {vehicle} visits node {node} without an energy value")]
    MissingEnergy { vehicle: usize, node: usize },
    #[error("inverted {what} bounds [{lower}, {upper}] at site {site}")]
    InvertedBounds { what: &'static str, site: usize, lower: f64, upper: f64 },
}

#[derive(Clone, Debug)]
pub struct EnergyVariables {
    /// `e[j][v]`, energy on arrival; `e[0][v]` is the energy on return to
    /// the depot before recharging.
    pub e: Vec<Vec<VarId>>,
    pub sites: Vec<ChargeSite>,
    /// Site index of each transport node.
    pub site_of_node: Vec<Option<usize>>,
    pub tau: Vec<Vec<VarId>>,
    pub y: Vec<Vec<VarId>>,
    /// Priced charging power per site.
    pub p: Vec<VarId>,
    pub w: Vec<Vec<VarId>>,
}

impl EnergyVariables {
    pub fn register(model: &mut MilpModel, inst: &ProblemInstance) -> Result<Self, MilpError> {
        let c = VarKind::Continuous;
        let mut e = Vec::with_capacity(inst.num_nodes());
        for j in 0..inst.num_nodes() {
            let row = inst
                .vehicles
                .iter()
                .enumerate()
                .map(|(v, s)| model.add_var(format!("e_{j}_{v}"), s.battery_min, s.battery_max, c, 0.0))
                .collect::<Result<Vec<_>, _>>()?;
            e.push(row);
        }
        let sites = inst.charge_sites();
        let mut site_of_node = vec![None; inst.num_nodes()];
        let (mut tau, mut y, mut p, mut w) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (k, site) in sites.iter().enumerate() {
            site_of_node[site.node] = Some(k);
            let j = site.node;
            let (mut tk, mut yk, mut wk) = (Vec::new(), Vec::new(), Vec::new());
            for v in 0..inst.num_vehicles() {
                tk.push(model.add_var(format!("tau_{j}_{v}"), 0.0, site.max_time, c, 0.0)?);
                yk.push(model.add_var(format!("y_{j}_{v}"), 0.0, 1.0, VarKind::Binary, 0.0)?);
                wk.push(model.add_var(format!("w_{j}_{v}"), 0.0, f64::INFINITY, c, inst.costs.energy)?);
            }
            p.push(model.add_var(format!("pc_{j}"), site.power[0], site.power[1], c, 0.0)?);
            tau.push(tk);
            y.push(yk);
            w.push(wk);
        }
        Ok(EnergyVariables { e, sites, site_of_node, tau, y, p, w })
    }

    /// Per-node charging-time variables, for the time-propagation rows.
    pub fn charge_time_by_node(&self) -> Vec<Option<Vec<VarId>>> {
        self.site_of_node.iter().map(|k| k.map(|k| self.tau[k].clone())).collect()
    }

    /// `(bus, y variable, kW drawn)` for every site with a feeder bus.
    pub fn grid_draws(&self, inst: &ProblemInstance) -> Vec<(usize, VarId, f64)> {
        let mut out = Vec::new();
        for (k, site) in self.sites.iter().enumerate() {
            if let Some(bus) = site.grid_node {
                for (v, spec) in inst.vehicles.iter().enumerate() {
                    out.push((bus, self.y[k][v], spec.charge_power_kw()));
                }
            }
        }
        out
    }
}

/// Battery propagation, leg-length, charging-time, overcharge, battery
/// bound and charge-visit rows.
pub fn build_energy_constraints(
    inst: &ProblemInstance,
    rv: &RoutingVariables,
    ev: &EnergyVariables,
    bigm: &BigM,
) -> Vec<LinearConstraint> {
    let nn = inst.num_nodes();
    let m = bigm.energy;
    let mut rows = Vec::new();

    for i in 0..nn {
        for j in 0..nn {
            if i == j {
                continue;
            }
            let tij = inst.travel_time[i][j];
            for (v, spec) in inst.vehicles.iter().enumerate() {
                // e_j - e_i - R tau_i + (C T + M) x <= M
                let mut terms = vec![(ev.e[j][v], 1.0), (ev.e[i][v], -1.0)];
                if let Some(k) = ev.site_of_node[i] {
                    terms.push((ev.tau[k][v], -spec.charge_rate));
                }
                terms.push((rv.x[i][j][v], spec.consumption_rate * tij + m));
                rows.push(LinearConstraint::new("EnergyPropagation", format!("energy_{i}_{j}_{v}"), terms, Sense::Le, m));
            }
        }
    }

    let leg_cap = inst.vehicles.iter().map(|v| v.max_time_before_recharge).fold(f64::INFINITY, f64::min);
    for i in 0..nn {
        for j in 0..nn {
            let tij = inst.travel_time[i][j];
            if i == j || tij == 0.0 {
                continue;
            }
            let terms = (0..inst.num_vehicles()).map(|v| (rv.x[i][j][v], tij)).collect();
            rows.push(LinearConstraint::new("RechargeTravel", format!("leg_{i}_{j}"), terms, Sense::Le, leg_cap));
        }
    }

    for (k, site) in ev.sites.iter().enumerate() {
        let j = site.node;
        for (v, spec) in inst.vehicles.iter().enumerate() {
            let (tau, y) = (ev.tau[k][v], ev.y[k][v]);
            rows.push(LinearConstraint::new(
                "ChargeTime",
                format!("tmin_{j}_{v}"),
                vec![(tau, 1.0), (y, -site.min_time)],
                Sense::Ge,
                0.0,
            ));
            rows.push(LinearConstraint::new(
                "ChargeTime",
                format!("tmax_{j}_{v}"),
                vec![(tau, 1.0), (y, -site.max_time)],
                Sense::Le,
                0.0,
            ));
            rows.push(LinearConstraint::new(
                "NoOvercharge",
                format!("full_{j}_{v}"),
                vec![(ev.e[j][v], 1.0), (tau, spec.charge_rate)],
                Sense::Le,
                spec.battery_max,
            ));
            let mut visit = vec![(y, 1.0)];
            visit.extend((0..nn).filter(|&i| i != j).map(|i| (rv.x[i][j][v], -1.0)));
            rows.push(LinearConstraint::new("ChargeVisit", format!("visit_{j}_{v}"), visit, Sense::Le, 0.0));
        }
    }

    for j in 0..nn {
        for (v, spec) in inst.vehicles.iter().enumerate() {
            let e = ev.e[j][v];
            rows.push(LinearConstraint::new("BatteryBounds", format!("emin_{j}_{v}"), vec![(e, 1.0)], Sense::Ge, spec.battery_min));
            rows.push(LinearConstraint::new("BatteryBounds", format!("emax_{j}_{v}"), vec![(e, 1.0)], Sense::Le, spec.battery_max));
        }
    }
    rows
}

/// Upper McCormick estimate of `p * tau` over the box.
pub fn envelope_upper(p: f64, tau: f64, pb: [f64; 2], tb: [f64; 2]) -> f64 {
    let a = pb[1] * tau + p * tb[0] - pb[1] * tb[0];
    let b = p * tb[1] + pb[0] * tau - pb[0] * tb[1];
    a.min(b)
}

/// Lower McCormick estimate of `p * tau` over the box.
pub fn envelope_lower(p: f64, tau: f64, pb: [f64; 2], tb: [f64; 2]) -> f64 {
    let a = pb[0] * tau + p * tb[0] - pb[0] * tb[0];
    let b = pb[1] * tau + p * tb[1] - pb[1] * tb[1];
    a.max(b)
}

/// McCormick rows for every `(site, vehicle)`: both upper planes, both
/// lower planes, and box rows on `p` and `tau`.
pub fn build_mccormick(
    ev: &EnergyVariables,
    power_bounds: &[[f64; 2]],
    time_bounds: &[[f64; 2]],
) -> Result<Vec<LinearConstraint>, EnergyError> {
    let mut rows = Vec::new();
    for (k, site) in ev.sites.iter().enumerate() {
        let [pl, pu] = power_bounds[k];
        let [tl, tu] = time_bounds[k];
        if !(pl <= pu) {
            return Err(EnergyError::InvertedBounds { what: "power", site: k, lower: pl, upper: pu });
        }
        if !(tl <= tu) {
            return Err(EnergyError::InvertedBounds { what: "charging-time", site: k, lower: tl, upper: tu });
        }
        let j = site.node;
        let p = ev.p[k];
        rows.push(LinearConstraint::new("McCormickBox", format!("pmin_{j}"), vec![(p, 1.0)], Sense::Ge, pl));
        rows.push(LinearConstraint::new("McCormickBox", format!("pmax_{j}"), vec![(p, 1.0)], Sense::Le, pu));
        for v in 0..ev.tau[k].len() {
            let (w, tau) = (ev.w[k][v], ev.tau[k][v]);
            // w <= pu tau + tl p - pu tl ; w <= tu p + pl tau - pl tu
            rows.push(LinearConstraint::new(
                "McCormickUpper",
                format!("mcu1_{j}_{v}"),
                vec![(w, 1.0), (tau, -pu), (p, -tl)],
                Sense::Le,
                -pu * tl,
            ));
            rows.push(LinearConstraint::new(
                "McCormickUpper",
                format!("mcu2_{j}_{v}"),
                vec![(w, 1.0), (p, -tu), (tau, -pl)],
                Sense::Le,
                -pl * tu,
            ));
            // w >= pl tau + tl p - pl tl ; w >= pu tau + tu p - pu tu
            rows.push(LinearConstraint::new(
                "McCormickLower",
                format!("mcl1_{j}_{v}"),
                vec![(w, 1.0), (tau, -pl), (p, -tl)],
                Sense::Ge,
                -pl * tl,
            ));
            rows.push(LinearConstraint::new(
                "McCormickLower",
                format!("mcl2_{j}_{v}"),
                vec![(w, 1.0), (tau, -pu), (p, -tu)],
                Sense::Ge,
                -pu * tu,
            ));
            rows.push(LinearConstraint::new("McCormickBox", format!("taumin_{j}_{v}"), vec![(tau, 1.0)], Sense::Ge, tl));
            rows.push(LinearConstraint::new("McCormickBox", format!("taumax_{j}_{v}"), vec![(tau, 1.0)], Sense::Le, tu));
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub node: usize,
    pub energy_kwh: f64,
    pub charge_added_kwh: f64,
}

/// Energy along one tour. The first entry is the depot departure, the
/// last the return, whose charge is the depot top-up.
#[derive(Clone, Debug, PartialEq)]
pub struct BatteryTrace {
    pub vehicle: usize,
    pub entries: Vec<TraceEntry>,
}

impl BatteryTrace {
    pub fn total_charged(&self) -> f64 {
        self.entries.iter().map(|e| e.charge_added_kwh).sum()
    }
}

/// Reads the battery trace of `route` from model values.
pub fn battery_trace(
    route: &Route,
    values: &[f64],
    inst: &ProblemInstance,
    ev: &EnergyVariables,
) -> Result<BatteryTrace, EnergyError> {
    let v = route.vehicle;
    let spec = &inst.vehicles[v];
    if route.is_empty() {
        return Ok(BatteryTrace {
            vehicle: v,
            entries: vec![TraceEntry { node: 0, energy_kwh: spec.battery_max, charge_added_kwh: 0.0 }],
        });
    }
    let val = |id: VarId| values[id.index()];
    let charge = |node: usize| {
        ev.site_of_node[node].map_or(0.0, |k| val(ev.tau[k][v]) * spec.charge_rate)
    };
    let mut entries = Vec::with_capacity(route.nodes.len());
    for (pos, &node) in route.nodes.iter().enumerate() {
        let e = ev.e.get(node).ok_or(EnergyError::MissingEnergy { vehicle: v, node })?;
        let entry = if pos == 0 {
            TraceEntry { node, energy_kwh: val(e[v]) + charge(0), charge_added_kwh: 0.0 }
        } else {
            TraceEntry { node, energy_kwh: val(e[v]), charge_added_kwh: charge(node) }
        };
        entries.push(entry);
    }
    Ok(BatteryTrace { vehicle: v, entries })
}

/// `(bus, kW)` for every stop of `routes` that charges at a grid-connected
/// site.
pub fn route_draws(inst: &ProblemInstance, routes: &[Route]) -> Vec<(usize, f64)> {
    let sites = inst.charge_sites();
    let mut out = Vec::new();
    for r in routes {
        let kw = inst.vehicles[r.vehicle].charge_power_kw();
        for (pos, &node) in r.nodes.iter().enumerate().skip(1) {
            if r.charge_minutes[pos] <= 0.0 {
                continue;
            }
            if let Some(bus) = sites.iter().find(|s| s.node == node).and_then(|s| s.grid_node) {
                out.push((bus, kw));
            }
        }
    }
    out
}

/// Reads what [`write_traces`] wrote.
pub fn read_traces<R: std::io::Read>(r: R) -> csv::Result<Vec<BatteryTrace>> {
    let mut out: Vec<BatteryTrace> = Vec::new();
    for rec in csv::Reader::from_reader(r).deserialize::<(usize, usize, usize, f64, f64)>() {
        let (vehicle, _, node, energy_kwh, charge_added_kwh) = rec?;
        if out.last().is_none_or(|t| t.vehicle != vehicle) {
            out.push(BatteryTrace { vehicle, entries: Vec::new() });
        }
        let t = out.last_mut().expect("trace pushed above");
        t.entries.push(TraceEntry { node, energy_kwh, charge_added_kwh });
    }
    Ok(out)
}

/// Writes `vehicle,node_sequence_index,node,energy_kwh,charge_added_kwh`.
pub fn write_traces<W: Write>(traces: &[BatteryTrace], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["vehicle", "node_sequence_index", "node", "energy_kwh", "charge_added_kwh"])?;
    for t in traces {
        for (k, e) in t.entries.iter().enumerate() {
            out.write_record([
                t.vehicle.to_string(),
                k.to_string(),
                e.node.to_string(),
                format!("{}", e.energy_kwh),
                format!("{}", e.charge_added_kwh),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Arrival energies of a tour for a given departure energy; `None` once
/// the battery would drop below its floor or a charge overfills it.
fn simulate_energy(route: &Route, inst: &ProblemInstance, depart: f64) -> Option<f64> {
    let spec = &inst.vehicles[route.vehicle];
    let mut level = depart;
    let last = route.nodes.len() - 1;
    for k in 1..=last {
        let (i, j) = (route.nodes[k - 1], route.nodes[k]);
        let arrive = level - spec.consumption_rate * inst.travel_time[i][j];
        if arrive < spec.battery_min - INT_TOL {
            return None;
        }
        if k == last {
            return Some(arrive);
        }
        let added = route.charge_minutes[k] * spec.charge_rate;
        let kept = arrive.min(spec.battery_max - added);
        if kept < spec.battery_min - INT_TOL {
            return None;
        }
        level = kept + added;
    }
    Some(level)
}

/// Replays a tour's charging plan and reports battery, leg-length and
/// charging-time violations. The departure energy is chosen as low as the
/// tour allows, which is the most favourable choice for the cyclic depot
/// top-up.
pub fn check_energy(route: &Route, inst: &ProblemInstance, tol: f64) -> ValidationReport {
    let mut out = Vec::new();
    if route.is_empty() {
        return ValidationReport { violations: out };
    }
    let v = route.vehicle;
    let spec = &inst.vehicles[v];
    let sites = inst.charge_sites();
    let leg_cap = inst.vehicles.iter().map(|s| s.max_time_before_recharge).fold(f64::INFINITY, f64::min);
    for w in route.nodes.windows(2) {
        let t = inst.travel_time[w[0]][w[1]];
        if t > leg_cap + tol {
            out.push(Violation { family: "RechargeTravel", vehicle: Some(v), node: Some(w[1]), slack: leg_cap - t });
        }
    }
    for (pos, (&node, &tau)) in route.nodes.iter().zip(&route.charge_minutes).enumerate() {
        if tau <= tol {
            continue;
        }
        let site = sites.iter().find(|s| s.node == node);
        let on_tour_end = node == 0 && pos + 1 == route.nodes.len();
        match site {
            Some(s) if node != 0 || on_tour_end => {
                if tau < s.min_time - tol || tau > s.max_time + tol {
                    let slack = (tau - s.min_time).min(s.max_time - tau);
                    out.push(Violation { family: "ChargeTime", vehicle: Some(v), node: Some(node), slack });
                }
            }
            _ => out.push(Violation { family: "ChargeVisit", vehicle: Some(v), node: Some(node), slack: -tau }),
        }
    }
    let depot_add = route.charge_minutes[route.nodes.len() - 1] * spec.charge_rate;
    let lo = (spec.battery_min + depot_add).min(spec.battery_max);
    if simulate_energy(route, inst, spec.battery_max).is_none() {
        out.push(Violation { family: "BatteryBounds", vehicle: Some(v), node: None, slack: -1.0 });
        return ValidationReport { violations: out };
    }
    let (mut a, mut b) = (lo, spec.battery_max);
    if simulate_energy(route, inst, a).is_none() {
        for _ in 0..80 {
            let mid = 0.5 * (a + b);
            if simulate_energy(route, inst, mid).is_some() {
                b = mid;
            } else {
                a = mid;
            }
        }
        a = b;
    }
    let ret = simulate_energy(route, inst, a).unwrap_or(f64::NEG_INFINITY);
    // Cyclic top-up: departure = kept return energy + depot charge.
    let kept = ret.min(spec.battery_max - depot_add);
    let shortfall = a - (kept + depot_add);
    if shortfall > tol.max(1e-9 * spec.battery_max) {
        out.push(Violation { family: "EnergyCycle", vehicle: Some(v), node: Some(0), slack: -shortfall });
    }
    if spec.battery_max - depot_add < spec.battery_min - tol {
        out.push(Violation { family: "NoOvercharge", vehicle: Some(v), node: Some(0), slack: spec.battery_max - depot_add - spec.battery_min });
    }
    ValidationReport { violations: out }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_example_point() {
        let up = envelope_upper(25.0, 15.0, [0.0, 50.0], [0.0, 30.0]);
        assert_eq!(up, 750.0);
        assert!(envelope_lower(25.0, 15.0, [0.0, 50.0], [0.0, 30.0]) <= 375.0);
    }

    #[test]
    fn envelope_exact_on_box_edges() {
        let (pb, tb) = ([2.0, 7.0], [1.0, 4.0]);
        for (p, t) in [(2.0, 3.3), (7.0, 1.7), (4.1, 1.0), (5.5, 4.0)] {
            assert!((envelope_upper(p, t, pb, tb) - p * t).abs() < 1e-12);
            assert!((envelope_lower(p, t, pb, tb) - p * t).abs() < 1e-12);
        }
    }

    #[test]
    fn upper_plane_reduces_at_min_time() {
        // At tau = T_min the first plane is p * T_min.
        let (pb, tb) = ([7.5, 75.0], [3.0, 20.0]);
        let p = 40.0;
        let a = pb[1] * tb[0] + p * tb[0] - pb[1] * tb[0];
        assert_eq!(a, p * tb[0]);
    }
}
