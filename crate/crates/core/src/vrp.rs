//! Routing part of the model: arc binaries, loads, arrival times and
//! sub-tour elimination, plus route extraction and replay validation.

use std::fmt;

use thiserror::Error;

use crate::instance::ProblemInstance;
use crate::milp::{LinearConstraint, MilpError, MilpModel, Sense, VarId, VarKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouteError {
    #[error("arc {from}->{to} of vehicle {vehicle} is fractional ({value})")]
    Fractional { vehicle: usize, from: usize, to: usize, value: f64 },
    #[error("vehicle {vehicle}: arcs do not form a single depot tour")]
    Disconnected { vehicle: usize },
    #[error("node {node} is left twice by vehicle {vehicle}")]
    Branching { vehicle: usize, node: usize },
    #[error("expected {expected} {what}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
}

/// Integrality tolerance for arc values.
pub const INT_TOL: f64 = 1e-6;

/// Model variables of the routing layer. Node indices run over `0..=n`;
/// entries for the depot are noted per field.
#[derive(Clone, Debug)]
pub struct RoutingVariables {
    /// `x[i][j][v]`; the diagonal exists with both bounds at zero.
    pub x: Vec<Vec<Vec<VarId>>>,
    /// Load when leaving the depot, per vehicle.
    pub l0: Vec<VarId>,
    /// `l[j][v]`; `l[0]` aliases `l0`.
    pub l: Vec<Vec<VarId>>,
    /// `t[j][v]`; `t[0][v]` is the return time to the depot.
    pub t: Vec<Vec<VarId>>,
    /// Order variable of customer `j` at `pi[j - 1]`.
    pub pi: Vec<VarId>,
}

impl RoutingVariables {
    /// Registers routing variables with travel cost on the arcs.
    pub fn register(model: &mut MilpModel, inst: &ProblemInstance) -> Result<Self, MilpError> {
        let nn = inst.num_nodes();
        let nv = inst.num_vehicles();
        let mut x = vec![vec![Vec::with_capacity(nv); nn]; nn];
        for (i, row) in x.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                for v in 0..nv {
                    let ub = if i == j { 0.0 } else { 1.0 };
                    let cost = inst.costs.time * inst.travel_time[i][j];
                    cell.push(model.add_var(format!("x_{i}_{j}_{v}"), 0.0, ub, VarKind::Binary, cost)?);
                }
            }
        }
        let c = VarKind::Continuous;
        let mut l = Vec::with_capacity(nn);
        let mut t = Vec::with_capacity(nn);
        for j in 0..nn {
            let mut lj = Vec::with_capacity(nv);
            let mut tj = Vec::with_capacity(nv);
            for (v, spec) in inst.vehicles.iter().enumerate() {
                let (tlo, thi) = time_window(inst, j);
                let name = if j == 0 { format!("l0_{v}") } else { format!("l_{j}_{v}") };
                lj.push(model.add_var(name, 0.0, spec.capacity, c, 0.0)?);
                tj.push(model.add_var(format!("t_{j}_{v}"), tlo, thi, c, 0.0)?);
            }
            l.push(lj);
            t.push(tj);
        }
        let n = inst.num_customers() as f64;
        let pi = (1..nn)
            .map(|j| model.add_var(format!("pi_{j}"), 0.0, n + 1.0, c, 0.0))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RoutingVariables { x, l0: l[0].clone(), l, t, pi })
    }

    pub fn num_nodes(&self) -> usize {
        self.x.len()
    }

    pub fn num_vehicles(&self) -> usize {
        self.l0.len()
    }

    fn check(&self, inst: &ProblemInstance) -> Result<(), RouteError> {
        let dims = [
            ("nodes", inst.num_nodes(), self.x.len()),
            ("vehicles", inst.num_vehicles(), self.l0.len()),
            ("order variables", inst.num_customers(), self.pi.len()),
        ];
        for (what, expected, got) in dims {
            if expected != got {
                return Err(RouteError::Dimension { what, expected, got });
            }
        }
        Ok(())
    }
}

/// Arrival-time window of node `j`; the depot's is `[0, horizon]`.
pub fn time_window(inst: &ProblemInstance, j: usize) -> (f64, f64) {
    if j == 0 {
        (0.0, inst.horizon)
    } else {
        let d = inst.node(j);
        (d.earliest_arrival, d.latest_arrival)
    }
}

/// Big-M constants of the load, time and energy propagation rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BigM {
    pub load: f64,
    pub time: f64,
    pub energy: f64,
}

/// Big-M values for the largest quantile `zmax` used in load buffers.
/// Charging-time terms range over the stations, whose times enter the
/// time-propagation rows.
pub fn compute_big_m(inst: &ProblemInstance, zmax: f64) -> BigM {
    let zmax = zmax.max(0.0);
    let fmax = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0, f64::max);
    let cap = fmax(&mut inst.vehicles.iter().map(|v| v.capacity));
    let load_term = fmax(&mut inst.demand.nodes.iter().map(|d| d.mean_pickup + zmax * d.net_demand_std));
    let lt = fmax(&mut inst.demand.nodes.iter().map(|d| d.latest_arrival));
    let tk = fmax(&mut inst.stations.iter().map(|s| s.max_charge_time));
    let tmax = fmax(&mut inst.travel_time.iter().flatten().copied());
    let emax = fmax(&mut inst.vehicles.iter().map(|v| v.battery_max));
    let rmax = fmax(&mut inst.vehicles.iter().map(|v| v.charge_rate));
    let cmax = fmax(&mut inst.vehicles.iter().map(|v| v.consumption_rate));
    BigM {
        load: cap + load_term,
        time: lt + tk + tmax,
        energy: emax + tk * rmax + cmax * tmax,
    }
}

/// Routing rows other than load propagation, followed by load propagation
/// with zero buffers. `charge_time[i]` holds the per-vehicle charging-time
/// variables of a station at customer or depot node `i`; only customer
/// stations delay departure.
pub fn build_routing_constraints(
    inst: &ProblemInstance,
    vars: &RoutingVariables,
    bigm: &BigM,
    charge_time: &[Option<Vec<VarId>>],
) -> Result<Vec<LinearConstraint>, RouteError> {
    let mut rows = routing_base_rows(inst, vars, bigm, charge_time)?;
    rows.extend(load_propagation_rows(inst, vars, bigm, &vec![0.0; inst.num_customers()])?);
    Ok(rows)
}

/// All routing families except load propagation.
pub fn routing_base_rows(
    inst: &ProblemInstance,
    vars: &RoutingVariables,
    bigm: &BigM,
    charge_time: &[Option<Vec<VarId>>],
) -> Result<Vec<LinearConstraint>, RouteError> {
    vars.check(inst)?;
    if charge_time.len() != inst.num_nodes() {
        return Err(RouteError::Dimension {
            what: "charge-time entries",
            expected: inst.num_nodes(),
            got: charge_time.len(),
        });
    }
    let nn = inst.num_nodes();
    let nv = inst.num_vehicles();
    let x = &vars.x;
    let mut rows = Vec::new();

    for j in 1..nn {
        let terms = (0..nn).filter(|&i| i != j).flat_map(|i| (0..nv).map(move |v| (x[i][j][v], 1.0))).collect();
        rows.push(LinearConstraint::new("Assignment", format!("assign_{j}"), terms, Sense::Eq, 1.0));
    }
    for s in 1..nn {
        for v in 0..nv {
            let mut terms: Vec<_> = (0..nn).filter(|&i| i != s).map(|i| (x[i][s][v], 1.0)).collect();
            terms.extend((0..nn).filter(|&j| j != s).map(|j| (x[s][j][v], -1.0)));
            rows.push(LinearConstraint::new("FlowConservation", format!("flow_{s}_{v}"), terms, Sense::Eq, 0.0));
        }
    }
    for v in 0..nv {
        let terms = (1..nn).map(|j| (x[0][j][v], 1.0)).collect();
        rows.push(LinearConstraint::new("DepotDeparture", format!("depart_{v}"), terms, Sense::Le, 1.0));
    }
    for v in 0..nv {
        let mut terms = vec![(vars.l0[v], 1.0)];
        for i in 0..nn {
            for j in 1..nn {
                let d = inst.node(j).mean_dropoff;
                if i != j && d != 0.0 {
                    terms.push((x[i][j][v], -d));
                }
            }
        }
        rows.push(LinearConstraint::new("DepotLoad", format!("depotload_{v}"), terms, Sense::Eq, 0.0));
    }
    for j in 0..nn {
        for (v, spec) in inst.vehicles.iter().enumerate() {
            rows.push(LinearConstraint::new(
                "Capacity",
                format!("cap_{j}_{v}"),
                vec![(vars.l[j][v], 1.0)],
                Sense::Le,
                spec.capacity,
            ));
        }
    }
    let big_n = nn as f64;
    for i in 1..nn {
        for j in 1..nn {
            if i == j {
                continue;
            }
            // pi_j - pi_i - N * sum_v x_ijv >= 1 - N
            let mut terms = vec![(vars.pi[j - 1], 1.0), (vars.pi[i - 1], -1.0)];
            terms.extend((0..nv).map(|v| (x[i][j][v], -big_n)));
            rows.push(LinearConstraint::new("SubtourElimination", format!("mtz_{i}_{j}"), terms, Sense::Ge, 1.0 - big_n));
        }
    }
    for j in 0..nn {
        let (lo, hi) = time_window(inst, j);
        for v in 0..nv {
            let t = vars.t[j][v];
            rows.push(LinearConstraint::new("TimeWindow", format!("et_{j}_{v}"), vec![(t, 1.0)], Sense::Ge, lo));
            rows.push(LinearConstraint::new("TimeWindow", format!("lt_{j}_{v}"), vec![(t, 1.0)], Sense::Le, hi));
        }
    }
    let m = bigm.time;
    for i in 0..nn {
        for j in 0..nn {
            if i == j {
                continue;
            }
            for v in 0..nv {
                // t_j >= t_i + tau_i + T_ij x - M (1 - x); the depot departs at 0.
                let tij = inst.travel_time[i][j];
                let mut terms = vec![(vars.t[j][v], 1.0), (x[i][j][v], -(tij + m))];
                if i != 0 {
                    terms.push((vars.t[i][v], -1.0));
                    if let Some(tau) = &charge_time[i] {
                        terms.push((tau[v], -1.0));
                    }
                }
                rows.push(LinearConstraint::new("TimePropagation", format!("time_{i}_{j}_{v}"), terms, Sense::Ge, -m));
            }
        }
    }
    Ok(rows)
}

/// `l_jv >= l_iv - (E[D_j] - E[P_j]) + buffer_j - M (1 - x_ijv)` for
/// `i` in the depot and customers, `j` a customer.
pub fn load_propagation_rows(
    inst: &ProblemInstance,
    vars: &RoutingVariables,
    bigm: &BigM,
    buffers: &[f64],
) -> Result<Vec<LinearConstraint>, RouteError> {
    vars.check(inst)?;
    if buffers.len() != inst.num_customers() {
        return Err(RouteError::Dimension {
            what: "load buffers",
            expected: inst.num_customers(),
            got: buffers.len(),
        });
    }
    let nn = inst.num_nodes();
    let m = bigm.load;
    let mut rows = Vec::with_capacity(nn * nn * inst.num_vehicles());
    for i in 0..nn {
        for j in 1..nn {
            if i == j {
                continue;
            }
            let rhs = -inst.node(j).mean_net() + buffers[j - 1] - m;
            for v in 0..inst.num_vehicles() {
                let terms = vec![(vars.l[j][v], 1.0), (vars.l[i][v], -1.0), (vars.x[i][j][v], -m)];
                rows.push(LinearConstraint::new("LoadPropagation", format!("load_{i}_{j}_{v}"), terms, Sense::Ge, rhs));
            }
        }
    }
    Ok(rows)
}

/// A vehicle tour `[0, .., 0]` with per-position charging minutes; the
/// depot's charge is recorded on the closing entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Route {
    pub vehicle: usize,
    pub nodes: Vec<usize>,
    pub charge_minutes: Vec<f64>,
}

impl Route {
    pub fn new(vehicle: usize, nodes: Vec<usize>) -> Self {
        let charge_minutes = vec![0.0; nodes.len()];
        Route { vehicle, nodes, charge_minutes }
    }

    /// Deployed routes visit at least one customer.
    pub fn is_empty(&self) -> bool {
        self.nodes.len() <= 2
    }

    pub fn customers(&self) -> &[usize] {
        if self.nodes.len() <= 2 {
            &[]
        } else {
            &self.nodes[1..self.nodes.len() - 1]
        }
    }

    pub fn travel_minutes(&self, inst: &ProblemInstance) -> f64 {
        self.nodes.windows(2).map(|w| inst.travel_time[w[0]][w[1]]).sum()
    }
}

/// Chains the arcs of every vehicle into depot tours. Vehicles without arcs
/// get the empty route `[0, 0]`.
pub fn extract_routes(values: &[f64], vars: &RoutingVariables) -> Result<Vec<Route>, RouteError> {
    let nn = vars.num_nodes();
    let mut routes = Vec::with_capacity(vars.num_vehicles());
    for v in 0..vars.num_vehicles() {
        let mut succ = vec![None; nn];
        let mut arcs = 0usize;
        for i in 0..nn {
            for j in 0..nn {
                let val = values[vars.x[i][j][v].index()];
                if (val - val.round()).abs() > INT_TOL {
                    return Err(RouteError::Fractional { vehicle: v, from: i, to: j, value: val });
                }
                if val.round() == 1.0 {
                    if succ[i].replace(j).is_some() {
                        return Err(RouteError::Branching { vehicle: v, node: i });
                    }
                    arcs += 1;
                }
            }
        }
        if arcs == 0 {
            routes.push(Route::new(v, vec![0, 0]));
            continue;
        }
        let mut nodes = vec![0];
        let mut cur = 0;
        while let Some(next) = succ[cur] {
            nodes.push(next);
            if next == 0 || nodes.len() > nn + 1 {
                break;
            }
            cur = next;
        }
        if *nodes.last().unwrap_or(&1) != 0 || nodes.len() - 1 != arcs {
            return Err(RouteError::Disconnected { vehicle: v });
        }
        routes.push(Route::new(v, nodes));
    }
    Ok(routes)
}

/// A violated requirement found while replaying routes.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub family: &'static str,
    pub vehicle: Option<usize>,
    pub node: Option<usize>,
    /// Negative amount by which the requirement is missed.
    pub slack: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |o: Option<usize>| o.map_or_else(|| "-".to_string(), |x| x.to_string());
        write!(f, "{},{},{},{}", self.family, opt(self.vehicle), opt(self.node), self.slack)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }

    pub fn of_family(&self, family: &str) -> impl Iterator<Item = &Violation> {
        let family = family.to_string();
        self.violations.iter().filter(move |v| v.family == family)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "family,vehicle,node,slack")?;
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Loads and arrival times along a route, as the model sees them.
#[derive(Clone, Debug, PartialEq)]
pub struct RouteReplay {
    /// Load after each position; the first entry is the departure load.
    pub loads: Vec<f64>,
    /// Arrival time at each position; the first entry is 0.
    pub arrivals: Vec<f64>,
}

/// Smallest loads and earliest arrival times consistent with the route,
/// using `buffers[j - 1]` as the extra retained load at customer `j`.
pub fn replay(route: &Route, inst: &ProblemInstance, buffers: &[f64]) -> RouteReplay {
    let mut loads = Vec::with_capacity(route.nodes.len());
    let mut arrivals = Vec::with_capacity(route.nodes.len());
    let l0: f64 = route.customers().iter().map(|&j| inst.node(j).mean_dropoff).sum();
    loads.push(l0);
    arrivals.push(0.0);
    for k in 1..route.nodes.len() {
        let (i, j) = (route.nodes[k - 1], route.nodes[k]);
        let depart = if k == 1 { 0.0 } else { arrivals[k - 1] + route.charge_minutes[k - 1] };
        let (et, _) = time_window(inst, j);
        arrivals.push((depart + inst.travel_time[i][j]).max(et));
        let load = if j == 0 {
            0.0
        } else {
            (loads[k - 1] - inst.node(j).mean_net() + buffers[j - 1]).max(0.0)
        };
        loads.push(load);
    }
    RouteReplay { loads, arrivals }
}

/// Replays routes with mean demands and checks assignment, capacity and
/// time windows.
pub fn validate_routes(routes: &[Route], inst: &ProblemInstance, tol: f64) -> ValidationReport {
    validate_routes_buffered(routes, inst, tol, &vec![0.0; inst.num_customers()])
}

/// [`validate_routes`] with per-customer load buffers.
pub fn validate_routes_buffered(
    routes: &[Route],
    inst: &ProblemInstance,
    tol: f64,
    buffers: &[f64],
) -> ValidationReport {
    let mut out = Vec::new();
    let nn = inst.num_nodes();
    let mut visits = vec![0usize; nn];
    let mut used = vec![false; inst.num_vehicles()];
    for r in routes {
        let shape_ok = r.nodes.len() >= 2
            && r.nodes[0] == 0
            && r.nodes[r.nodes.len() - 1] == 0
            && r.charge_minutes.len() == r.nodes.len()
            && r.customers().iter().all(|&j| j != 0 && j < nn)
            && r.vehicle < inst.num_vehicles();
        if !shape_ok {
            out.push(Violation { family: "RouteShape", vehicle: Some(r.vehicle), node: None, slack: -1.0 });
            continue;
        }
        if std::mem::replace(&mut used[r.vehicle], true) {
            out.push(Violation { family: "RouteShape", vehicle: Some(r.vehicle), node: None, slack: -1.0 });
        }
        for &j in r.customers() {
            visits[j] += 1;
        }
        if r.is_empty() {
            continue;
        }
        let cap = inst.vehicles[r.vehicle].capacity;
        let rep = replay(r, inst, buffers);
        for (k, (&node, &load)) in r.nodes.iter().zip(&rep.loads).enumerate() {
            if k + 1 < r.nodes.len() && load > cap + tol {
                out.push(Violation { family: "Capacity", vehicle: Some(r.vehicle), node: Some(node), slack: cap - load });
            }
        }
        for (k, &node) in r.nodes.iter().enumerate().skip(1) {
            let (_, hi) = time_window(inst, node);
            if rep.arrivals[k] > hi + tol {
                out.push(Violation {
                    family: "TimeWindow",
                    vehicle: Some(r.vehicle),
                    node: Some(node),
                    slack: hi - rep.arrivals[k],
                });
            }
        }
    }
    for (j, &count) in visits.iter().enumerate().skip(1) {
        if count != 1 {
            out.push(Violation { family: "Assignment", vehicle: None, node: Some(j), slack: -((count as f64) - 1.0).abs() });
        }
    }
    ValidationReport { violations: out }
}

/// Greedy tours without en-route charging. Two constructions are tried,
/// nearest-neighbour extension of one vehicle at a time and cheapest
/// insertion in order of latest arrival; the shorter complete one wins.
/// Returns `None` when neither places every customer.
pub fn greedy_routes(inst: &ProblemInstance, buffers: &[f64]) -> Option<Vec<Route>> {
    let total = |rs: &Vec<Route>| rs.iter().map(|r| r.travel_minutes(inst)).sum::<f64>();
    match (nearest_neighbour(inst, buffers), cheapest_insertion(inst, buffers)) {
        (Some(a), Some(b)) => Some(if total(&b) < total(&a) { b } else { a }),
        (a, b) => a.or(b),
    }
}

fn nearest_neighbour(inst: &ProblemInstance, buffers: &[f64]) -> Option<Vec<Route>> {
    let mut left: Vec<usize> = (1..=inst.num_customers()).collect();
    let mut routes = Vec::with_capacity(inst.num_vehicles());
    for v in 0..inst.num_vehicles() {
        let mut tour = Route::new(v, vec![0, 0]);
        loop {
            let last = tour.nodes[tour.nodes.len() - 2];
            let mut best: Option<(f64, usize)> = None;
            for (pos, &j) in left.iter().enumerate() {
                let d = inst.travel_time[last][j];
                if best.is_some_and(|(bd, _)| d >= bd) {
                    continue;
                }
                let mut cand = tour.nodes.clone();
                cand.insert(cand.len() - 1, j);
                if tour_feasible(&Route::new(v, cand), inst, buffers) {
                    best = Some((d, pos));
                }
            }
            let Some((_, pos)) = best else { break };
            let j = left.remove(pos);
            let at = tour.nodes.len() - 1;
            tour.nodes.insert(at, j);
            tour.charge_minutes.push(0.0);
        }
        routes.push(tour);
    }
    left.is_empty().then_some(routes)
}

fn cheapest_insertion(inst: &ProblemInstance, buffers: &[f64]) -> Option<Vec<Route>> {
    let mut order: Vec<usize> = (1..=inst.num_customers()).collect();
    order.sort_by(|&a, &b| time_window(inst, a).1.total_cmp(&time_window(inst, b).1).then(a.cmp(&b)));
    let mut routes: Vec<Route> = (0..inst.num_vehicles()).map(|v| Route::new(v, vec![0, 0])).collect();
    for j in order {
        let mut best: Option<(f64, usize, usize)> = None;
        for (v, r) in routes.iter().enumerate() {
            for at in 1..r.nodes.len() {
                let (a, b) = (r.nodes[at - 1], r.nodes[at]);
                let delta = inst.travel_time[a][j] + inst.travel_time[j][b] - inst.travel_time[a][b];
                if best.is_some_and(|(bd, _, _)| delta >= bd) {
                    continue;
                }
                let mut cand = r.nodes.clone();
                cand.insert(at, j);
                if tour_feasible(&Route::new(v, cand), inst, buffers) {
                    best = Some((delta, v, at));
                }
            }
        }
        let (_, v, at) = best?;
        routes[v].nodes.insert(at, j);
        routes[v].charge_minutes.push(0.0);
    }
    Some(routes)
}

/// Load, time, leg-length and energy feasibility of a route charged only
/// at the depot.
pub fn tour_feasible(route: &Route, inst: &ProblemInstance, buffers: &[f64]) -> bool {
    let spec = &inst.vehicles[route.vehicle];
    let rep = replay(route, inst, buffers);
    if rep.loads.iter().any(|&l| l > spec.capacity + INT_TOL) {
        return false;
    }
    for (k, &node) in route.nodes.iter().enumerate().skip(1) {
        if rep.arrivals[k] > time_window(inst, node).1 + INT_TOL {
            return false;
        }
    }
    let leg_cap = inst.vehicles.iter().map(|v| v.max_time_before_recharge).fold(f64::INFINITY, f64::min);
    if route.nodes.windows(2).any(|w| inst.travel_time[w[0]][w[1]] > leg_cap + INT_TOL) {
        return false;
    }
    let depot = inst.charge_sites().into_iter().find(|s| s.node == 0);
    let max_depot_charge = depot.map_or(0.0, |s| s.max_time * spec.charge_rate);
    let used = spec.consumption_rate * route.travel_minutes(inst);
    used <= (spec.battery_max - spec.battery_min).min(max_depot_charge) + INT_TOL
}
