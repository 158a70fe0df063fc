//! Full model assembly, solving with a heuristic starting incumbent, and
//! decoding of solver output into routes, battery traces and grid state.

use crate::energy::{
    battery_trace, build_energy_constraints, build_mccormick, check_energy, BatteryTrace, EnergyVariables,
};
use crate::grid::{build_lindistflow, couple_demand, radial_sweep, GridState, GridVariables};
use crate::instance::ProblemInstance;
use crate::milp::{branch_and_bound, BnbOptions, MilpModel, SolveResult};
use crate::stochastic::{reformulate_chance_constraints, PlannedVisit, RiskSpec};
use crate::vrp::{
    compute_big_m, extract_routes, greedy_routes, load_propagation_rows, replay, routing_base_rows,
    time_window, validate_routes_buffered, BigM, Route, RoutingVariables, ValidationReport, Violation,
};
use crate::Result;

/// Which load-propagation family the model carries.
#[derive(Clone, Debug, PartialEq)]
pub enum Mode {
    /// Mean net demand.
    Deterministic,
    /// Quantile-buffered rows for Gaussian net demand.
    ChanceConstrained(RiskSpec),
}

impl Mode {
    pub fn code_prefix(&self) -> &'static str {
        match self {
            Mode::Deterministic => "D",
            Mode::ChanceConstrained(_) => "U",
        }
    }

    /// Load buffer per customer.
    pub fn buffers(&self, inst: &ProblemInstance) -> Vec<f64> {
        match self {
            Mode::Deterministic => vec![0.0; inst.num_customers()],
            Mode::ChanceConstrained(risk) => risk.buffers(),
        }
    }
}

/// The assembled program with handles to every variable block.
#[derive(Clone, Debug)]
pub struct AssembledModel {
    pub model: MilpModel,
    pub routing: RoutingVariables,
    pub energy: EnergyVariables,
    pub grid: GridVariables,
    pub bigm: BigM,
    pub mode: Mode,
    pub buffers: Vec<f64>,
}

/// Builds routing, load propagation for `mode`, energy, McCormick and
/// feeder rows, in that order.
pub fn assemble(inst: &ProblemInstance, mode: Mode) -> Result<AssembledModel> {
    inst.validate()?;
    let zmax = match &mode {
        Mode::Deterministic => 0.0,
        Mode::ChanceConstrained(risk) => risk.zmax(),
    };
    if let Mode::ChanceConstrained(risk) = &mode {
        if risk.epsilon.len() != inst.num_customers() {
            return Err(crate::Error::Config(format!(
                "risk data for {} customers, instance has {}",
                risk.epsilon.len(),
                inst.num_customers()
            )));
        }
    }
    let bigm = compute_big_m(inst, zmax);
    let mut model = MilpModel::new();
    let routing = RoutingVariables::register(&mut model, inst)?;
    let energy = EnergyVariables::register(&mut model, inst)?;

    model.extend_constraints(routing_base_rows(inst, &routing, &bigm, &energy.charge_time_by_node())?)?;
    let load_rows = match &mode {
        Mode::Deterministic => load_propagation_rows(inst, &routing, &bigm, &vec![0.0; inst.num_customers()])?,
        Mode::ChanceConstrained(risk) => reformulate_chance_constraints(inst, &routing, &bigm, risk)?,
    };
    model.extend_constraints(load_rows)?;
    model.extend_constraints(build_energy_constraints(inst, &routing, &energy, &bigm))?;

    let power: Vec<[f64; 2]> = energy.sites.iter().map(|s| s.power).collect();
    let times: Vec<[f64; 2]> = energy.sites.iter().map(|s| [0.0, s.max_time]).collect();
    let mc = build_mccormick(&energy, &power, &times)?;
    model.extend_constraints(mc)?;

    let grid = build_lindistflow(&mut model, &inst.grid)?;
    couple_demand(&mut model, &inst.grid, &grid, &energy.grid_draws(inst))?;

    let buffers = mode.buffers(inst);
    Ok(AssembledModel { model, routing, energy, grid, bigm, mode, buffers })
}

/// Decoded solver output.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
    pub objective: f64,
    /// One entry per vehicle; undeployed vehicles have `[0, 0]`.
    pub routes: Vec<Route>,
    pub traces: Vec<BatteryTrace>,
    pub grid: GridState,
}

impl Solution {
    pub fn deployed(&self) -> usize {
        self.routes.iter().filter(|r| !r.is_empty()).count()
    }
}

impl AssembledModel {
    /// Decodes a full value vector.
    pub fn decode(&self, inst: &ProblemInstance, values: Vec<f64>) -> Result<Solution> {
        let mut routes = extract_routes(&values, &self.routing)?;
        for r in routes.iter_mut().filter(|r| !r.is_empty()) {
            for pos in 1..r.nodes.len() {
                if let Some(k) = self.energy.site_of_node[r.nodes[pos]] {
                    let tau = values[self.energy.tau[k][r.vehicle].index()];
                    // LP noise below this is not a charging stop.
                    r.charge_minutes[pos] = if tau.abs() < 1e-9 { 0.0 } else { tau };
                }
            }
        }
        let traces = routes
            .iter()
            .map(|r| battery_trace(r, &values, inst, &self.energy))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let grid = GridState::from_values(&self.grid, &values);
        let objective = self.model.objective_value(&values);
        Ok(Solution { values, objective, routes, traces, grid })
    }

    /// Value vector of the greedy tours, charged only at the depot. `None`
    /// when the greedy construction fails or its point violates a row.
    pub fn heuristic_values(&self, inst: &ProblemInstance) -> Option<Vec<f64>> {
        let routes = greedy_routes(inst, &self.buffers)?;
        let values = self.values_for_routes(inst, &routes)?;
        (self.model.max_violation(&values) <= 1e-7).then_some(values)
    }

    /// Builds a full assignment for depot-charged tours.
    pub fn values_for_routes(&self, inst: &ProblemInstance, routes: &[Route]) -> Option<Vec<f64>> {
        let mut x = vec![0.0; self.model.num_vars()];
        let rv = &self.routing;
        let ev = &self.energy;
        let nn = inst.num_nodes();
        let depot_site = ev.site_of_node[0]?;
        for (v, spec) in inst.vehicles.iter().enumerate() {
            for j in 1..nn {
                x[rv.t[j][v].index()] = time_window(inst, j).0;
            }
            for j in 0..nn {
                x[ev.e[j][v].index()] = spec.battery_max;
            }
        }
        for r in routes {
            let v = r.vehicle;
            let spec = &inst.vehicles[v];
            if r.is_empty() {
                continue;
            }
            let rep = replay(r, inst, &self.buffers);
            let mut level = spec.battery_max;
            for (pos, w) in r.nodes.windows(2).enumerate() {
                let (i, j) = (w[0], w[1]);
                x[rv.x[i][j][v].index()] = 1.0;
                level -= spec.consumption_rate * inst.travel_time[i][j];
                x[ev.e[j][v].index()] = level;
                x[rv.t[j][v].index()] = rep.arrivals[pos + 1];
                if j != 0 {
                    x[rv.l[j][v].index()] = rep.loads[pos + 1];
                    x[rv.pi[j - 1].index()] = (pos + 1) as f64;
                }
            }
            x[rv.l0[v].index()] = rep.loads[0];
            let tau = (spec.battery_max - level) / spec.charge_rate;
            if tau > 0.0 {
                x[ev.tau[depot_site][v].index()] = tau;
                x[ev.y[depot_site][v].index()] = 1.0;
            }
        }
        for (k, site) in ev.sites.iter().enumerate() {
            x[ev.p[k].index()] = site.power[0];
            for v in 0..inst.num_vehicles() {
                x[ev.w[k][v].index()] = site.power[0] * x[ev.tau[k][v].index()];
            }
        }
        let mut demand: Vec<f64> = inst.grid.nodes.iter().map(|n| n.base_p_kw).collect();
        for (bus, y, kw) in ev.grid_draws(inst) {
            demand[bus] += kw * x[y.index()];
        }
        let state = radial_sweep(&inst.grid, &demand).ok()?;
        state.write_into(&self.grid, &mut x);
        Some(x)
    }

    /// Planned loads before and after every customer visit.
    pub fn planned_visits(&self, inst: &ProblemInstance, sol: &Solution) -> Vec<PlannedVisit> {
        let mut out = Vec::new();
        for r in &sol.routes {
            let v = r.vehicle;
            for w in r.nodes.windows(2) {
                let (i, j) = (w[0], w[1]);
                if j == 0 {
                    continue;
                }
                out.push(PlannedVisit {
                    node: j,
                    vehicle: v,
                    load_before: sol.values[self.routing.l[i][v].index()],
                    load_after: sol.values[self.routing.l[j][v].index()],
                    capacity: inst.vehicles[v].capacity,
                });
            }
        }
        out
    }

    /// Replays routes, energy and the feeder, and checks every model row.
    pub fn validate(&self, inst: &ProblemInstance, sol: &Solution, tol: f64) -> ValidationReport {
        let mut report = validate_routes_buffered(&sol.routes, inst, tol, &self.buffers);
        for r in &sol.routes {
            report.extend(check_energy(r, inst, tol));
        }
        if let Ok(sweep) = radial_sweep(&inst.grid, &sol.grid.p_dem) {
            let residual = sweep.u.iter().zip(&sol.grid.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if residual > tol {
                report.violations.push(Violation { family: "GridVoltage", vehicle: None, node: None, slack: -residual });
            }
        }
        for (row, slack) in self.model.violated_rows(&sol.values, tol) {
            report.violations.push(Violation { family: row.group, vehicle: None, node: None, slack });
        }
        report
    }
}

/// Solver output together with the model it came from.
#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub assembled: AssembledModel,
    pub result: SolveResult,
    pub solution: Option<Solution>,
}

/// Assembles, seeds branch-and-bound with the greedy incumbent, solves and
/// decodes.
pub fn solve_instance(inst: &ProblemInstance, mode: Mode, opts: &BnbOptions) -> Result<SolveOutcome> {
    let assembled = assemble(inst, mode)?;
    let mut opts = opts.clone();
    if opts.initial_incumbent.is_none() {
        opts.initial_incumbent = assembled.heuristic_values(inst);
        if opts.initial_incumbent.is_none() {
            log::info!("no greedy incumbent; searching from scratch");
        }
    }
    let result = branch_and_bound(&assembled.model, &opts)?;
    let solution = if result.has_incumbent() {
        Some(assembled.decode(inst, result.values.clone())?)
    } else {
        None
    };
    Ok(SolveOutcome { assembled, result, solution })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::generate_synthetic;

    #[test]
    fn heuristic_point_is_feasible() {
        let inst = generate_synthetic(5, 6, 3, 120.0).unwrap();
        for mode in [Mode::Deterministic, Mode::ChanceConstrained(RiskSpec::uniform(&inst, 0.05).unwrap())] {
            let asm = assemble(&inst, mode).unwrap();
            let x = asm.heuristic_values(&inst).expect("greedy incumbent");
            assert!(asm.model.max_violation(&x) < 1e-7);
        }
    }

    #[test]
    fn mode_changes_only_load_rows() {
        let inst = generate_synthetic(5, 4, 2, 80.0).unwrap();
        let det = assemble(&inst, Mode::Deterministic).unwrap();
        let cc = assemble(&inst, Mode::ChanceConstrained(RiskSpec::uniform(&inst, 0.1).unwrap())).unwrap();
        let (a, b) = (det.model.constraints(), cc.model.constraints());
        assert_eq!(a.len(), b.len());
        for (ra, rb) in a.iter().zip(b) {
            if ra != rb {
                assert!(ra.group == "LoadPropagation" || ra.name.starts_with("load_"), "{}", ra.name);
            }
        }
    }
}
