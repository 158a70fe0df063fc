//! Objective breakdowns, emissions accounting, run summaries and the CSV and
//! SVG files written next to a solve.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::energy::BatteryTrace;
use crate::instance::ProblemInstance;
use crate::model::{AssembledModel, Mode, Solution};
use crate::vrp::Route;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ObjectiveBreakdown {
    pub travel_cost: f64,
    pub energy_cost: f64,
    pub total: f64,
}

impl ObjectiveBreakdown {
    fn new(travel_cost: f64, energy_cost: f64) -> Self {
        Self { travel_cost, energy_cost, total: travel_cost + energy_cost }
    }
}

/// Cost split read from the solver's arc and priced-energy variables.
pub fn objective_breakdown(asm: &AssembledModel, sol: &Solution, inst: &ProblemInstance) -> ObjectiveBreakdown {
    let rv = &asm.routing;
    let mut travel = 0.0;
    for (i, row) in rv.x.iter().enumerate() {
        for (j, per_v) in row.iter().enumerate() {
            for id in per_v {
                travel += inst.travel_time[i][j] * sol.values[id.index()];
            }
        }
    }
    let priced: f64 = asm.energy.w.iter().flatten().map(|id| sol.values[id.index()]).sum();
    ObjectiveBreakdown::new(inst.costs.time * travel, inst.costs.energy * priced)
}

/// Cost of explicit routes, pricing each charging minute at the site's
/// lowest admissible power.
pub fn route_cost(inst: &ProblemInstance, routes: &[Route]) -> ObjectiveBreakdown {
    let sites = inst.charge_sites();
    let mut travel = 0.0;
    let mut priced = 0.0;
    for r in routes {
        travel += r.travel_minutes(inst);
        for (pos, &node) in r.nodes.iter().enumerate().skip(1) {
            let minutes = r.charge_minutes.get(pos).copied().unwrap_or(0.0);
            if minutes != 0.0 {
                if let Some(site) = sites.iter().find(|s| s.node == node) {
                    priced += site.power[0] * minutes;
                }
            }
        }
    }
    ObjectiveBreakdown::new(inst.costs.time * travel, inst.costs.energy * priced)
}

/// Emission factors in kgCO2e.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmissionFactors {
    /// Per kWh of electricity.
    pub electricity: f64,
    /// Per unit of liquid fuel.
    pub liquid_fuel_per_unit: f64,
    /// Average per conventional vehicle.
    pub per_vehicle_avg: f64,
    /// kWh treated as equivalent to one fuel unit.
    pub kwh_per_fuel_unit: f64,
}

impl Default for EmissionFactors {
    fn default() -> Self {
        Self { electricity: 0.257, liquid_fuel_per_unit: 2.26, per_vehicle_avg: 19.23, kwh_per_fuel_unit: 33.4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmissionRow {
    pub fleet: String,
    pub kind: &'static str,
    pub vehicles: usize,
    pub passengers: f64,
    /// Empty for rows derived from a fuel policy.
    pub energy_kwh: Option<f64>,
    pub emissions_kg: f64,
}

/// Emission rows for an EV fleet against two liquid-fuel baselines: the
/// same energy burnt as fuel, and the per-vehicle average.
pub fn emissions_report(
    energy_kwh: f64,
    vehicles: usize,
    passengers: f64,
    factors: &EmissionFactors,
    fleet: &str,
) -> Vec<EmissionRow> {
    let ev = energy_kwh * factors.electricity;
    let fuel = energy_kwh / factors.kwh_per_fuel_unit * factors.liquid_fuel_per_unit;
    let row = |kind, energy_kwh, emissions_kg| EmissionRow {
        fleet: fleet.to_string(),
        kind,
        vehicles,
        passengers,
        energy_kwh,
        emissions_kg,
    };
    vec![
        row("ev", Some(energy_kwh), ev),
        row("liquid_fuel_equivalent", None, fuel),
        row("liquid_fuel_fleet_average", None, vehicles as f64 * factors.per_vehicle_avg),
    ]
}

/// Grid energy drawn by all vehicles.
pub fn energy_used(traces: &[BatteryTrace]) -> f64 {
    traces.iter().map(BatteryTrace::total_charged).sum()
}

/// Fractional saving of the EV row over a baseline row.
pub fn reduction(ev_kg: f64, baseline_kg: f64) -> Option<f64> {
    (baseline_kg > 0.0).then(|| 1.0 - ev_kg / baseline_kg)
}

pub fn write_emissions<W: Write>(rows: &[EmissionRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["fleet", "kind", "vehicles", "passengers", "energy_kwh", "emissions_kg", "reduction_vs_ev"])?;
    let ev = rows.iter().find(|r| r.kind == "ev").map(|r| r.emissions_kg);
    for r in rows {
        let red = match (ev, r.kind) {
            (Some(e), k) if k != "ev" => reduction(e, r.emissions_kg).map(|x| x.to_string()).unwrap_or_default(),
            _ => String::new(),
        };
        out.write_record([
            r.fleet.clone(),
            r.kind.to_string(),
            r.vehicles.to_string(),
            r.passengers.to_string(),
            r.energy_kwh.map(|e| e.to_string()).unwrap_or_default(),
            r.emissions_kg.to_string(),
            red,
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub code: String,
    pub locations: usize,
    pub expected_passengers: f64,
    pub routes: usize,
    pub objective: f64,
    pub status: String,
    /// For chance-constrained rows with a deterministic twin of the same
    /// size: whether at least as many routes were deployed.
    pub routes_ge_deterministic: Option<bool>,
}

pub fn run_code(mode: &Mode, locations: usize) -> String {
    format!("{}-L{}", mode.code_prefix(), locations)
}

pub fn summarize(inst: &ProblemInstance, mode: &Mode, status: &str, sol: Option<&Solution>) -> RunSummary {
    RunSummary {
        code: run_code(mode, inst.num_customers()),
        locations: inst.num_customers(),
        expected_passengers: inst.demand.nodes.iter().map(|d| d.mean_pickup).sum(),
        routes: sol.map_or(0, Solution::deployed),
        objective: sol.map_or(f64::NAN, |s| s.objective),
        status: status.to_string(),
        routes_ge_deterministic: None,
    }
}

/// Fills the comparison flag across a batch.
pub fn run_summary(mut rows: Vec<RunSummary>) -> Vec<RunSummary> {
    let det: Vec<(usize, usize)> =
        rows.iter().filter(|r| r.code.starts_with("D-")).map(|r| (r.locations, r.routes)).collect();
    for r in rows.iter_mut().filter(|r| r.code.starts_with("U-")) {
        r.routes_ge_deterministic = det.iter().find(|(l, _)| *l == r.locations).map(|&(_, d)| r.routes >= d);
    }
    rows
}

pub fn write_summary<W: Write>(rows: &[RunSummary], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "code",
        "locations",
        "expected_passengers",
        "routes",
        "objective",
        "status",
        "routes_ge_deterministic",
    ])?;
    for r in rows {
        out.write_record([
            r.code.clone(),
            r.locations.to_string(),
            r.expected_passengers.to_string(),
            r.routes.to_string(),
            r.objective.to_string(),
            r.status.clone(),
            r.routes_ge_deterministic.map(|b| b.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads what [`write_summary`] wrote.
pub fn read_summary<R: std::io::Read>(r: R) -> csv::Result<Vec<RunSummary>> {
    csv::Reader::from_reader(r).deserialize().collect()
}

/// One line per visited position of every deployed route.
pub fn write_routes<W: Write>(asm: &AssembledModel, sol: &Solution, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["vehicle", "position", "node", "arrival_min", "load", "energy_kwh", "charge_min"])?;
    for r in sol.routes.iter().filter(|r| !r.is_empty()) {
        let v = r.vehicle;
        for (pos, &node) in r.nodes.iter().enumerate() {
            let arrival = if pos == 0 { 0.0 } else { sol.values[asm.routing.t[node][v].index()] };
            let load = if pos + 1 == r.nodes.len() { 0.0 } else { sol.values[asm.routing.l[node][v].index()] };
            let energy = sol.values[asm.energy.e[node][v].index()];
            out.write_record([
                v.to_string(),
                pos.to_string(),
                node.to_string(),
                arrival.to_string(),
                load.to_string(),
                energy.to_string(),
                r.charge_minutes[pos].to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a routes file back into one route per vehicle; vehicles absent
/// from the file get `[0, 0]`.
pub fn read_routes<R: std::io::Read>(r: R, num_vehicles: usize) -> crate::Result<Vec<Route>> {
    let mut routes: Vec<Route> = (0..num_vehicles).map(|v| Route::new(v, vec![0, 0])).collect();
    let mut started = vec![false; num_vehicles];
    for rec in csv::Reader::from_reader(r).deserialize::<(usize, usize, usize, f64, f64, f64, f64)>() {
        let (v, pos, node, _, _, _, charge) = rec?;
        let bad = |msg: &str| crate::Error::Config(format!("routes file, vehicle {v}: {msg}"));
        if v >= num_vehicles {
            return Err(bad("no such vehicle"));
        }
        let route = &mut routes[v];
        if !started[v] {
            started[v] = true;
            route.nodes.clear();
            route.charge_minutes.clear();
        }
        if pos != route.nodes.len() {
            return Err(bad("positions out of order"));
        }
        route.nodes.push(node);
        route.charge_minutes.push(charge);
    }
    Ok(routes)
}

/// Full solver vector, one named value per line.
pub fn write_solution<W: Write>(asm: &AssembledModel, values: &[f64], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["variable", "value"])?;
    for (var, v) in asm.model.vars().iter().zip(values) {
        out.write_record([var.name.as_str(), &v.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a vector written by [`write_solution`], matched by name.
pub fn read_solution<R: std::io::Read>(asm: &AssembledModel, r: R) -> crate::Result<Vec<f64>> {
    let mut values = vec![0.0; asm.model.num_vars()];
    let mut seen = vec![false; values.len()];
    for rec in csv::Reader::from_reader(r).records() {
        let rec = rec?;
        let (name, value) = (rec.get(0).unwrap_or(""), rec.get(1).unwrap_or(""));
        let id = asm
            .model
            .var_by_name(name)
            .ok_or_else(|| crate::Error::Config(format!("unknown variable '{name}' in solution file")))?;
        values[id.index()] =
            value.trim().parse().map_err(|_| crate::Error::Config(format!("bad value '{value}' for {name}")))?;
        seen[id.index()] = true;
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(crate::Error::Config(format!("solution file lacks variable '{}'", asm.model.vars()[k].name)));
    }
    Ok(values)
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 360.0;
const PAD: f64 = 48.0;

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, SVG_W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
        b = SVG_H - PAD,
        r = SVG_W - PAD
    );
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Bar chart, e.g. objective per run.
pub fn svg_bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let mut s = svg_open(title);
    let top = bars.iter().map(|b| b.1).filter(|v| v.is_finite()).fold(0.0, f64::max);
    let scale = if top > 0.0 { (SVG_H - 2.0 * PAD) / top } else { 0.0 };
    let slot = (SVG_W - 2.0 * PAD) / bars.len().max(1) as f64;
    for (k, (label, value)) in bars.iter().enumerate() {
        let h = if value.is_finite() { value.max(0.0) * scale } else { 0.0 };
        let x = PAD + slot * k as f64 + slot * 0.15;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="steelblue"/>"#,
            SVG_H - PAD - h,
            slot * 0.7
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x + slot * 0.35,
            SVG_H - PAD + 16.0,
            escape(label)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{value:.2}</text>"#,
            x + slot * 0.35,
            SVG_H - PAD - h - 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Battery level along each vehicle's stops, one polyline per vehicle.
pub fn svg_energy_chart(title: &str, traces: &[BatteryTrace], battery_max: f64) -> String {
    const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];
    let mut s = svg_open(title);
    let steps = traces.iter().map(|t| t.entries.len()).max().unwrap_or(1).max(2) - 1;
    let dx = (SVG_W - 2.0 * PAD) / steps as f64;
    let dy = if battery_max > 0.0 { (SVG_H - 2.0 * PAD) / battery_max } else { 0.0 };
    for (k, t) in traces.iter().filter(|t| t.entries.len() > 1).enumerate() {
        let pts: Vec<String> = t
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| format!("{:.2},{:.2}", PAD + dx * i as f64, SVG_H - PAD - e.energy_kwh * dy))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"><title>vehicle {}</title></polyline>"#,
            pts.join(" "),
            COLORS[k % COLORS.len()],
            t.vehicle
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_batch_has_header_only() {
        let mut buf = Vec::new();
        write_summary(&run_summary(Vec::new()), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }

    #[test]
    fn codes() {
        assert_eq!(run_code(&Mode::Deterministic, 5), "D-L5");
        let risk = crate::stochastic::RiskSpec::new(vec![0.1], vec![1.0]).unwrap();
        assert_eq!(run_code(&Mode::ChanceConstrained(risk), 15), "U-L15");
    }

    #[test]
    fn zero_energy_zero_ev_emissions() {
        let rows = emissions_report(0.0, 3, 10.0, &EmissionFactors::default(), "taxi");
        assert_eq!(rows[0].emissions_kg, 0.0);
        assert_eq!(rows[1].emissions_kg, 0.0);
    }

    #[test]
    fn svg_is_closed() {
        let s = svg_bar_chart("objective", &[("D-L5".into(), 1.2), ("U-L5".into(), 1.5)]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
    }
}
