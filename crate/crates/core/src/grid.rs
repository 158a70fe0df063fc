//! Radial distribution feeder and its LinDistFlow relaxation.
//!
//! Line flows are positive in the parent-to-child direction. Squared
//! voltage magnitudes `u` are in per-unit squared; powers are in kW/kvar and
//! are divided by `base_kva` in the voltage-drop rows.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::milp::{LinearConstraint, MilpError, MilpModel, Sense, VarId, VarKind};
use crate::vrp::Violation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid has no nodes")]
    Empty,
    #[error("slack bus {0} out of range")]
    SlackOutOfRange(usize),
    #[error("radial feeder with {nodes} nodes needs {} lines, found {lines}", nodes - 1)]
    LineCount { nodes: usize, lines: usize },
    #[error("line {line} references unknown node {node}")]
    UnknownNode { line: usize, node: usize },
    #[error("feeder is not a tree rooted at the slack bus: {0}")]
    NotRadial(String),
    #[error("invalid grid parameter: {0}")]
    BadParameter(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridNode {
    #[serde(default)]
    pub label: String,
    /// Uncontrollable active demand, kW.
    #[serde(default)]
    pub base_p_kw: f64,
    /// Reactive demand, kvar.
    #[serde(default)]
    pub base_q_kvar: f64,
    #[serde(default)]
    pub gen_p_min: f64,
    #[serde(default)]
    pub gen_p_max: f64,
    #[serde(default)]
    pub gen_q_min: f64,
    #[serde(default)]
    pub gen_q_max: f64,
    /// Voltage magnitude limits, per unit.
    #[serde(default = "default_v_min")]
    pub v_min: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
}

fn default_v_min() -> f64 {
    0.9
}
fn default_v_max() -> f64 {
    1.1
}
fn default_base() -> f64 {
    1.0
}

impl GridNode {
    pub fn load(label: impl Into<String>, p_kw: f64, q_kvar: f64) -> Self {
        GridNode {
            label: label.into(),
            base_p_kw: p_kw,
            base_q_kvar: q_kvar,
            gen_p_min: 0.0,
            gen_p_max: 0.0,
            gen_q_min: 0.0,
            gen_q_max: 0.0,
            v_min: default_v_min(),
            v_max: default_v_max(),
        }
    }

    pub fn substation(label: impl Into<String>, capacity_kw: f64) -> Self {
        GridNode {
            gen_p_min: -capacity_kw,
            gen_p_max: capacity_kw,
            gen_q_min: -capacity_kw,
            gen_q_max: capacity_kw,
            ..GridNode::load(label, 0.0, 0.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridLine {
    /// Parent bus (closer to the slack).
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    #[serde(default = "unlimited")]
    pub p_max: f64,
    #[serde(default = "unlimited")]
    pub q_max: f64,
}

fn unlimited() -> f64 {
    f64::INFINITY
}

impl GridLine {
    /// A line without flow limits.
    pub fn new(from: usize, to: usize, r: f64, x: f64) -> Self {
        GridLine { from, to, r, x, p_max: f64::INFINITY, q_max: f64::INFINITY }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridNetwork {
    #[serde(default)]
    pub slack: usize,
    #[serde(default = "default_base")]
    pub base_kva: f64,
    /// Emit `|p| <= p_max`, `|q| <= q_max` rows for lines with finite limits.
    #[serde(default)]
    pub flow_limits: bool,
    pub nodes: Vec<GridNode>,
    #[serde(default)]
    pub lines: Vec<GridLine>,
}

/// Parent/child structure of a validated feeder.
#[derive(Clone, Debug)]
pub struct Topology {
    /// Incoming line of each bus; `None` for the slack.
    pub parent_line: Vec<Option<usize>>,
    /// Outgoing lines of each bus.
    pub child_lines: Vec<Vec<usize>>,
    /// Buses in breadth-first order from the slack.
    pub order: Vec<usize>,
}

impl GridNetwork {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Checks parameters and radiality; lines must point away from the slack.
    pub fn topology(&self) -> Result<Topology, GridError> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(GridError::Empty);
        }
        if self.slack >= n {
            return Err(GridError::SlackOutOfRange(self.slack));
        }
        if !(self.base_kva > 0.0 && self.base_kva.is_finite()) {
            return Err(GridError::BadParameter(format!("base_kva = {}", self.base_kva)));
        }
        if self.lines.len() != n - 1 {
            return Err(GridError::LineCount { nodes: n, lines: self.lines.len() });
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let ok = node.v_min > 0.0
                && node.v_min <= node.v_max
                && node.gen_p_min <= node.gen_p_max
                && node.gen_q_min <= node.gen_q_max
                && node.base_p_kw.is_finite()
                && node.base_q_kvar.is_finite();
            if !ok {
                return Err(GridError::BadParameter(format!("node {i}")));
            }
        }
        let mut parent_line = vec![None; n];
        let mut child_lines = vec![Vec::new(); n];
        for (l, line) in self.lines.iter().enumerate() {
            for node in [line.from, line.to] {
                if node >= n {
                    return Err(GridError::UnknownNode { line: l, node });
                }
            }
            if !(line.r >= 0.0 && line.x >= 0.0 && line.p_max >= 0.0 && line.q_max >= 0.0) {
                return Err(GridError::BadParameter(format!("line {l}")));
            }
            if line.to == self.slack {
                return Err(GridError::NotRadial(format!("line {l} feeds the slack bus")));
            }
            if parent_line[line.to].replace(l).is_some() {
                return Err(GridError::NotRadial(format!("bus {} has two parents", line.to)));
            }
            child_lines[line.from].push(l);
        }
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([self.slack]);
        seen[self.slack] = true;
        while let Some(b) = queue.pop_front() {
            order.push(b);
            for &l in &child_lines[b] {
                let c = self.lines[l].to;
                if !seen[c] {
                    seen[c] = true;
                    queue.push_back(c);
                }
            }
        }
        if order.len() != n {
            let missing = (0..n).find(|&b| !seen[b]).unwrap_or_default();
            return Err(GridError::NotRadial(format!("bus {missing} unreachable from slack")));
        }
        Ok(Topology { parent_line, child_lines, order })
    }
}

/// Decision variables of the feeder model.
#[derive(Clone, Debug)]
pub struct GridVariables {
    /// Squared voltage magnitude per bus.
    pub u: Vec<VarId>,
    pub p_gen: Vec<VarId>,
    pub q_gen: Vec<VarId>,
    /// Total active demand per bus, including charging.
    pub p_dem: Vec<VarId>,
    pub p_line: Vec<VarId>,
    pub q_line: Vec<VarId>,
}

/// Adds LinDistFlow variables and rows. Demand variables are left free of
/// any coupling; call [`couple_demand`] to tie them to base load and
/// charging.
pub fn build_lindistflow(model: &mut MilpModel, grid: &GridNetwork) -> crate::Result<GridVariables> {
    let topo = grid.topology()?;
    let n = grid.nodes.len();
    let c = VarKind::Continuous;
    let inf = f64::INFINITY;
    let mut vars = GridVariables {
        u: Vec::with_capacity(n),
        p_gen: Vec::with_capacity(n),
        q_gen: Vec::with_capacity(n),
        p_dem: Vec::with_capacity(n),
        p_line: Vec::with_capacity(n - 1),
        q_line: Vec::with_capacity(n - 1),
    };
    for (b, node) in grid.nodes.iter().enumerate() {
        let (ulo, uhi) = (node.v_min * node.v_min, node.v_max * node.v_max);
        vars.u.push(model.add_var(format!("u_{b}"), ulo, uhi, c, 0.0)?);
        vars.p_gen.push(model.add_var(format!("pg_{b}"), node.gen_p_min, node.gen_p_max, c, 0.0)?);
        vars.q_gen.push(model.add_var(format!("qg_{b}"), node.gen_q_min, node.gen_q_max, c, 0.0)?);
        vars.p_dem.push(model.add_var(format!("pd_{b}"), -inf, inf, c, 0.0)?);
    }
    for l in 0..grid.lines.len() {
        vars.p_line.push(model.add_var(format!("pl_{l}"), -inf, inf, c, 0.0)?);
        vars.q_line.push(model.add_var(format!("ql_{l}"), -inf, inf, c, 0.0)?);
    }

    let mut rows = Vec::new();
    for b in 0..n {
        let node = &grid.nodes[b];
        // Active balance: inflow + generation = demand + outflow.
        let mut p_terms = vec![(vars.p_gen[b], 1.0), (vars.p_dem[b], -1.0)];
        let mut q_terms = vec![(vars.q_gen[b], 1.0)];
        if let Some(l) = topo.parent_line[b] {
            p_terms.push((vars.p_line[l], 1.0));
            q_terms.push((vars.q_line[l], 1.0));
        }
        for &l in &topo.child_lines[b] {
            p_terms.push((vars.p_line[l], -1.0));
            q_terms.push((vars.q_line[l], -1.0));
        }
        let group = if b == grid.slack { "GridSlack" } else { "GridBalance" };
        rows.push(LinearConstraint::new(group, format!("pbal_{b}"), p_terms, Sense::Eq, 0.0));
        rows.push(LinearConstraint::new(group, format!("qbal_{b}"), q_terms, Sense::Eq, node.base_q_kvar));

        let (ulo, uhi) = (node.v_min * node.v_min, node.v_max * node.v_max);
        rows.push(LinearConstraint::new("GridVoltageBounds", format!("umin_{b}"), vec![(vars.u[b], 1.0)], Sense::Ge, ulo));
        rows.push(LinearConstraint::new("GridVoltageBounds", format!("umax_{b}"), vec![(vars.u[b], 1.0)], Sense::Le, uhi));
        for (v, lo, hi, tag) in [
            (vars.p_gen[b], node.gen_p_min, node.gen_p_max, "pg"),
            (vars.q_gen[b], node.gen_q_min, node.gen_q_max, "qg"),
        ] {
            if lo.is_finite() {
                rows.push(LinearConstraint::new("GridGeneration", format!("{tag}min_{b}"), vec![(v, 1.0)], Sense::Ge, lo));
            }
            if hi.is_finite() {
                rows.push(LinearConstraint::new("GridGeneration", format!("{tag}max_{b}"), vec![(v, 1.0)], Sense::Le, hi));
            }
        }
    }
    rows.push(LinearConstraint::new("GridSlack", "uslack", vec![(vars.u[grid.slack], 1.0)], Sense::Eq, 1.0));

    for (l, line) in grid.lines.iter().enumerate() {
        let k = 2.0 / grid.base_kva;
        rows.push(LinearConstraint::new(
            "GridVoltage",
            format!("vdrop_{l}"),
            vec![
                (vars.u[line.to], 1.0),
                (vars.u[line.from], -1.0),
                (vars.p_line[l], k * line.r),
                (vars.q_line[l], k * line.x),
            ],
            Sense::Eq,
            0.0,
        ));
        if grid.flow_limits {
            for (v, lim, tag) in [(vars.p_line[l], line.p_max, "p"), (vars.q_line[l], line.q_max, "q")] {
                if lim.is_finite() {
                    rows.push(LinearConstraint::new("GridFlowLimit", format!("{tag}max_{l}"), vec![(v, 1.0)], Sense::Le, lim));
                    rows.push(LinearConstraint::new("GridFlowLimit", format!("{tag}min_{l}"), vec![(v, 1.0)], Sense::Ge, -lim));
                }
            }
        }
    }
    model.extend_constraints(rows)?;
    Ok(vars)
}

/// Ties every bus demand to its base load plus controllable charging terms
/// `(bus, variable, kW per unit)`.
pub fn couple_demand(
    model: &mut MilpModel,
    grid: &GridNetwork,
    vars: &GridVariables,
    charging: &[(usize, VarId, f64)],
) -> Result<(), MilpError> {
    let mut rows = Vec::with_capacity(grid.nodes.len());
    for (b, node) in grid.nodes.iter().enumerate() {
        let mut terms = vec![(vars.p_dem[b], 1.0)];
        terms.extend(charging.iter().filter(|(bus, _, _)| *bus == b).map(|&(_, v, kw)| (v, -kw)));
        rows.push(LinearConstraint::new("GridCoupling", format!("pdem_{b}"), terms, Sense::Eq, node.base_p_kw));
    }
    model.extend_constraints(rows)
}

/// Operating point of the feeder.
#[derive(Clone, Debug, PartialEq)]
pub struct GridState {
    pub u: Vec<f64>,
    pub p_gen: Vec<f64>,
    pub q_gen: Vec<f64>,
    pub p_dem: Vec<f64>,
    pub p_line: Vec<f64>,
    pub q_line: Vec<f64>,
}

impl GridState {
    pub fn from_values(vars: &GridVariables, values: &[f64]) -> Self {
        let get = |ids: &[VarId]| ids.iter().map(|v| values[v.0]).collect::<Vec<_>>();
        GridState {
            u: get(&vars.u),
            p_gen: get(&vars.p_gen),
            q_gen: get(&vars.q_gen),
            p_dem: get(&vars.p_dem),
            p_line: get(&vars.p_line),
            q_line: get(&vars.q_line),
        }
    }

    pub fn write_into(&self, vars: &GridVariables, values: &mut [f64]) {
        let pairs = [
            (&vars.u, &self.u),
            (&vars.p_gen, &self.p_gen),
            (&vars.q_gen, &self.q_gen),
            (&vars.p_dem, &self.p_dem),
            (&vars.p_line, &self.p_line),
            (&vars.q_line, &self.q_line),
        ];
        for (ids, vals) in pairs {
            for (id, &x) in ids.iter().zip(vals) {
                values[id.0] = x;
            }
        }
    }

    /// Voltage magnitude in per unit.
    pub fn voltage(&self, bus: usize) -> f64 {
        self.u[bus].max(0.0).sqrt()
    }
}

/// Backward/forward sweep of the linearised equations for given bus
/// demands (kW). Non-slack generators sit at the point of their range
/// closest to zero; the slack absorbs the balance.
pub fn radial_sweep(grid: &GridNetwork, demand_kw: &[f64]) -> Result<GridState, GridError> {
    let topo = grid.topology()?;
    let n = grid.nodes.len();
    if demand_kw.len() != n {
        return Err(GridError::BadParameter(format!("{} demands for {n} buses", demand_kw.len())));
    }
    let p_gen0: Vec<f64> = grid
        .nodes
        .iter()
        .enumerate()
        .map(|(b, nd)| if b == grid.slack { 0.0 } else { 0.0f64.clamp(nd.gen_p_min, nd.gen_p_max) })
        .collect();
    let q_gen0: Vec<f64> = grid
        .nodes
        .iter()
        .enumerate()
        .map(|(b, nd)| if b == grid.slack { 0.0 } else { 0.0f64.clamp(nd.gen_q_min, nd.gen_q_max) })
        .collect();
    let mut p_line = vec![0.0; n - 1];
    let mut q_line = vec![0.0; n - 1];
    for &b in topo.order.iter().rev() {
        let Some(l) = topo.parent_line[b] else { continue };
        let (mut p, mut q) = (demand_kw[b] - p_gen0[b], grid.nodes[b].base_q_kvar - q_gen0[b]);
        for &c in &topo.child_lines[b] {
            p += p_line[c];
            q += q_line[c];
        }
        p_line[l] = p;
        q_line[l] = q;
    }
    let s = grid.slack;
    let out_p: f64 = topo.child_lines[s].iter().map(|&l| p_line[l]).sum();
    let out_q: f64 = topo.child_lines[s].iter().map(|&l| q_line[l]).sum();
    let mut p_gen = p_gen0;
    let mut q_gen = q_gen0;
    p_gen[s] = demand_kw[s] + out_p;
    q_gen[s] = grid.nodes[s].base_q_kvar + out_q;

    let mut u = vec![0.0; n];
    u[s] = 1.0;
    for &b in &topo.order {
        if let Some(l) = topo.parent_line[b] {
            let line = &grid.lines[l];
            u[b] = u[line.from] - 2.0 * (line.r * p_line[l] + line.x * q_line[l]) / grid.base_kva;
        }
    }
    Ok(GridState { u, p_gen, q_gen, p_dem: demand_kw.to_vec(), p_line, q_line })
}

/// Bus demands: base loads plus `(bus, kW)` draws.
pub fn demand_with_draws(grid: &GridNetwork, draws: &[(usize, f64)]) -> Vec<f64> {
    let mut demand: Vec<f64> = grid.nodes.iter().map(|n| n.base_p_kw).collect();
    for &(bus, kw) in draws {
        demand[bus] += kw;
    }
    demand
}

/// Voltage, generation and (if enabled) flow limits missed by a state.
pub fn limit_violations(grid: &GridNetwork, state: &GridState, tol: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut miss = |family, node: Option<usize>, value: f64, lo: f64, hi: f64| {
        let slack = (value - lo).min(hi - value);
        if slack < -tol {
            out.push(Violation { family, vehicle: None, node, slack });
        }
    };
    for (b, n) in grid.nodes.iter().enumerate() {
        miss("GridVoltageBounds", Some(b), state.u[b], n.v_min * n.v_min, n.v_max * n.v_max);
        miss("GridGeneration", Some(b), state.p_gen[b], n.gen_p_min, n.gen_p_max);
        miss("GridGeneration", Some(b), state.q_gen[b], n.gen_q_min, n.gen_q_max);
    }
    if grid.flow_limits {
        for (l, line) in grid.lines.iter().enumerate() {
            miss("GridFlowLimit", Some(l), state.p_line[l], -line.p_max, line.p_max);
            miss("GridFlowLimit", Some(l), state.q_line[l], -line.q_max, line.q_max);
        }
    }
    out
}

/// Writes `bus,label,voltage_pu,demand_kw,gen_kw,inflow_kw`.
pub fn write_snapshot<W: Write>(grid: &GridNetwork, state: &GridState, w: W) -> csv::Result<()> {
    let topo = grid.topology().ok();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bus", "label", "voltage_pu", "demand_kw", "gen_kw", "inflow_kw"])?;
    for (b, node) in grid.nodes.iter().enumerate() {
        let inflow = topo
            .as_ref()
            .and_then(|t| t.parent_line[b])
            .map_or(0.0, |l| state.p_line[l]);
        out.write_record([
            b.to_string(),
            node.label.clone(),
            format!("{:.6}", state.voltage(b)),
            format!("{:.4}", state.p_dem[b]),
            format!("{:.4}", state.p_gen[b]),
            format!("{inflow:.4}"),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feeder() -> GridNetwork {
        GridNetwork {
            slack: 0,
            base_kva: 1.0,
            flow_limits: false,
            nodes: vec![
                GridNode::substation("sub", 100.0),
                GridNode::load("a", 1.0, 0.0),
                GridNode::load("b", 1.0, 0.0),
            ],
            lines: vec![
                GridLine { from: 0, to: 1, r: 0.003, x: 0.0, p_max: f64::INFINITY, q_max: f64::INFINITY },
                GridLine { from: 1, to: 2, r: 0.003, x: 0.0, p_max: f64::INFINITY, q_max: f64::INFINITY },
            ],
        }
    }

    #[test]
    fn sweep_flows_and_voltage() {
        let g = feeder();
        let s = radial_sweep(&g, &[0.0, 1.0, 1.0]).unwrap();
        assert_eq!(s.p_line, vec![2.0, 1.0]);
        assert!((s.u[1] - 0.988).abs() < 1e-12);
        assert!((s.u[2] - 0.982).abs() < 1e-12);
        assert_eq!(s.p_gen[0], 2.0);
    }

    #[test]
    fn lindistflow_accepts_sweep_point() {
        let g = feeder();
        let mut m = MilpModel::new();
        let vars = build_lindistflow(&mut m, &g).unwrap();
        couple_demand(&mut m, &g, &vars, &[]).unwrap();
        let s = radial_sweep(&g, &[0.0, 1.0, 1.0]).unwrap();
        let mut x = vec![0.0; m.num_vars()];
        s.write_into(&vars, &mut x);
        assert!(m.max_violation(&x) < 1e-12);
    }

    #[test]
    fn cycle_rejected() {
        let mut g = feeder();
        g.lines[1] = GridLine { from: 2, to: 1, ..g.lines[1].clone() };
        assert!(matches!(g.topology(), Err(GridError::NotRadial(_))));
    }

    #[test]
    fn wrong_line_count() {
        let mut g = feeder();
        g.lines.pop();
        assert_eq!(g.topology().unwrap_err(), GridError::LineCount { nodes: 3, lines: 1 });
    }
}
