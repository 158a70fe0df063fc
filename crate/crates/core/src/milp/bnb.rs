use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::lp::{LpOutcome, Relaxation};
use super::{MilpError, MilpModel, VarId};

#[derive(Clone, Debug)]
pub struct BnbOptions {
    /// Relative gap `(incumbent - bound) / max(1, |incumbent|)` at which the
    /// search stops with [`SolveStatus::Optimal`].
    pub gap_tol: f64,
    pub time_limit: Duration,
    pub node_limit: Option<usize>,
    /// Open nodes evaluated concurrently once best-bound search starts. The
    /// outcome does not depend on this value.
    pub threads: usize,
    pub integrality_tol: f64,
    pub feasibility_tol: f64,
    /// Full assignment used as the starting upper bound when it is feasible.
    pub initial_incumbent: Option<Vec<f64>>,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            gap_tol: 1e-6,
            time_limit: Duration::from_secs(300),
            node_limit: None,
            threads: 1,
            integrality_tol: 1e-6,
            feasibility_tol: 1e-6,
            initial_incumbent: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Stopped by the node limit before the gap closed.
    GapLimit,
    TimeLimit,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::GapLimit => "gap_limit",
            SolveStatus::TimeLimit => "time_limit",
        }
    }
}

/// One progress record: `node,bound,incumbent,gap,time`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLine {
    pub node: usize,
    pub bound: f64,
    pub incumbent: f64,
    pub gap: f64,
    pub time: f64,
}

impl std::fmt::Display for LogLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{},{:.3}", self.node, self.bound, self.incumbent, self.gap, self.time)
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    pub bound: f64,
    pub gap: f64,
    pub node_count: usize,
    pub wall_time: Duration,
    pub log: Vec<LogLine>,
}

impl SolveResult {
    pub fn has_incumbent(&self) -> bool {
        !self.values.is_empty()
    }
}

/// A bound change on the path from the root, shared between siblings.
struct Step {
    var: VarId,
    lower: f64,
    upper: f64,
    parent: Option<Arc<Step>>,
}

struct Node {
    bound: f64,
    seq: u64,
    path: Option<Arc<Step>>,
    warm: Option<Arc<microlp::Solution>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: smallest bound first, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.seq.cmp(&self.seq))
    }
}

fn current_bounds(model: &MilpModel, path: &Option<Arc<Step>>, var: VarId) -> (f64, f64) {
    let mut cur = path.as_ref();
    while let Some(step) = cur {
        if step.var == var {
            return (step.lower, step.upper);
        }
        cur = step.parent.as_ref();
    }
    let v = model.var(var);
    (v.lower, v.upper)
}

fn gap_of(incumbent: f64, bound: f64) -> f64 {
    if !incumbent.is_finite() {
        return f64::INFINITY;
    }
    ((incumbent - bound) / incumbent.abs().max(1.0)).max(0.0)
}

struct Search<'a> {
    model: &'a MilpModel,
    relax: Relaxation,
    opts: &'a BnbOptions,
    incumbent: Option<(f64, Vec<f64>)>,
    heap: BinaryHeap<Node>,
    seq: u64,
    nodes: usize,
    bound: f64,
    log: Vec<LogLine>,
    start: Instant,
    warm_cap: usize,
    // Smallest bound among popped but not yet expanded nodes.
    pending: f64,
}

impl<'a> Search<'a> {
    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            Some((obj, _)) => obj - self.opts.gap_tol * obj.abs().max(1.0),
            None => f64::INFINITY,
        }
    }

    fn incumbent_obj(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |(o, _)| *o)
    }

    fn record(&mut self) {
        let inc = self.incumbent_obj();
        self.log.push(LogLine {
            node: self.nodes,
            bound: self.bound,
            incumbent: inc,
            gap: gap_of(inc, self.bound),
            time: self.start.elapsed().as_secs_f64(),
        });
    }

    fn raise_bound(&mut self, local: f64) {
        let open = self.heap.peek().map_or(f64::INFINITY, |n| n.bound);
        let candidate = local.min(open).min(self.pending).min(self.incumbent_obj());
        if candidate > self.bound {
            self.bound = candidate;
        }
    }

    fn try_incumbent(&mut self, values: Vec<f64>) -> bool {
        let obj = self.model.objective_value(&values);
        if obj >= self.incumbent_obj() {
            return false;
        }
        if self.model.max_violation(&values) > self.opts.feasibility_tol {
            return false;
        }
        self.incumbent = Some((obj, values));
        self.record();
        true
    }

    /// Rounds the integer columns of an integral LP point; falls back to an
    /// LP re-solve with those columns fixed when rounding breaks a row.
    fn polish(&self, sol: &microlp::Solution, values: &[f64]) -> Result<Option<Vec<f64>>, MilpError> {
        let mut rounded = values.to_vec();
        for (v, x) in self.model.vars().iter().zip(rounded.iter_mut()) {
            if v.kind.is_integer() {
                *x = x.round();
            }
        }
        if self.model.max_violation(&rounded) <= self.opts.feasibility_tol {
            return Ok(Some(rounded));
        }
        let mut cur = sol.clone();
        for (i, v) in self.model.vars().iter().enumerate() {
            if v.kind.is_integer() {
                match self.relax.restrict(cur, VarId(i), rounded[i], rounded[i], (v.lower, v.upper))? {
                    LpOutcome::Solved(s) => cur = s,
                    _ => return Ok(None),
                }
            }
        }
        let mut vals = self.relax.values(&cur);
        for (v, x) in self.model.vars().iter().zip(vals.iter_mut()) {
            if v.kind.is_integer() {
                *x = x.round();
            }
        }
        Ok(Some(vals))
    }

    fn branching_var(&self, values: &[f64]) -> Option<VarId> {
        let mut best: Option<(VarId, f64)> = None;
        for (i, (v, &x)) in self.model.vars().iter().zip(values).enumerate() {
            if !v.kind.is_integer() {
                continue;
            }
            let frac = (x - x.floor()).min(x.ceil() - x);
            if frac > self.opts.integrality_tol && best.is_none_or(|(_, f)| frac > f) {
                best = Some((VarId(i), frac));
            }
        }
        best.map(|(v, _)| v)
    }

    fn solve_node(&self, node: &Node) -> Result<LpOutcome, MilpError> {
        let step = node.path.as_ref().expect("non-root node has a path");
        let orig = {
            let v = self.model.var(step.var);
            (v.lower, v.upper)
        };
        if let Some(warm) = &node.warm {
            let parent = (**warm).clone();
            return self.relax.restrict(parent, step.var, step.lower, step.upper, orig);
        }
        let mut chain = Vec::new();
        let mut cur = node.path.as_ref();
        while let Some(s) = cur {
            chain.push(s.clone());
            cur = s.parent.as_ref();
        }
        let mut sol = match self.relax.solve()? {
            LpOutcome::Solved(s) => s,
            other => return Ok(other),
        };
        for s in chain.iter().rev() {
            let v = self.model.var(s.var);
            match self.relax.restrict(sol, s.var, s.lower, s.upper, (v.lower, v.upper))? {
                LpOutcome::Solved(next) => sol = next,
                other => return Ok(other),
            }
        }
        Ok(LpOutcome::Solved(sol))
    }

    fn push(&mut self, bound: f64, path: Arc<Step>, warm: Option<Arc<microlp::Solution>>) {
        let warm = if self.heap.len() < self.warm_cap { warm } else { None };
        self.seq += 1;
        self.heap.push(Node { bound, seq: self.seq, path: Some(path), warm });
    }

    /// Handles a solved node. Returns the preferred child with its LP
    /// solution when the search should keep plunging.
    fn expand(
        &mut self,
        node: Node,
        sol: microlp::Solution,
    ) -> Result<Option<(Node, microlp::Solution)>, MilpError> {
        let values = self.relax.values(&sol);
        let obj = self.model.objective_value(&values);
        self.raise_bound(node.bound.max(obj));
        if obj >= self.cutoff() {
            return Ok(None);
        }
        let Some(var) = self.branching_var(&values) else {
            if let Some(vals) = self.polish(&sol, &values)? {
                self.try_incumbent(vals);
            }
            return Ok(None);
        };
        let x = values[var.0];
        let (lo, hi) = current_bounds(self.model, &node.path, var);
        let down = Arc::new(Step { var, lower: lo, upper: x.floor(), parent: node.path.clone() });
        let up = Arc::new(Step { var, lower: x.ceil(), upper: hi, parent: node.path.clone() });
        let prefer_up = x - x.floor() >= 0.5;
        let (first, second) = if prefer_up { (up, down) } else { (down, up) };
        if self.incumbent.is_none() {
            let parent = Arc::new(sol.clone());
            self.push(obj, second, Some(parent));
            let child = Node { bound: obj, seq: 0, path: Some(first.clone()), warm: None };
            let v = self.model.var(var);
            return Ok(match self.relax.restrict(sol, var, first.lower, first.upper, (v.lower, v.upper))? {
                LpOutcome::Solved(s) => Some((child, s)),
                _ => None,
            });
        }
        let parent = Arc::new(sol);
        self.push(obj, first, Some(parent.clone()));
        self.push(obj, second, Some(parent));
        Ok(None)
    }

    fn limit_hit(&self) -> Option<SolveStatus> {
        if self.start.elapsed() >= self.opts.time_limit {
            return Some(SolveStatus::TimeLimit);
        }
        if self.opts.node_limit.is_some_and(|n| self.nodes >= n) {
            return Some(SolveStatus::GapLimit);
        }
        None
    }
}

/// Best-bound branch-and-bound over the LP relaxation of `model`.
///
/// Branches on the most fractional integer variable (lowest index on ties)
/// and dives depth-first until the first incumbent exists.
pub fn branch_and_bound(model: &MilpModel, opts: &BnbOptions) -> Result<SolveResult, MilpError> {
    let start = Instant::now();
    let rows = model.num_constraints().max(1);
    let mut s = Search {
        model,
        relax: Relaxation::new(model),
        opts,
        incumbent: None,
        heap: BinaryHeap::new(),
        seq: 0,
        nodes: 0,
        bound: f64::NEG_INFINITY,
        log: Vec::new(),
        start,
        warm_cap: (2_000_000 / rows).clamp(8, 20_000),
        pending: f64::INFINITY,
    };
    if let Some(init) = &opts.initial_incumbent {
        if init.len() != model.num_vars() {
            return Err(MilpError::DimensionMismatch { expected: model.num_vars(), got: init.len() });
        }
        if !s.try_incumbent(init.clone()) {
            log::warn!("initial incumbent rejected: violation {:.3e}", model.max_violation(init));
        }
    }

    let root = match s.relax.solve()? {
        LpOutcome::Solved(sol) => sol,
        LpOutcome::Infeasible => return Ok(s.finish(SolveStatus::Infeasible)),
        LpOutcome::Unbounded => return Ok(s.finish(SolveStatus::Unbounded)),
    };
    s.nodes = 1;
    let root_node = Node { bound: f64::NEG_INFINITY, seq: 0, path: None, warm: None };
    let mut plunge = s.expand(root_node, root)?;
    s.record();

    let threads = opts.threads.max(1);
    loop {
        if let Some(status) = s.limit_hit() {
            return Ok(s.finish(status));
        }
        if let Some((node, sol)) = plunge.take() {
            s.nodes += 1;
            plunge = s.expand(node, sol)?;
            continue;
        }
        let cutoff = s.cutoff();
        let mut batch = Vec::with_capacity(threads);
        while batch.len() < threads {
            match s.heap.pop() {
                Some(n) if n.bound < cutoff => batch.push(n),
                Some(_) => {}
                None => break,
            }
        }
        if batch.is_empty() {
            s.bound = s.incumbent_obj();
            let status = if s.incumbent.is_some() { SolveStatus::Optimal } else { SolveStatus::Infeasible };
            return Ok(s.finish(status));
        }
        s.raise_bound(batch[0].bound);
        if s.incumbent.is_some() && gap_of(s.incumbent_obj(), s.bound) <= opts.gap_tol {
            return Ok(s.finish(SolveStatus::Optimal));
        }
        let outcomes: Vec<Result<LpOutcome, MilpError>> = if batch.len() == 1 {
            vec![s.solve_node(&batch[0])]
        } else {
            let search = &s;
            std::thread::scope(|scope| {
                let handles: Vec<_> =
                    batch.iter().map(|n| scope.spawn(move || search.solve_node(n))).collect();
                handles.into_iter().map(|h| h.join().expect("node worker panicked")).collect()
            })
        };
        let later: Vec<f64> = batch.iter().skip(1).map(|n| n.bound).chain([f64::INFINITY]).collect();
        for ((node, outcome), next) in batch.into_iter().zip(outcomes).zip(later) {
            s.pending = next;
            s.nodes += 1;
            if let LpOutcome::Solved(sol) = outcome? {
                let child = s.expand(node, sol)?;
                if child.is_some() {
                    plunge = child;
                }
            }
            if s.nodes % 1000 == 0 {
                s.record();
            }
        }
    }
}

impl Search<'_> {
    fn finish(mut self, status: SolveStatus) -> SolveResult {
        if status == SolveStatus::Optimal {
            let inc = self.incumbent_obj();
            if self.bound > inc {
                self.bound = inc;
            }
        }
        self.record();
        let (objective, values) = match self.incumbent.take() {
            Some((o, v)) => (o, v),
            None => (f64::INFINITY, Vec::new()),
        };
        let status = match status {
            SolveStatus::Infeasible if !values.is_empty() => SolveStatus::Optimal,
            s => s,
        };
        SolveResult {
            status,
            objective,
            bound: self.bound,
            gap: gap_of(objective, self.bound),
            values,
            node_count: self.nodes,
            wall_time: self.start.elapsed(),
            log: self.log,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{LinearConstraint, Sense, VarKind};

    fn knapsack() -> MilpModel {
        // max 5a + 4b + 3c  s.t. 2a + 3b + c <= 5, 4a + b + 2c <= 11
        let mut m = MilpModel::new();
        let a = m.add_var("a", 0.0, 1.0, VarKind::Binary, -5.0).unwrap();
        let b = m.add_var("b", 0.0, 1.0, VarKind::Binary, -4.0).unwrap();
        let c = m.add_var("c", 0.0, 1.0, VarKind::Binary, -3.0).unwrap();
        m.add_constraint(LinearConstraint::new("cap", "w1", vec![(a, 2.0), (b, 3.0), (c, 1.0)], Sense::Le, 5.0))
            .unwrap();
        m.add_constraint(LinearConstraint::new("cap", "w2", vec![(a, 4.0), (b, 1.0), (c, 2.0)], Sense::Le, 11.0))
            .unwrap();
        m
    }

    #[test]
    fn knapsack_matches_enumeration() {
        let m = knapsack();
        let mut best = f64::INFINITY;
        for mask in 0..8u32 {
            let vals: Vec<f64> = (0..3).map(|i| f64::from((mask >> i) & 1)).collect();
            if m.max_violation(&vals) == 0.0 {
                best = best.min(m.objective_value(&vals));
            }
        }
        let r = branch_and_bound(&m, &BnbOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - best).abs() < 1e-9, "{} vs {}", r.objective, best);
    }

    #[test]
    fn pure_lp_is_a_single_node() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, 10.0, VarKind::Continuous, 1.0).unwrap();
        m.add_constraint(LinearConstraint::new("t", "lo", vec![(x, 1.0)], Sense::Ge, 3.0)).unwrap();
        let r = branch_and_bound(&m, &BnbOptions::default()).unwrap();
        assert_eq!(r.node_count, 1);
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn integer_infeasible_model() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, 1.0, VarKind::Binary, 1.0).unwrap();
        m.add_constraint(LinearConstraint::new("t", "half", vec![(x, 2.0)], Sense::Eq, 1.0)).unwrap();
        let r = branch_and_bound(&m, &BnbOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        assert!(!r.has_incumbent());
    }

    #[test]
    fn repeated_solves_are_identical() {
        let m = knapsack();
        let a = branch_and_bound(&m, &BnbOptions::default()).unwrap();
        let b = branch_and_bound(&m, &BnbOptions::default()).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.node_count, b.node_count);
        let four = branch_and_bound(&m, &BnbOptions { threads: 4, ..Default::default() }).unwrap();
        assert!((four.objective - a.objective).abs() < 1e-9);
    }

    #[test]
    fn bound_and_incumbent_are_monotone_in_the_log() {
        let r = branch_and_bound(&knapsack(), &BnbOptions::default()).unwrap();
        for w in r.log.windows(2) {
            assert!(w[1].bound >= w[0].bound - 1e-12);
            assert!(w[1].incumbent <= w[0].incumbent + 1e-12);
        }
    }
}
