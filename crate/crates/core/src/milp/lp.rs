use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};

use super::{MilpError, MilpModel, Sense, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpResult {
    pub status: LpStatus,
    pub objective: f64,
    pub values: Vec<f64>,
}

/// The continuous relaxation of a [`MilpModel`], kept in solver form so that
/// branch-and-bound nodes can be re-optimized from a parent basis.
pub(crate) struct Relaxation {
    problem: Problem,
    cols: Vec<microlp::Variable>,
}

pub(crate) enum LpOutcome {
    Solved(microlp::Solution),
    Infeasible,
    Unbounded,
}

fn map_err(e: microlp::Error) -> Result<LpOutcome, MilpError> {
    match e {
        microlp::Error::Infeasible => Ok(LpOutcome::Infeasible),
        microlp::Error::Unbounded => Ok(LpOutcome::Unbounded),
        other => Err(MilpError::Numerical(other.to_string())),
    }
}

fn expr(terms: &[(VarId, f64)], cols: &[microlp::Variable]) -> LinearExpr {
    // Merge repeated columns; the sparse row builder rejects duplicates.
    let mut merged: Vec<(usize, f64)> = terms.iter().map(|&(v, c)| (v.0, c)).collect();
    merged.sort_by_key(|&(i, _)| i);
    let mut e = LinearExpr::empty();
    let mut i = 0;
    while i < merged.len() {
        let col = merged[i].0;
        let mut coef = 0.0;
        while i < merged.len() && merged[i].0 == col {
            coef += merged[i].1;
            i += 1;
        }
        if coef != 0.0 {
            e.add(cols[col], coef);
        }
    }
    e
}

fn op(sense: Sense) -> ComparisonOp {
    match sense {
        Sense::Le => ComparisonOp::Le,
        Sense::Eq => ComparisonOp::Eq,
        Sense::Ge => ComparisonOp::Ge,
    }
}

impl Relaxation {
    pub(crate) fn new(model: &MilpModel) -> Self {
        let mut problem = Problem::new(OptimizationDirection::Minimize);
        let cols: Vec<_> = model
            .vars()
            .iter()
            .map(|v| problem.add_var(v.objective, (v.lower, v.upper)))
            .collect();
        for row in model.constraints() {
            problem.add_constraint(expr(&row.terms, &cols), op(row.sense), row.rhs);
        }
        Relaxation { problem, cols }
    }

    pub(crate) fn solve(&self) -> Result<LpOutcome, MilpError> {
        match self.problem.solve() {
            Ok(outcome) => match outcome.into_solution() {
                Ok(sol) => Ok(LpOutcome::Solved(sol)),
                Err(_) => Err(MilpError::Numerical("relaxation solve interrupted".into())),
            },
            Err(e) => map_err(e),
        }
    }

    /// Re-optimizes `parent` after restricting `var` to `[lower, upper]`.
    pub(crate) fn restrict(
        &self,
        parent: microlp::Solution,
        var: VarId,
        lower: f64,
        upper: f64,
        orig: (f64, f64),
    ) -> Result<LpOutcome, MilpError> {
        let col = self.cols[var.0];
        let res = if lower == upper {
            parent.fix_var(col, lower)
        } else if lower > orig.0 {
            let mut e = LinearExpr::empty();
            e.add(col, 1.0);
            parent.add_constraint(e, ComparisonOp::Ge, lower)
        } else if upper < orig.1 {
            let mut e = LinearExpr::empty();
            e.add(col, 1.0);
            parent.add_constraint(e, ComparisonOp::Le, upper)
        } else {
            return Ok(LpOutcome::Solved(parent));
        };
        match res {
            Ok(outcome) => match outcome.into_solution() {
                Ok(sol) => Ok(LpOutcome::Solved(sol)),
                Err(_) => Err(MilpError::Numerical("node re-solve interrupted".into())),
            },
            Err(e) => map_err(e),
        }
    }

    pub(crate) fn values(&self, sol: &microlp::Solution) -> Vec<f64> {
        self.cols.iter().map(|&c| sol.var_value_raw(c)).collect()
    }
}

/// Solves the continuous relaxation of `model` (integrality dropped).
pub fn solve_lp(model: &MilpModel) -> Result<LpResult, MilpError> {
    let relax = Relaxation::new(model);
    Ok(match relax.solve()? {
        LpOutcome::Solved(sol) => {
            let values = relax.values(&sol);
            LpResult { status: LpStatus::Optimal, objective: model.objective_value(&values), values }
        }
        LpOutcome::Infeasible => LpResult {
            status: LpStatus::Infeasible,
            objective: f64::INFINITY,
            values: Vec::new(),
        },
        LpOutcome::Unbounded => LpResult {
            status: LpStatus::Unbounded,
            objective: f64::NEG_INFINITY,
            values: Vec::new(),
        },
    })
}
