//! Mixed-integer linear programming: a model container, an LP relaxation
//! driver and a best-bound branch-and-bound search.
//!
//! Models are always minimized. Rows reference variables through [`VarId`]
//! handles handed out by [`MilpModel::add_var`].

mod bnb;
mod lp;
mod lp_format;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

pub use bnb::{branch_and_bound, BnbOptions, LogLine, SolveResult, SolveStatus};
pub use lp::{solve_lp, LpResult, LpStatus};
pub use lp_format::write_lp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("integer variable `{0}` needs finite bounds")]
    UnboundedInteger(String),
    #[error("variable `{name}` has inverted bounds [{lower}, {upper}]")]
    InvertedBounds { name: String, lower: f64, upper: f64 },
    #[error("constraint `{0}` references an unknown variable")]
    UnknownVariable(String),
    #[error("constraint `{0}` has a non-finite coefficient or right-hand side")]
    NonFinite(String),
    #[error("numerical failure in the simplex: {0}")]
    Numerical(String),
    #[error("initial values have length {got}, model has {expected} variables")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Integer,
    Binary,
}

impl VarKind {
    pub fn is_integer(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
    pub objective: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

/// One sparse row `Σ coef·var  (sense)  rhs`.
///
/// `group` names the constraint family the row belongs to, so assembled
/// models can be audited and diffed family by family.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearConstraint {
    pub group: &'static str,
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(
        group: &'static str,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> Self {
        LinearConstraint { group, name: name.into(), terms, sense, rhs }
    }

    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v.0]).sum()
    }

    /// Signed slack: nonnegative when satisfied. Equality rows report
    /// `-|activity - rhs|`.
    pub fn slack(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.sense {
            Sense::Le => self.rhs - lhs,
            Sense::Ge => lhs - self.rhs,
            Sense::Eq => -(lhs - self.rhs).abs(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct MilpModel {
    vars: Vec<Variable>,
    constraints: Vec<LinearConstraint>,
    by_name: HashMap<String, VarId>,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        kind: VarKind,
        objective: f64,
    ) -> Result<VarId, MilpError> {
        let name = name.into();
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        if lower > upper || lower.is_nan() || upper.is_nan() {
            return Err(MilpError::InvertedBounds { name, lower, upper });
        }
        if kind.is_integer() && !(lower.is_finite() && upper.is_finite()) {
            return Err(MilpError::UnboundedInteger(name));
        }
        if self.by_name.contains_key(&name) {
            return Err(MilpError::DuplicateVariable(name));
        }
        let id = VarId(self.vars.len());
        self.by_name.insert(name.clone(), id);
        self.vars.push(Variable { name, lower, upper, kind, objective });
        Ok(id)
    }

    pub fn add_constraint(&mut self, row: LinearConstraint) -> Result<(), MilpError> {
        if row.terms.iter().any(|&(v, _)| v.0 >= self.vars.len()) {
            return Err(MilpError::UnknownVariable(row.name));
        }
        if !row.rhs.is_finite() || row.terms.iter().any(|&(_, c)| !c.is_finite()) {
            return Err(MilpError::NonFinite(row.name));
        }
        self.constraints.push(row);
        Ok(())
    }

    pub fn extend_constraints(
        &mut self,
        rows: impl IntoIterator<Item = LinearConstraint>,
    ) -> Result<(), MilpError> {
        rows.into_iter().try_for_each(|r| self.add_constraint(r))
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_integer_vars(&self) -> usize {
        self.vars.iter().filter(|v| v.kind.is_integer()).count()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.vars.iter().zip(values).map(|(v, x)| v.objective * x).sum()
    }

    /// Largest violation of any row, variable bound or integrality
    /// requirement at `values`. Zero means feasible.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| (-c.slack(values)).max(0.0))
            .fold(0.0, f64::max);
        let bounds = self
            .vars
            .iter()
            .zip(values)
            .map(|(v, &x)| {
                let b = (v.lower - x).max(x - v.upper).max(0.0);
                if v.kind.is_integer() {
                    b.max((x - x.round()).abs())
                } else {
                    b
                }
            })
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Rows whose slack is below `-tol`, with their slack.
    pub fn violated_rows(&self, values: &[f64], tol: f64) -> Vec<(&LinearConstraint, f64)> {
        self.constraints
            .iter()
            .map(|c| (c, c.slack(values)))
            .filter(|(_, s)| *s < -tol)
            .collect()
    }

    /// Number of rows per constraint family, in first-appearance order.
    pub fn group_counts(&self) -> Vec<(&'static str, usize)> {
        let mut out: Vec<(&'static str, usize)> = Vec::new();
        for c in &self.constraints {
            match out.iter_mut().find(|(g, _)| *g == c.group) {
                Some((_, n)) => *n += 1,
                None => out.push((c.group, 1)),
            }
        }
        out
    }
}
