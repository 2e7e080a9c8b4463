//! Solver-agnostic linear and mixed-integer model construction.
//!
//! Dual values follow one convention everywhere: the dual of a row is the
//! derivative of the optimal objective with respect to its right-hand side.
//! For a minimization this makes duals of binding `>=` rows nonnegative and
//! duals of binding `<=` rows nonpositive.
mod expr;
mod highs;

pub use expr::{LinExpr, VarId};
pub use highs::HighsProcess;

use log::warn;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Feasibility tolerance used when checking primal solutions.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone)]
pub struct Column {
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn bounds(&self) -> (f64, f64) {
        match self.sense {
            Sense::Le => (f64::NEG_INFINITY, self.rhs),
            Sense::Eq => (self.rhs, self.rhs),
            Sense::Ge => (self.rhs, f64::INFINITY),
        }
    }
}

/// A minimization model: bounded columns, linear rows and a linear objective.
#[derive(Debug, Clone, Default)]
pub struct ModelBuilder {
    columns: Vec<Column>,
    rows: Vec<Row>,
    objective_constant: f64,
    start: Option<Vec<f64>>,
}

impl ModelBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> VarId {
        assert!(lower <= upper, "empty bounds [{lower}, {upper}]");
        self.columns.push(Column {
            lower,
            upper,
            cost,
            kind: VarKind::Continuous,
        });
        VarId(self.columns.len() - 1)
    }

    pub fn add_binary(&mut self, cost: f64) -> VarId {
        self.columns.push(Column {
            lower: 0.0,
            upper: 1.0,
            cost,
            kind: VarKind::Binary,
        });
        VarId(self.columns.len() - 1)
    }

    /// Adds `expr (sense) rhs`; any constant inside `expr` moves to the right.
    pub fn add_constraint(&mut self, expr: impl Into<LinExpr>, sense: Sense, rhs: f64) -> RowId {
        let expr = expr.into();
        let mut merged: HashMap<VarId, f64> = HashMap::with_capacity(expr.terms.len());
        let mut order = Vec::with_capacity(expr.terms.len());
        for &(v, c) in &expr.terms {
            assert!(v.0 < self.columns.len(), "constraint references unknown variable {v:?}");
            match merged.get_mut(&v) {
                Some(acc) => *acc += c,
                None => {
                    merged.insert(v, c);
                    order.push(v);
                }
            }
        }
        let terms = order
            .into_iter()
            .map(|v| (v, merged[&v]))
            .filter(|(_, c)| *c != 0.0)
            .collect();
        self.rows.push(Row {
            terms,
            sense,
            rhs: rhs - expr.constant,
        });
        RowId(self.rows.len() - 1)
    }

    /// Adds `expr` to the objective.
    pub fn add_objective(&mut self, expr: &LinExpr) {
        for &(v, c) in &expr.terms {
            self.columns[v.0].cost += c;
        }
        self.objective_constant += expr.constant;
    }

    pub fn set_bounds(&mut self, v: VarId, lower: f64, upper: f64) {
        let col = &mut self.columns[v.0];
        col.lower = lower;
        col.upper = upper;
    }

    pub fn set_rhs(&mut self, r: RowId, rhs: f64) {
        self.rows[r.0].rhs = rhs;
    }

    /// Feasible point handed to the MIP solver as its first incumbent.
    pub fn set_start(&mut self, values: Vec<f64>) {
        assert_eq!(values.len(), self.columns.len(), "start has the wrong length");
        self.start = Some(values);
    }

    pub fn clear_start(&mut self) {
        self.start = None;
    }

    pub fn start(&self) -> Option<&[f64]> {
        self.start.as_deref()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn row(&self, r: RowId) -> &Row {
        &self.rows[r.0]
    }

    pub fn objective_constant(&self) -> f64 {
        self.objective_constant
    }

    pub fn num_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.columns.iter().filter(|c| c.kind == VarKind::Binary).count()
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn is_mip(&self) -> bool {
        self.columns.iter().any(|c| c.kind == VarKind::Binary)
    }

    /// Objective of an arbitrary point.
    pub fn objective_at(&self, values: &[f64]) -> f64 {
        self.objective_constant
            + self
                .columns
                .iter()
                .zip(values)
                .map(|(c, x)| c.cost * x)
                .sum::<f64>()
    }

    /// Largest bound or row violation of `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (c, x) in self.columns.iter().zip(values) {
            worst = worst.max(c.lower - x).max(x - c.upper);
            if c.kind == VarKind::Binary {
                worst = worst.max((x - x.round()).abs());
            }
        }
        for r in &self.rows {
            let act: f64 = r.terms.iter().map(|(v, a)| a * values[v.0]).sum();
            let (lo, hi) = r.bounds();
            worst = worst.max(lo - act).max(act - hi);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    /// One entry per row; only present for continuous solves.
    pub duals: Option<Vec<f64>>,
    pub mip_gap: f64,
}

impl Solution {
    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }

    pub fn eval(&self, e: &LinExpr) -> f64 {
        e.constant + e.terms.iter().map(|(v, c)| c * self.values[v.0]).sum::<f64>()
    }

    pub fn dual(&self, r: RowId) -> Option<f64> {
        self.duals.as_ref().map(|d| d[r.0])
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solver backend failure: {0}")]
    Backend(String),
    #[error("solver returned status {0:?}")]
    NotOptimal(SolveStatus),
    #[error("LP with fixed binaries is infeasible")]
    RelaxationInfeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Highs,
}

/// `solver.*` configuration keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub backend: BackendKind,
    /// Relative MIP gap.
    pub gap: f64,
    pub time_limit_s: Option<f64>,
    pub threads: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            backend: BackendKind::Highs,
            gap: 1e-6,
            time_limit_s: None,
            threads: None,
        }
    }
}

/// A solver that can take a [`ModelBuilder`] to a [`Solution`].
pub trait Backend: Send + Sync {
    fn solve(&self, model: &ModelBuilder, opts: &SolverOptions) -> Result<Solution, SolverError>;
}

pub fn backend_for(kind: BackendKind) -> &'static dyn Backend {
    match kind {
        BackendKind::Highs => HighsProcess::shared(),
    }
}

/// Solves the model with the configured backend.
pub fn solve(model: &ModelBuilder, opts: &SolverOptions) -> Result<Solution, SolverError> {
    let sol = backend_for(opts.backend).solve(model, opts)?;
    if sol.status == SolveStatus::Optimal {
        let viol = model.max_violation(&sol.values);
        if viol > 1e3 * FEAS_TOL {
            warn!("solver point violates the model by {viol:.3e}");
        }
    }
    Ok(sol)
}

/// Like [`solve`] but anything other than an optimal status is an error.
pub fn solve_optimal(model: &ModelBuilder, opts: &SolverOptions) -> Result<Solution, SolverError> {
    let sol = solve(model, opts)?;
    match sol.status {
        SolveStatus::Optimal => Ok(sol),
        other => Err(SolverError::NotOptimal(other)),
    }
}

/// Result of pricing a MILP solution.
#[derive(Debug, Clone)]
pub struct PricedSolution {
    pub lp: Solution,
    /// Duals of the marked rows, in the order they were given.
    pub marked_duals: Vec<f64>,
}

/// Fixes every binary at its value in `milp_solution`, relaxes integrality,
/// re-solves the LP and reads the duals of the marked rows.
pub fn fix_and_relax_duals(
    model: &ModelBuilder,
    milp_solution: &Solution,
    marked: &[RowId],
    opts: &SolverOptions,
) -> Result<PricedSolution, SolverError> {
    if milp_solution.status != SolveStatus::Optimal {
        return Err(SolverError::NotOptimal(milp_solution.status));
    }
    let mut lp = model.clone();
    for (j, col) in lp.columns.iter_mut().enumerate() {
        if col.kind == VarKind::Binary {
            let x = milp_solution.values[j].round();
            col.lower = x;
            col.upper = x;
            col.kind = VarKind::Continuous;
        }
    }
    let sol = solve(&lp, opts)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(SolverError::RelaxationInfeasible),
        other => return Err(SolverError::NotOptimal(other)),
    }
    let tol = (milp_solution.mip_gap.max(opts.gap) + 1e-6) * (1.0 + milp_solution.objective.abs());
    if (sol.objective - milp_solution.objective).abs() > tol {
        warn!(
            "fixed-binary LP objective {} differs from MILP objective {}",
            sol.objective, milp_solution.objective
        );
    }
    let duals = sol
        .duals
        .as_ref()
        .ok_or_else(|| SolverError::Backend("LP solve returned no duals".into()))?;
    let marked_duals = marked.iter().map(|r| duals[r.0]).collect();
    Ok(PricedSolution {
        lp: sol,
        marked_duals,
    })
}
