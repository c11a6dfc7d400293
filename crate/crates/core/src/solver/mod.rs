//! Self-contained optimization engines.
//!
//! * [`solve_lp`]: two-phase primal simplex with row duals.
//! * [`solve_qp`]: primal active-set method for convex (PSD) quadratics,
//!   with a log-barrier fallback when the working set cycles.
//! * [`branch_and_bound`]: depth-first search over binary variables driven by
//!   a caller-supplied convex relaxation.
//! * [`newton_barrier_max`]: damped Newton on a sum of log-slacks under
//!   linear equalities.

mod barrier;
mod bnb;
pub(crate) mod dense;
mod lp;
mod qp;

pub use barrier::{newton_barrier_max, BarrierProblem, BarrierResult};
pub use bnb::{branch_and_bound, BnbConfig, BnbOutcome, BnbStatus, BranchRule, Incumbent, Relaxation};
pub use lp::solve_lp;
pub use qp::solve_qp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no strictly interior point (phase-1 slack {slack:.3e})")]
    NoInteriorPoint { slack: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// One dense row `coeffs . v {<=, =, >=} rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearRow {
    pub fn new(coeffs: Vec<f64>, sense: Sense, rhs: f64) -> Self {
        Self { coeffs, sense, rhs }
    }

    pub fn le(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self::new(coeffs, Sense::Le, rhs)
    }

    pub fn eq(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self::new(coeffs, Sense::Eq, rhs)
    }

    pub fn ge(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self::new(coeffs, Sense::Ge, rhs)
    }

    pub(crate) fn activity(&self, v: &[f64]) -> f64 {
        dense::dot(&self.coeffs, v)
    }

    /// Amount by which `v` violates this row (zero when satisfied).
    pub fn violation(&self, v: &[f64]) -> f64 {
        let lhs = self.activity(v);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// `minimize c . v` subject to rows and variable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub rows: Vec<LinearRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    /// A problem over `n` free variables with zero objective.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            rows: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, row: LinearRow) -> &mut Self {
        self.rows.push(row);
        self
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> &mut Self {
        self.lower[var] = lower;
        self.upper[var] = upper;
        self
    }

    pub(crate) fn check(&self) -> Result<(), SolverError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(SolverError::DimensionMismatch(format!(
                "bounds have lengths {}/{} for {} variables",
                self.lower.len(),
                self.upper.len(),
                n
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(SolverError::DimensionMismatch(format!(
                    "row {i} has {} coefficients, expected {n}",
                    row.coeffs.len()
                )));
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(SolverError::NumericalBreakdown(format!(
                    "row {i} has non-finite data"
                )));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(SolverError::NumericalBreakdown(
                "objective has non-finite data".into(),
            ));
        }
        Ok(())
    }
}

/// `minimize 1/2 v'Qv + c . v` subject to rows and bounds. `Q` is dense,
/// row-major, symmetric positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub quadratic: Vec<Vec<f64>>,
    pub linear: Vec<f64>,
    pub rows: Vec<LinearRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl QpProblem {
    pub fn new(n: usize) -> Self {
        Self {
            quadratic: vec![vec![0.0; n]; n],
            linear: vec![0.0; n],
            rows: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn objective_value(&self, v: &[f64]) -> f64 {
        let mut q = 0.0;
        for (i, row) in self.quadratic.iter().enumerate() {
            q += v[i] * dense::dot(row, v);
        }
        0.5 * q + dense::dot(&self.linear, v)
    }

    pub fn gradient(&self, v: &[f64]) -> Vec<f64> {
        self.quadratic
            .iter()
            .zip(&self.linear)
            .map(|(row, c)| dense::dot(row, v) + c)
            .collect()
    }

    pub(crate) fn as_lp(&self) -> LpProblem {
        LpProblem {
            objective: vec![0.0; self.num_vars()],
            rows: self.rows.clone(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Result of an LP or QP solve.
///
/// Duals follow the sensitivity convention `dual_i = d(objective)/d(rhs_i)`,
/// so `<=` rows carry non-positive duals and `>=` rows non-negative ones in a
/// minimization. Reduced costs satisfy `grad = A' duals + reduced_costs`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: Status,
    pub primal: Vec<f64>,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl SolveOutcome {
    pub(crate) fn with_status(status: Status, n: usize, m: usize, iterations: usize) -> Self {
        Self {
            status,
            primal: vec![0.0; n],
            duals: vec![0.0; m],
            reduced_costs: vec![0.0; n],
            objective: match status {
                Status::Infeasible => f64::INFINITY,
                Status::Unbounded => f64::NEG_INFINITY,
                _ => f64::NAN,
            },
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}
