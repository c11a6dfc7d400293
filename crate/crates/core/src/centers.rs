//! Nominal points deep inside the feasible region.
//!
//! All three centers work on the stacked `(theta, z, x)` space with slacks
//! `s_j = rhs_j - a_j . v` taken as given (no row normalization; call
//! [`LinearSystem::normalized_rows`] first for scale-invariant centers).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};
use crate::feasibility::psi;
use crate::model::LinearSystem;
use crate::solver::{
    newton_barrier_max, solve_lp, solve_qp, BarrierProblem, LinearRow, LpProblem, QpProblem, SolverError, Status,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterMethod {
    Analytic,
    Arithmetic,
    Feasible,
}

impl FromStr for CenterMethod {
    type Err = FlexError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(CenterMethod::Analytic),
            "arithmetic" => Ok(CenterMethod::Arithmetic),
            "feasible" => Ok(CenterMethod::Feasible),
            other => Err(FlexError::InvalidArgument(format!(
                "unknown center method `{other}` (expected analytic, arithmetic or feasible)"
            ))),
        }
    }
}

impl fmt::Display for CenterMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CenterMethod::Analytic => "analytic",
            CenterMethod::Arithmetic => "arithmetic",
            CenterMethod::Feasible => "feasible",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterResult {
    pub method: CenterMethod,
    pub theta_bar: Vec<f64>,
    /// Recourse and state values that go with `theta_bar`.
    pub recourse: Vec<f64>,
    pub psi_at_center: f64,
    /// `rhs_j - a_j . v` per inequality, in system order.
    pub slacks: Vec<f64>,
    /// `s*` for the feasible center, the slack sum for the arithmetic
    /// center, the log-slack sum for the analytic center.
    pub objective: f64,
}

fn rows(system: &LinearSystem, skip_vacuous: bool) -> (Vec<LinearRow>, Vec<LinearRow>) {
    let ineq = system
        .inequalities
        .iter()
        .enumerate()
        .filter(|(j, _)| !(skip_vacuous && system.is_vacuous(*j)))
        .map(|(_, c)| LinearRow::le(c.stacked(), c.rhs))
        .collect();
    let eq = system
        .equalities
        .iter()
        .map(|c| LinearRow::eq(c.stacked(), c.rhs))
        .collect();
    (ineq, eq)
}

fn finish(system: &LinearSystem, method: CenterMethod, v: Vec<f64>, objective: f64) -> Result<CenterResult> {
    let n = system.n_theta();
    let slacks = system
        .inequalities
        .iter()
        .map(|c| c.rhs - c.stacked().iter().zip(&v).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let theta_bar = v[..n].to_vec();
    Ok(CenterResult {
        method,
        psi_at_center: psi(system, &theta_bar)?,
        theta_bar,
        recourse: v[n..].to_vec(),
        slacks,
        objective,
    })
}

fn lp_status(status: Status, what: &str) -> Result<()> {
    match status {
        Status::Optimal => Ok(()),
        Status::Infeasible => Err(FlexError::Infeasible(format!("{what}: the system has no feasible point"))),
        Status::Unbounded => Err(FlexError::Unbounded(format!("{what}: the objective is unbounded"))),
        Status::IterationLimit => Err(SolverError::NumericalBreakdown(format!("{what}: iteration limit")).into()),
    }
}

/// `argmax s` subject to `a_j . v + s <= rhs_j` and the equalities; the
/// global minimizer of `psi`.
pub fn feasible_center(system: &LinearSystem) -> Result<CenterResult> {
    system.check()?;
    let n = system.n_vars();
    let mut lp = LpProblem::new(n + 1);
    lp.objective[n] = -1.0;
    let (ineq, eq) = rows(system, false);
    for mut r in ineq {
        r.coeffs.push(1.0);
        lp.add_row(r);
    }
    for mut r in eq {
        r.coeffs.push(0.0);
        lp.add_row(r);
    }
    let out = solve_lp(&lp)?;
    lp_status(out.status, "feasible center")?;
    let s = out.primal[n];
    if s < -1e-9 {
        return Err(FlexError::Infeasible(format!(
            "feasible center: best worst-case slack is {s:.6e} < 0"
        )));
    }
    finish(system, CenterMethod::Feasible, out.primal[..n].to_vec(), s)
}

/// `argmax sum_j log s_j`, started from the feasible center.
pub fn analytic_center(system: &LinearSystem) -> Result<CenterResult> {
    let fc = feasible_center(system)?;
    if fc.objective <= 1e-10 {
        return Err(FlexError::NoInteriorPoint { slack: fc.objective });
    }
    let (inequalities, equalities) = rows(system, true);
    let problem = BarrierProblem {
        inequalities,
        equalities,
        weights: None,
    };
    let mut start = fc.theta_bar.clone();
    start.extend_from_slice(&fc.recourse);
    let res = newton_barrier_max(&problem, system.n_vars(), Some(&start)).map_err(|e| match e {
        SolverError::NoInteriorPoint { slack } => FlexError::NoInteriorPoint { slack },
        SolverError::NumericalBreakdown(msg) if msg.contains("unbounded") => {
            FlexError::Unbounded(format!("analytic center: {msg}"))
        }
        other => other.into(),
    })?;
    let objective = res.slacks.iter().map(|s| s.ln()).sum();
    finish(system, CenterMethod::Analytic, res.point, objective)
}

/// `argmax sum_j s_j` over the feasible region; ties go to the optimal
/// point closest to the feasible center in `theta`.
pub fn arithmetic_center(system: &LinearSystem) -> Result<CenterResult> {
    system.check()?;
    let n = system.n_vars();
    let (ineq, eq) = rows(system, true);
    // maximize sum (rhs - a v)  <=>  minimize (sum a) . v
    let mut lp = LpProblem::new(n);
    for r in &ineq {
        for (o, a) in lp.objective.iter_mut().zip(&r.coeffs) {
            *o += a;
        }
    }
    lp.rows = ineq.iter().chain(&eq).cloned().collect();
    let out = solve_lp(&lp)?;
    lp_status(out.status, "arithmetic center")?;
    let fc = feasible_center(system)?;
    let nt = system.n_theta();
    let mut qp = QpProblem::new(n);
    for i in 0..nt {
        qp.quadratic[i][i] = 2.0;
        qp.linear[i] = -2.0 * fc.theta_bar[i];
    }
    qp.rows = lp.rows.clone();
    let cap = out.objective + 1e-9 * (1.0 + out.objective.abs());
    qp.rows.push(LinearRow::le(lp.objective.clone(), cap));
    let tie = solve_qp(&qp)?;
    let v = if tie.is_optimal() { tie.primal } else { out.primal };
    let total_rhs: f64 = ineq.iter().map(|r| r.rhs).sum();
    let objective = total_rhs - lp.objective.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
    finish(system, CenterMethod::Arithmetic, v, objective)
}

pub fn center(system: &LinearSystem, method: CenterMethod) -> Result<CenterResult> {
    match method {
        CenterMethod::Analytic => analytic_center(system),
        CenterMethod::Arithmetic => arithmetic_center(system),
        CenterMethod::Feasible => feasible_center(system),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AffineConstraint;

    fn interval() -> LinearSystem {
        LinearSystem {
            theta_names: vec!["t".into()],
            recourse_names: vec![],
            state_names: vec![],
            inequalities: vec![
                AffineConstraint::theta_only("up", vec![1.0], 1.0),
                AffineConstraint::theta_only("lo", vec![-1.0], 0.0),
            ],
            equalities: vec![],
        }
    }

    fn design_a() -> LinearSystem {
        LinearSystem {
            theta_names: vec!["t1".into(), "t2".into()],
            recourse_names: vec![],
            state_names: vec![],
            inequalities: vec![
                AffineConstraint::theta_only("f1", vec![1.0, 1.0], 14.0),
                AffineConstraint::theta_only("f2", vec![1.0, -2.0], 2.0),
                AffineConstraint::theta_only("f3", vec![-1.0, 0.0], 0.0),
                AffineConstraint::theta_only("f4", vec![0.0, -1.0], 0.0),
            ],
            equalities: vec![],
        }
    }

    #[test]
    fn interval_centers() {
        for m in [CenterMethod::Analytic, CenterMethod::Arithmetic, CenterMethod::Feasible] {
            let c = center(&interval(), m).unwrap();
            assert!((c.theta_bar[0] - 0.5).abs() < 1e-9, "{m}");
        }
        assert!((feasible_center(&interval()).unwrap().objective - 0.5).abs() < 1e-12);
    }

    #[test]
    fn design_a_feasible_center() {
        let c = feasible_center(&design_a()).unwrap();
        assert!((c.objective - 14.0 / 3.0).abs() < 1e-10);
        assert!((c.theta_bar[0] - 14.0 / 3.0).abs() < 1e-10);
        assert!((c.theta_bar[1] - 14.0 / 3.0).abs() < 1e-10);
        assert!((c.psi_at_center + 14.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn design_a_analytic_center_is_stationary() {
        let c = analytic_center(&design_a()).unwrap();
        let s = &c.slacks;
        // gradient of sum log s_j with s = rhs - a.theta
        let g1 = -1.0 / s[0] - 1.0 / s[1] + 1.0 / s[2];
        let g2 = -1.0 / s[0] + 2.0 / s[1] + 1.0 / s[3];
        assert!(g1.abs() < 1e-8 && g2.abs() < 1e-8);
        assert!(c.psi_at_center < 0.0);
    }

    #[test]
    fn point_region_and_unbounded() {
        let point = LinearSystem {
            inequalities: vec![
                AffineConstraint::theta_only("a", vec![1.0], 0.0),
                AffineConstraint::theta_only("b", vec![-1.0], 0.0),
            ],
            ..interval()
        };
        let c = feasible_center(&point).unwrap();
        assert!(c.objective.abs() < 1e-12 && c.psi_at_center.abs() < 1e-12);
        assert!(matches!(analytic_center(&point), Err(FlexError::NoInteriorPoint { .. })));
        let wedge = LinearSystem {
            inequalities: vec![AffineConstraint::theta_only("a", vec![-1.0], 0.0)],
            ..interval()
        };
        assert!(matches!(arithmetic_center(&wedge), Err(FlexError::Unbounded(_))));
        assert!(matches!(feasible_center(&wedge), Err(FlexError::Unbounded(_))));
    }
}
