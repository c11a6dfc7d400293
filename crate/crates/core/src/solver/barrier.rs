//! Damped Newton on log-barrier objectives with linear equality constraints.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::dense::{dot, full_qr, norm_inf};
use super::{solve_lp, LinearRow, LpProblem, Sense, SolverError, Status};

/// `maximize sum_j w_j log(b_j - a_j . v)` subject to `E v = e`.
#[derive(Debug, Clone)]
pub struct BarrierProblem {
    /// Inequality rows in `<=` orientation (slack = rhs - a . v).
    pub inequalities: Vec<LinearRow>,
    pub equalities: Vec<LinearRow>,
    /// Per-inequality weights; all ones when `None`.
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct BarrierResult {
    pub point: Vec<f64>,
    pub slacks: Vec<f64>,
    /// Infinity norm of the objective gradient projected onto the
    /// equality null space.
    pub stationarity: f64,
    pub iterations: usize,
    /// Worst-case slack of the phase-1 point.
    pub phase1_slack: f64,
}

pub(crate) const INTERIOR_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 200;

/// Phase 1: maximize the common slack `s` (capped at 1) over `a_j v + s <= b_j`,
/// `E v = e`. Returns the point and `s*`.
pub(crate) fn interior_point(
    n: usize,
    inequalities: &[LinearRow],
    equalities: &[LinearRow],
) -> Result<Option<(Vec<f64>, f64)>, SolverError> {
    let mut lp = LpProblem::new(n + 1);
    lp.objective[n] = -1.0;
    lp.set_bounds(n, f64::NEG_INFINITY, 1.0);
    for row in inequalities {
        let norm = row.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-300);
        let mut coeffs = row.coeffs.clone();
        coeffs.push(norm);
        lp.add_row(LinearRow::le(coeffs, row.rhs));
    }
    for row in equalities {
        let mut coeffs = row.coeffs.clone();
        coeffs.push(0.0);
        lp.add_row(LinearRow::new(coeffs, Sense::Eq, row.rhs));
    }
    let out = solve_lp(&lp)?;
    match out.status {
        Status::Optimal => {
            let s = out.primal[n];
            Ok(Some((out.primal[..n].to_vec(), s)))
        }
        Status::Infeasible => Ok(None),
        other => Err(SolverError::NumericalBreakdown(format!(
            "phase-1 LP ended with {other:?}"
        ))),
    }
}

/// Objective `t * (1/2 x'Qx + c'x) - sum_j w_j log(b_j - a_j x)`.
pub(crate) struct Centering<'a> {
    pub rows: &'a [LinearRow],
    pub weights: Option<&'a [f64]>,
    pub quadratic: Option<(&'a [Vec<f64>], &'a [f64])>,
    pub t: f64,
    /// Orthonormal basis of the equality null space.
    pub null_basis: &'a DMatrix<f64>,
}

pub(crate) struct CenterOutcome {
    pub point: Vec<f64>,
    pub iterations: usize,
}

impl Centering<'_> {
    fn weight(&self, j: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[j])
    }

    fn slacks(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.rhs - dot(&r.coeffs, x)).collect()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut v = 0.0;
        if let Some((q, c)) = self.quadratic {
            let mut quad = 0.0;
            for (i, row) in q.iter().enumerate() {
                quad += x[i] * dot(row, x);
            }
            v += self.t * (0.5 * quad + dot(c, x));
        }
        for (j, s) in self.slacks(x).into_iter().enumerate() {
            if s <= 0.0 {
                return f64::INFINITY;
            }
            v -= self.weight(j) * s.ln();
        }
        v
    }

    fn grad_hess(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = x.len();
        let mut g = DVector::<f64>::zeros(n);
        let mut h = DMatrix::<f64>::zeros(n, n);
        if let Some((q, c)) = self.quadratic {
            for i in 0..n {
                g[i] += self.t * (dot(&q[i], x) + c[i]);
                for k in 0..n {
                    h[(i, k)] += self.t * q[i][k];
                }
            }
        }
        for (j, row) in self.rows.iter().enumerate() {
            let s = row.rhs - dot(&row.coeffs, x);
            let w = self.weight(j);
            let inv = w / s;
            let inv2 = w / (s * s);
            for i in 0..n {
                let ai = row.coeffs[i];
                if ai == 0.0 {
                    continue;
                }
                g[i] += inv * ai;
                for k in 0..n {
                    let ak = row.coeffs[k];
                    if ak != 0.0 {
                        h[(i, k)] += inv2 * ai * ak;
                    }
                }
            }
        }
        (g, h)
    }

    pub fn run(&self, start: &[f64]) -> Result<CenterOutcome, SolverError> {
        let z = self.null_basis;
        let mut x = start.to_vec();
        let mut f = self.value(&x);
        if !f.is_finite() {
            return Err(SolverError::NumericalBreakdown(
                "barrier start is not strictly interior".into(),
            ));
        }
        let mut iterations = 0;
        loop {
            let (g, h) = self.grad_hess(&x);
            let r = z.transpose() * &g;
            let stationarity = norm_inf(r.as_slice());
            if z.ncols() == 0 {
                return Ok(CenterOutcome {
                    point: x,
                    iterations,
                });
            }
            let hr = z.transpose() * &h * z;
            let eig = SymmetricEigen::new(hr);
            let emax = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b));
            let mut u = DVector::<f64>::zeros(z.ncols());
            for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                if lam > 1e-13 * emax.max(1e-300) {
                    let vk = eig.eigenvectors.column(k);
                    let coef = vk.dot(&r) / lam;
                    u -= coef * vk;
                }
            }
            let decrement = -r.dot(&u);
            let scale = 1.0 + norm_inf(g.as_slice()).min(1e6);
            if stationarity <= 1e-13 * scale || decrement <= 1e-26 || decrement <= 1e-15 * f.abs() {
                return Ok(CenterOutcome {
                    point: x,
                    iterations,
                });
            }
            if iterations >= MAX_NEWTON {
                if norm_inf(&x) > 1e10 {
                    return Err(SolverError::NumericalBreakdown(
                        "barrier objective unbounded".into(),
                    ));
                }
                // Converged as far as floating point allows.
                if stationarity <= 1e-8 * (1.0 + self.t) {
                    return Ok(CenterOutcome {
                        point: x,
                        iterations,
                    });
                }
                return Err(SolverError::NumericalBreakdown(format!(
                    "Newton did not converge (stationarity {stationarity:.3e})"
                )));
            }
            let dx = z * u;
            // Keep strictly interior.
            let mut alpha: f64 = 1.0;
            for row in self.rows {
                let ad = dot(&row.coeffs, dx.as_slice());
                if ad > 0.0 {
                    let s = row.rhs - dot(&row.coeffs, &x);
                    alpha = alpha.min(0.99 * s / ad);
                }
            }
            let slope = g.dot(&dx);
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a + alpha * b).collect();
                let ft = self.value(&trial);
                if ft.is_finite() && ft <= f + 1e-4 * alpha * slope {
                    x = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            iterations += 1;
            if !accepted {
                // No further decrease representable; accept if nearly stationary.
                if stationarity <= 1e-8 * (1.0 + self.t) {
                    return Ok(CenterOutcome {
                        point: x,
                        iterations,
                    });
                }
                return Err(SolverError::NumericalBreakdown(format!(
                    "line search failed (stationarity {stationarity:.3e})"
                )));
            }
            if norm_inf(&x) > 1e12 {
                return Err(SolverError::NumericalBreakdown(
                    "barrier objective unbounded".into(),
                ));
            }
        }
    }
}

pub(crate) fn equality_null_basis(n: usize, equalities: &[LinearRow]) -> DMatrix<f64> {
    if equalities.is_empty() {
        return DMatrix::identity(n, n);
    }
    let et = DMatrix::from_fn(n, equalities.len(), |i, k| equalities[k].coeffs[i]);
    full_qr(&et, 1e-10).null_basis()
}

/// Maximize a weighted sum of log-slacks subject to linear equalities.
///
/// Without a `start`, an interior point is found by maximizing the common
/// slack first (capped at 1). An empty interior is reported as
/// [`SolverError::NoInteriorPoint`].
pub fn newton_barrier_max(
    problem: &BarrierProblem,
    n: usize,
    start: Option<&[f64]>,
) -> Result<BarrierResult, SolverError> {
    for row in problem.inequalities.iter().chain(&problem.equalities) {
        if row.coeffs.len() != n {
            return Err(SolverError::DimensionMismatch(format!(
                "row has {} coefficients, expected {n}",
                row.coeffs.len()
            )));
        }
    }
    let (x0, phase1_slack) = match start {
        Some(x) => {
            let s = problem
                .inequalities
                .iter()
                .map(|r| r.rhs - dot(&r.coeffs, x))
                .fold(f64::INFINITY, f64::min);
            (x.to_vec(), s)
        }
        None => match interior_point(n, &problem.inequalities, &problem.equalities)? {
            Some(found) => found,
            None => {
                return Err(SolverError::NoInteriorPoint {
                    slack: f64::NEG_INFINITY,
                })
            }
        },
    };
    if !(phase1_slack > INTERIOR_TOL) {
        return Err(SolverError::NoInteriorPoint {
            slack: phase1_slack,
        });
    }
    let z = equality_null_basis(n, &problem.equalities);
    let centering = Centering {
        rows: &problem.inequalities,
        weights: problem.weights.as_deref(),
        quadratic: None,
        t: 1.0,
        null_basis: &z,
    };
    let out = centering.run(&x0)?;
    let slacks: Vec<f64> = problem
        .inequalities
        .iter()
        .map(|r| r.rhs - dot(&r.coeffs, &out.point))
        .collect();
    // Report stationarity of the (unweighted-scale) gradient sum w_j a_j / s_j.
    let mut g = DVector::<f64>::zeros(n);
    for (j, row) in problem.inequalities.iter().enumerate() {
        let w = problem.weights.as_ref().map_or(1.0, |w| w[j]);
        for i in 0..n {
            g[i] += w * row.coeffs[i] / slacks[j];
        }
    }
    let stationarity = norm_inf((z.transpose() * g).as_slice());
    Ok(BarrierResult {
        point: out.point,
        slacks,
        stationarity,
        iterations: out.iterations,
        phase1_slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_center() {
        let p = BarrierProblem {
            inequalities: vec![LinearRow::le(vec![1.0], 1.0), LinearRow::le(vec![-1.0], 0.0)],
            equalities: vec![],
            weights: None,
        };
        let res = newton_barrier_max(&p, 1, None).unwrap();
        assert!((res.point[0] - 0.5).abs() < 1e-12);
        assert!(res.stationarity < 1e-8);
    }

    #[test]
    fn empty_interior_is_reported() {
        let p = BarrierProblem {
            inequalities: vec![LinearRow::le(vec![1.0], 0.0), LinearRow::le(vec![-1.0], 0.0)],
            equalities: vec![],
            weights: None,
        };
        let res = newton_barrier_max(&p, 1, None);
        assert!(matches!(res, Err(SolverError::NoInteriorPoint { slack }) if slack <= INTERIOR_TOL));
        let p = BarrierProblem {
            inequalities: vec![LinearRow::le(vec![1.0], -1.0), LinearRow::le(vec![-1.0], 0.0)],
            equalities: vec![],
            weights: None,
        };
        assert!(matches!(
            newton_barrier_max(&p, 1, None),
            Err(SolverError::NoInteriorPoint { .. })
        ));
    }

    #[test]
    fn equality_constrained_center() {
        // maximize log x + log y + log(1 - x) + log(1 - y) with x + y = 1.2
        let p = BarrierProblem {
            inequalities: vec![
                LinearRow::le(vec![-1.0, 0.0], 0.0),
                LinearRow::le(vec![0.0, -1.0], 0.0),
                LinearRow::le(vec![1.0, 0.0], 1.0),
                LinearRow::le(vec![0.0, 1.0], 1.0),
            ],
            equalities: vec![LinearRow::eq(vec![1.0, 1.0], 1.2)],
            weights: None,
        };
        let res = newton_barrier_max(&p, 2, None).unwrap();
        assert!((res.point[0] - 0.6).abs() < 1e-10);
        assert!((res.point[1] - 0.6).abs() < 1e-10);
    }
}
