//! Primal active-set method for convex quadratic programs.
//!
//! Rows and finite bounds are normalized into unit-norm `a . x <= b` (or
//! `= b`) constraints. A feasible start comes from an LP; each iteration
//! minimizes the quadratic on the working-set subspace through a null-space
//! basis and an eigendecomposition of the reduced Hessian, so semidefinite
//! `Q` is handled: zero-curvature descent directions are followed as rays
//! until a constraint blocks them (or reported as unbounded). After a long
//! run without convergence the working set is assumed to be cycling and the
//! problem is re-solved by log-barrier path following.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::barrier::{equality_null_basis, interior_point, Centering, INTERIOR_TOL};
use super::dense::{dot, full_qr, norm_inf};
use super::{solve_lp, LinearRow, QpProblem, Sense, SolveOutcome, SolverError, Status};

#[derive(Debug, Clone, Copy)]
enum Origin {
    /// Source row index and the factor mapping this row's multiplier back.
    Row(usize, f64),
    Lower(usize, f64),
    Upper(usize, f64),
}

#[derive(Debug, Clone)]
struct Con {
    a: Vec<f64>,
    b: f64,
    eq: bool,
    origin: Origin,
}

fn normalize(p: &QpProblem) -> Vec<Con> {
    let n = p.num_vars();
    let mut cons = Vec::new();
    for (i, row) in p.rows.iter().enumerate() {
        let norm = row.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let sign = if row.sense == Sense::Ge { -1.0 } else { 1.0 };
        let f = sign / norm;
        cons.push(Con {
            a: row.coeffs.iter().map(|c| c * f).collect(),
            b: row.rhs * f,
            eq: row.sense == Sense::Eq,
            origin: Origin::Row(i, f),
        });
    }
    for j in 0..n {
        let (lb, ub) = (p.lower[j], p.upper[j]);
        let mut unit = vec![0.0; n];
        if is_fixed(lb, ub) {
            unit[j] = 1.0;
            cons.push(Con {
                a: unit,
                b: lb,
                eq: true,
                origin: Origin::Upper(j, 1.0),
            });
            continue;
        }
        if lb.is_finite() {
            let mut a = unit.clone();
            a[j] = -1.0;
            cons.push(Con {
                a,
                b: -lb,
                eq: false,
                origin: Origin::Lower(j, -1.0),
            });
        }
        if ub.is_finite() {
            unit[j] = 1.0;
            cons.push(Con {
                a: unit,
                b: ub,
                eq: false,
                origin: Origin::Upper(j, 1.0),
            });
        }
    }
    cons
}

struct Working {
    set: Vec<usize>,
}

/// Select a linearly independent subset of `candidates` (in order) after the
/// already-fixed members of `base`.
fn independent(cons: &[Con], n: usize, base: &[usize], candidates: &[usize]) -> Vec<usize> {
    let mut chosen: Vec<usize> = base.to_vec();
    for &c in candidates {
        if chosen.len() >= n {
            break;
        }
        let mut trial = chosen.clone();
        trial.push(c);
        let at = DMatrix::from_fn(n, trial.len(), |i, k| cons[trial[k]].a[i]);
        let qr = full_qr(&at, 1e-9);
        if qr.rank == trial.len() {
            chosen = trial;
        }
    }
    chosen
}

/// Build the outcome (duals, reduced costs) from a primal point and the
/// normalized-constraint multipliers `nu` (one per constraint, zero when inactive).
fn finish(p: &QpProblem, cons: &[Con], x: Vec<f64>, nu: &[f64], iterations: usize) -> SolveOutcome {
    let n = p.num_vars();
    let mut duals = vec![0.0; p.rows.len()];
    let mut reduced = vec![0.0; n];
    // Stationarity: g + sum nu_k a_k = 0 with a_k = f * source row.
    for (k, con) in cons.iter().enumerate() {
        if nu[k] == 0.0 {
            continue;
        }
        match con.origin {
            Origin::Row(i, f) => duals[i] += -nu[k] * f,
            Origin::Lower(j, f) | Origin::Upper(j, f) => reduced[j] += -nu[k] * f,
        }
    }
    let objective = p.objective_value(&x);
    SolveOutcome {
        status: Status::Optimal,
        primal: x,
        duals,
        reduced_costs: reduced,
        objective,
        iterations,
    }
}

fn is_fixed(lb: f64, ub: f64) -> bool {
    lb.is_finite() && ub.is_finite() && (ub - lb).abs() <= 1e-14 * (1.0 + lb.abs())
}

/// Solve a convex quadratic program.
///
/// Fixed variables are substituted out first. Kept as equality constraints
/// they can be dropped as numerically dependent and then drift along
/// null-space steps.
pub fn solve_qp(p: &QpProblem) -> Result<SolveOutcome, SolverError> {
    let n = p.num_vars();
    if p.quadratic.len() != n || p.quadratic.iter().any(|r| r.len() != n) {
        return Err(SolverError::DimensionMismatch(format!(
            "quadratic term is not {n}x{n}"
        )));
    }
    let free: Vec<usize> = (0..n).filter(|&j| !is_fixed(p.lower[j], p.upper[j])).collect();
    if free.len() == n || free.is_empty() {
        return active_set(p);
    }
    let fixed: Vec<usize> = (0..n).filter(|&j| is_fixed(p.lower[j], p.upper[j])).collect();
    let value = |j: usize| p.lower[j];
    let mut reduced = QpProblem::new(free.len());
    for (a, &i) in free.iter().enumerate() {
        for (b, &k) in free.iter().enumerate() {
            reduced.quadratic[a][b] = p.quadratic[i][k];
        }
        reduced.linear[a] = p.linear[i]
            + fixed
                .iter()
                .map(|&k| 0.5 * (p.quadratic[i][k] + p.quadratic[k][i]) * value(k))
                .sum::<f64>();
        reduced.lower[a] = p.lower[i];
        reduced.upper[a] = p.upper[i];
    }
    reduced.rows = p
        .rows
        .iter()
        .map(|row| LinearRow {
            coeffs: free.iter().map(|&j| row.coeffs[j]).collect(),
            sense: row.sense,
            rhs: row.rhs - fixed.iter().map(|&j| row.coeffs[j] * value(j)).sum::<f64>(),
        })
        .collect();
    let inner = active_set(&reduced)?;
    if inner.status != Status::Optimal {
        return Ok(SolveOutcome::with_status(inner.status, n, p.rows.len(), inner.iterations));
    }
    let mut x: Vec<f64> = (0..n).map(value).collect();
    for (a, &j) in free.iter().enumerate() {
        x[j] = inner.primal[a];
    }
    let g = p.gradient(&x);
    let mut reduced_costs = vec![0.0; n];
    for (a, &j) in free.iter().enumerate() {
        reduced_costs[j] = inner.reduced_costs[a];
    }
    for &j in &fixed {
        reduced_costs[j] = g[j] - p.rows.iter().zip(&inner.duals).map(|(r, y)| r.coeffs[j] * y).sum::<f64>();
    }
    Ok(SolveOutcome {
        status: Status::Optimal,
        objective: p.objective_value(&x),
        primal: x,
        duals: inner.duals,
        reduced_costs,
        iterations: inner.iterations,
    })
}

fn active_set(p: &QpProblem) -> Result<SolveOutcome, SolverError> {
    let n = p.num_vars();
    let lp = p.as_lp();
    lp.check()?;
    let m = p.rows.len();
    let start = solve_lp(&lp)?;
    match start.status {
        Status::Optimal => {}
        Status::Infeasible => return Ok(SolveOutcome::with_status(Status::Infeasible, n, m, 0)),
        other => {
            return Err(SolverError::NumericalBreakdown(format!(
                "feasibility LP ended with {other:?}"
            )))
        }
    }
    let cons = normalize(p);
    let q = DMatrix::from_fn(n, n, |i, k| 0.5 * (p.quadratic[i][k] + p.quadratic[k][i]));
    let c = DVector::from_column_slice(&p.linear);
    let mut x = DVector::from_vec(start.primal);

    let eqs: Vec<usize> = (0..cons.len()).filter(|&k| cons[k].eq).collect();
    let eq_set = independent(&cons, n, &[], &eqs);
    let n_eq = eq_set.len();
    let active: Vec<usize> = (0..cons.len())
        .filter(|&k| !cons[k].eq && cons[k].b - dot(&cons[k].a, x.as_slice()) <= 1e-9)
        .collect();
    let mut w = Working {
        set: independent(&cons, n, &eq_set, &active),
    };

    let bland_after = 5 * (n + cons.len()) + 100;
    let max_iter = 50 * (n + cons.len()) + 1000;
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > max_iter {
            return barrier_fallback(p, &cons, &q, &c, iterations);
        }
        let g = &q * &x + &c;
        let gscale = 1.0 + norm_inf(g.as_slice());
        let k = w.set.len();
        let at = DMatrix::from_fn(n, k, |i, j| cons[w.set[j]].a[i]);
        let qr = full_qr(&at, 1e-12);
        let z = qr.null_basis();

        let mut step: Option<(DVector<f64>, bool)> = None;
        if z.ncols() > 0 {
            let r = z.transpose() * &g;
            let h = z.transpose() * &q * &z;
            let eig = SymmetricEigen::new(h);
            let emax = eig.eigenvalues.iter().fold(1.0_f64, |a, &b| a.max(b));
            let mut ray = DVector::<f64>::zeros(z.ncols());
            let mut newton = DVector::<f64>::zeros(z.ncols());
            let mut has_ray = false;
            for (kk, &lam) in eig.eigenvalues.iter().enumerate() {
                let vk = eig.eigenvectors.column(kk);
                let coef = vk.dot(&r);
                if lam > 1e-11 * emax {
                    newton -= (coef / lam) * vk;
                } else if coef.abs() > 1e-11 * gscale {
                    ray -= coef * vk;
                    has_ray = true;
                }
            }
            if has_ray {
                step = Some((&z * ray, true));
            } else {
                let pstep = &z * newton;
                if norm_inf(pstep.as_slice()) > 1e-12 * (1.0 + norm_inf(x.as_slice())) {
                    step = Some((pstep, false));
                }
            }
        }

        match step {
            None => {
                // Multipliers on the working set: A_W' nu = -g.
                // Columns the QR dropped as dependent get a zero multiplier.
                let mut nu_w = DVector::<f64>::zeros(k);
                if k > 0 {
                    let kept = qr.solve_kept(&(-&g));
                    for (i, &col) in qr.kept.iter().enumerate() {
                        nu_w[col] = kept[i];
                    }
                }
                let mut worst: Option<(usize, f64)> = None;
                for (pos, &ci) in w.set.iter().enumerate().skip(n_eq) {
                    let val = nu_w[pos];
                    if val < -1e-9 * gscale {
                        let better = match worst {
                            None => true,
                            Some((wp, wv)) => {
                                if iterations > bland_after {
                                    ci < w.set[wp]
                                } else {
                                    val < wv
                                }
                            }
                        };
                        if better {
                            worst = Some((pos, val));
                        }
                    }
                }
                match worst {
                    Some((pos, _)) => {
                        w.set.remove(pos);
                    }
                    None => {
                        let mut nu = vec![0.0; cons.len()];
                        for (pos, &ci) in w.set.iter().enumerate() {
                            let v = nu_w[pos];
                            nu[ci] = if cons[ci].eq { v } else { v.max(0.0) };
                        }
                        return Ok(finish(p, &cons, x.as_slice().to_vec(), &nu, iterations));
                    }
                }
            }
            Some((dir, is_ray)) => {
                let mut alpha = if is_ray { f64::INFINITY } else { 1.0 };
                let mut blocking = None;
                let dnorm = norm_inf(dir.as_slice());
                for (ci, con) in cons.iter().enumerate() {
                    if con.eq || w.set.contains(&ci) {
                        continue;
                    }
                    let ad = dot(&con.a, dir.as_slice());
                    if ad <= 1e-14 * dnorm {
                        continue;
                    }
                    // Rows lying in the span of the working set would make it
                    // singular; they stay satisfied to within `ad * alpha`.
                    let a = DVector::from_column_slice(&con.a);
                    if (z.transpose() * a).norm() <= 1e-8 {
                        continue;
                    }
                    let slack = (con.b - dot(&con.a, x.as_slice())).max(0.0);
                    let ratio = slack / ad;
                    if ratio < alpha {
                        alpha = ratio;
                        blocking = Some(ci);
                    }
                }
                if alpha.is_infinite() {
                    return Ok(SolveOutcome::with_status(Status::Unbounded, n, m, iterations));
                }
                x += alpha * dir;
                if let Some(ci) = blocking {
                    w.set.push(ci);
                }
            }
        }
    }
}

fn barrier_fallback(
    p: &QpProblem,
    cons: &[Con],
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    iterations: usize,
) -> Result<SolveOutcome, SolverError> {
    let n = p.num_vars();
    let ineq: Vec<LinearRow> = cons
        .iter()
        .filter(|k| !k.eq)
        .map(|k| LinearRow::le(k.a.clone(), k.b))
        .collect();
    let eqs: Vec<LinearRow> = cons
        .iter()
        .filter(|k| k.eq)
        .map(|k| LinearRow::eq(k.a.clone(), k.b))
        .collect();
    let Some((mut x, s)) = interior_point(n, &ineq, &eqs)? else {
        return Ok(SolveOutcome::with_status(Status::Infeasible, n, p.rows.len(), iterations));
    };
    if s <= INTERIOR_TOL {
        return Err(SolverError::NumericalBreakdown(
            "active set cycled and the feasible region has no interior".into(),
        ));
    }
    let z = equality_null_basis(n, &eqs);
    let qrows: Vec<Vec<f64>> = (0..n).map(|i| q.row(i).iter().copied().collect()).collect();
    let lin: Vec<f64> = c.iter().copied().collect();
    let mut t = 1.0;
    let m_ineq = ineq.len().max(1) as f64;
    let mut iters = iterations;
    loop {
        let centering = Centering {
            rows: &ineq,
            weights: None,
            quadratic: Some((&qrows, &lin)),
            t,
            null_basis: &z,
        };
        let out = centering.run(&x)?;
        x = out.point;
        iters += out.iterations;
        if m_ineq / t < 1e-11 {
            break;
        }
        t *= 10.0;
    }
    // Recover multipliers by least squares on the nearly active constraints;
    // 1/(t s) loses all precision once s is tiny.
    let mut nu = vec![0.0; cons.len()];
    let g = q * DVector::from_column_slice(&x) + c;
    let active: Vec<usize> = (0..cons.len())
        .filter(|&k| cons[k].eq || cons[k].b - dot(&cons[k].a, &x) <= 1e-7 * (1.0 + cons[k].b.abs()))
        .collect();
    if !active.is_empty() {
        let at = DMatrix::from_fn(n, active.len(), |i, j| cons[active[j]].a[i]);
        let qr = full_qr(&at, 1e-12);
        let sol = qr.solve_kept(&(-g));
        for (pos, &kc) in qr.kept.iter().enumerate() {
            let k = active[kc];
            nu[k] = if cons[k].eq { sol[pos] } else { sol[pos].max(0.0) };
        }
    }
    Ok(finish(p, cons, x, &nu, iters))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kkt_residual(p: &QpProblem, out: &SolveOutcome) -> f64 {
        let g = p.gradient(&out.primal);
        (0..p.num_vars())
            .map(|j| {
                let at_y: f64 = p.rows.iter().zip(&out.duals).map(|(r, y)| r.coeffs[j] * y).sum();
                (g[j] - at_y - out.reduced_costs[j]).abs()
            })
            .fold(0.0, f64::max)
    }

    fn inv2(v: [[f64; 2]; 2]) -> Vec<Vec<f64>> {
        let det = v[0][0] * v[1][1] - v[0][1] * v[1][0];
        vec![
            vec![v[1][1] / det, -v[0][1] / det],
            vec![-v[1][0] / det, v[0][0] / det],
        ]
    }

    #[test]
    fn ellipsoid_touch_subproblems() {
        let pinv = inv2([[2.0, 1.0], [1.0, 3.0]]);
        // minimize w'V^{-1}w = 1/2 w'(2 V^{-1})w
        let quad: Vec<Vec<f64>> = pinv.iter().map(|r| r.iter().map(|v| 2.0 * v).collect()).collect();
        for (row, expected) in [(vec![1.0, 1.0], 5.0, 25.0 / 7.0), (vec![1.0, -2.0], 8.0, 6.4)]
            .into_iter()
            .map(|(a, b, e)| (LinearRow::eq(a, b), e))
        {
            let mut p = QpProblem::new(2);
            p.quadratic = quad.clone();
            p.rows.push(row);
            let out = solve_qp(&p).unwrap();
            assert_eq!(out.status, Status::Optimal);
            assert!((out.objective - expected).abs() < 1e-10, "{}", out.objective);
            assert!(kkt_residual(&p, &out) < 1e-9);
        }
    }

    #[test]
    fn unconstrained_norm_is_zero() {
        let mut p = QpProblem::new(3);
        for i in 0..3 {
            p.quadratic[i][i] = 2.0;
        }
        let out = solve_qp(&p).unwrap();
        assert!(out.objective.abs() < 1e-14);
        assert!(norm_inf(&out.primal) < 1e-12);
    }

    #[test]
    fn semidefinite_with_linear_ray_blocked_by_bound() {
        // min x^2 - y, y <= 4
        let mut p = QpProblem::new(2);
        p.quadratic[0][0] = 2.0;
        p.linear = vec![0.0, -1.0];
        p.upper[1] = 4.0;
        let out = solve_qp(&p).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert!((out.primal[1] - 4.0).abs() < 1e-12);
        assert!((out.reduced_costs[1] + 1.0).abs() < 1e-12);
        // Without the bound the ray is unbounded.
        p.upper[1] = f64::INFINITY;
        assert_eq!(solve_qp(&p).unwrap().status, Status::Unbounded);
    }

    #[test]
    fn inequality_constrained_quadratic() {
        // min (x-2)^2 + (y-2)^2, x + y <= 2, x >= 0, y >= 0.5
        let mut p = QpProblem::new(2);
        p.quadratic = vec![vec![2.0, 0.0], vec![0.0, 2.0]];
        p.linear = vec![-4.0, -4.0];
        p.rows.push(LinearRow::le(vec![1.0, 1.0], 2.0));
        p.lower = vec![0.0, 0.5];
        let out = solve_qp(&p).unwrap();
        assert!((out.primal[0] - 1.0).abs() < 1e-10);
        assert!((out.primal[1] - 1.0).abs() < 1e-10);
        assert!((out.duals[0] + 2.0).abs() < 1e-9);
        assert!(kkt_residual(&p, &out) < 1e-9);
    }

    #[test]
    fn infeasible_rows() {
        let mut p = QpProblem::new(1);
        p.quadratic[0][0] = 1.0;
        p.rows.push(LinearRow::le(vec![1.0], -1.0));
        p.rows.push(LinearRow::ge(vec![1.0], 0.0));
        assert_eq!(solve_qp(&p).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn barrier_fallback_agrees_with_active_set() {
        let mut p = QpProblem::new(2);
        p.quadratic = vec![vec![2.0, 0.5], vec![0.5, 1.0]];
        p.linear = vec![-1.0, -3.0];
        p.rows.push(LinearRow::le(vec![1.0, 2.0], 2.0));
        p.rows.push(LinearRow::eq(vec![1.0, -1.0], 0.1));
        p.lower = vec![-1.0, -1.0];
        p.upper = vec![1.0, 1.0];
        let active = solve_qp(&p).unwrap();
        let cons = normalize(&p);
        let q = DMatrix::from_fn(2, 2, |i, k| p.quadratic[i][k]);
        let c = DVector::from_column_slice(&p.linear);
        let fallback = barrier_fallback(&p, &cons, &q, &c, 0).unwrap();
        assert!((active.objective - fallback.objective).abs() < 1e-9);
        let r = kkt_residual(&p, &fallback);
        assert!(r < 1e-7, "{r} {fallback:?} {active:?}");
    }
}
