//! Two-phase dense tableau simplex.
//!
//! Variables are mapped to a non-negative standard form (shifted, negated or
//! split), finite ranges become explicit rows, and every row gets either a
//! slack or an artificial column so the initial basis is the identity. The
//! entering rule is Dantzig's until `3 * (rows + cols)` degenerate pivots
//! have occurred, after which Bland's rule takes over for the rest of the
//! solve.

use nalgebra::DMatrix;

use super::dense::lu_solve_multi;
use super::{LpProblem, Sense, SolveOutcome, SolverError, Status};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
enum ColMap {
    /// `x = lb + p`
    Shift { lb: f64 },
    /// `x = ub - p`
    Neg { ub: f64 },
    /// `x = p - q`, the `q` column directly follows `p`.
    Split,
}

struct StdRow {
    coeffs: Vec<f64>,
    sense: Sense,
    rhs: f64,
    /// Multiplier mapping the standard-form dual back to the source row;
    /// `None` for rows generated from variable ranges.
    origin: Option<(usize, f64)>,
}

struct Tableau {
    /// `m` constraint rows plus the reduced-cost row, `ncols + 1` wide.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    m: usize,
    ncols: usize,
    n_art_start: usize,
    degenerate: usize,
    bland: bool,
    bland_after: usize,
    iterations: usize,
    max_iterations: usize,
}

enum PhaseResult {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.t[r][self.ncols]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        let width = self.ncols + 1;
        for c in 0..width {
            self.t[row][c] /= p;
        }
        self.t[row][col] = 1.0;
        let pivot_row = self.t[row].clone();
        for r in 0..=self.m {
            if r == row {
                continue;
            }
            let f = self.t[r][col];
            if f == 0.0 {
                continue;
            }
            let target = &mut self.t[r];
            for c in 0..width {
                target[c] -= f * pivot_row[c];
            }
            target[col] = 0.0;
        }
        self.basis[row] = col;
    }

    fn choose_entering(&self, allow_artificial: bool) -> Option<usize> {
        let limit = if allow_artificial {
            self.ncols
        } else {
            self.n_art_start
        };
        let costs = &self.t[self.m];
        if self.bland {
            (0..limit).find(|&k| costs[k] < -COST_TOL)
        } else {
            let mut best = None;
            let mut best_val = -COST_TOL;
            for (k, &d) in costs.iter().enumerate().take(limit) {
                if d < best_val {
                    best_val = d;
                    best = Some(k);
                }
            }
            best
        }
    }

    fn choose_leaving(&self, col: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.m {
            let a = self.t[r][col];
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = self.rhs(r).max(0.0) / a;
            best = match best {
                None => Some((r, ratio)),
                Some((br, bratio)) => {
                    let tie = (ratio - bratio).abs() <= 1e-12 * (1.0 + bratio.abs());
                    let better = if tie {
                        if self.bland {
                            self.basis[r] < self.basis[br]
                        } else {
                            a > self.t[br][col]
                        }
                    } else {
                        ratio < bratio
                    };
                    if better {
                        Some((r, ratio))
                    } else {
                        Some((br, bratio))
                    }
                }
            };
        }
        best.map(|(r, _)| r)
    }

    fn run(&mut self, allow_artificial: bool) -> PhaseResult {
        loop {
            if self.iterations >= self.max_iterations {
                return PhaseResult::IterationLimit;
            }
            let Some(col) = self.choose_entering(allow_artificial) else {
                return PhaseResult::Optimal;
            };
            let Some(row) = self.choose_leaving(col) else {
                return PhaseResult::Unbounded;
            };
            if self.rhs(row).abs() <= 1e-12 {
                self.degenerate += 1;
                if self.degenerate > self.bland_after {
                    self.bland = true;
                }
            }
            self.pivot(row, col);
            self.iterations += 1;
        }
    }

    fn set_costs(&mut self, cost: &[f64]) {
        let width = self.ncols + 1;
        let mut row = vec![0.0; width];
        row[..self.ncols].copy_from_slice(&cost[..self.ncols]);
        for r in 0..self.m {
            let cb = cost[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            for c in 0..width {
                row[c] -= cb * self.t[r][c];
            }
        }
        self.t[self.m] = row;
    }
}

/// Solve a linear program.
pub fn solve_lp(p: &LpProblem) -> Result<SolveOutcome, SolverError> {
    p.check()?;
    let n = p.num_vars();
    let m_orig = p.rows.len();

    // Standard-form columns.
    let mut maps = Vec::with_capacity(n);
    let mut col_of = Vec::with_capacity(n);
    let mut ns = 0;
    for j in 0..n {
        let (lb, ub) = (p.lower[j], p.upper[j]);
        if lb.is_finite() && ub.is_finite() && ub < lb - FEAS_TOL {
            return Ok(SolveOutcome::with_status(Status::Infeasible, n, m_orig, 0));
        }
        col_of.push(ns);
        if lb.is_finite() {
            maps.push(ColMap::Shift { lb });
            ns += 1;
        } else if ub.is_finite() {
            maps.push(ColMap::Neg { ub });
            ns += 1;
        } else {
            maps.push(ColMap::Split);
            ns += 2;
        }
    }

    let mut std_rows: Vec<StdRow> = Vec::with_capacity(m_orig + n);
    for (i, row) in p.rows.iter().enumerate() {
        let mut coeffs = vec![0.0; ns];
        let mut rhs = row.rhs;
        for j in 0..n {
            let a = row.coeffs[j];
            if a == 0.0 {
                continue;
            }
            let c = col_of[j];
            match maps[j] {
                ColMap::Shift { lb } => {
                    coeffs[c] += a;
                    rhs -= a * lb;
                }
                ColMap::Neg { ub } => {
                    coeffs[c] -= a;
                    rhs -= a * ub;
                }
                ColMap::Split => {
                    coeffs[c] += a;
                    coeffs[c + 1] -= a;
                }
            }
        }
        std_rows.push(StdRow {
            coeffs,
            sense: row.sense,
            rhs,
            origin: Some((i, 1.0)),
        });
    }
    for j in 0..n {
        if let ColMap::Shift { lb } = maps[j] {
            if p.upper[j].is_finite() {
                let mut coeffs = vec![0.0; ns];
                coeffs[col_of[j]] = 1.0;
                std_rows.push(StdRow {
                    coeffs,
                    sense: Sense::Le,
                    rhs: (p.upper[j] - lb).max(0.0),
                    origin: None,
                });
            }
        }
    }

    // Row scaling and sign normalization so every rhs is non-negative.
    for row in std_rows.iter_mut() {
        let scale = row.coeffs.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
        let mut factor = if scale > 0.0 { 1.0 / scale } else { 1.0 };
        if row.rhs < 0.0 {
            factor = -factor;
            row.sense = match row.sense {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
        for c in row.coeffs.iter_mut() {
            *c *= factor;
        }
        row.rhs *= factor;
        if let Some((i, _)) = row.origin {
            row.origin = Some((i, factor));
        }
    }

    // Empty rows can be decided immediately.
    for row in &std_rows {
        if row.coeffs.iter().all(|&c| c == 0.0) {
            let ok = match row.sense {
                Sense::Le => row.rhs >= -FEAS_TOL,
                Sense::Ge => row.rhs <= FEAS_TOL,
                Sense::Eq => row.rhs.abs() <= FEAS_TOL,
            };
            if !ok {
                return Ok(SolveOutcome::with_status(Status::Infeasible, n, m_orig, 0));
            }
        }
    }

    let m = std_rows.len();
    let n_slack = std_rows.iter().filter(|r| r.sense != Sense::Eq).count();
    let n_art = std_rows.iter().filter(|r| r.sense != Sense::Le).count();
    let n_art_start = ns + n_slack;
    let ncols = ns + n_slack + n_art;

    let mut t = vec![vec![0.0; ncols + 1]; m + 1];
    let mut basis = vec![0; m];
    let mut init_col = vec![0; m];
    let mut next_slack = ns;
    let mut next_art = n_art_start;
    for (r, row) in std_rows.iter().enumerate() {
        t[r][..ns].copy_from_slice(&row.coeffs);
        t[r][ncols] = row.rhs;
        match row.sense {
            Sense::Le => {
                t[r][next_slack] = 1.0;
                basis[r] = next_slack;
                init_col[r] = next_slack;
                next_slack += 1;
            }
            Sense::Ge => {
                t[r][next_slack] = -1.0;
                next_slack += 1;
                t[r][next_art] = 1.0;
                basis[r] = next_art;
                init_col[r] = next_art;
                next_art += 1;
            }
            Sense::Eq => {
                t[r][next_art] = 1.0;
                basis[r] = next_art;
                init_col[r] = next_art;
                next_art += 1;
            }
        }
    }
    let a0: Vec<Vec<f64>> = t[..m].iter().map(|r| r[..ncols].to_vec()).collect();
    let b0: Vec<f64> = t[..m].iter().map(|r| r[ncols]).collect();

    let mut tab = Tableau {
        t,
        basis,
        m,
        ncols,
        n_art_start,
        degenerate: 0,
        bland: false,
        bland_after: 3 * (m + ncols),
        iterations: 0,
        max_iterations: 20_000 + 200 * (m + ncols),
    };

    // Phase 1.
    if n_art > 0 {
        let mut cost1 = vec![0.0; ncols];
        for c in cost1.iter_mut().skip(n_art_start) {
            *c = 1.0;
        }
        tab.set_costs(&cost1);
        match tab.run(true) {
            PhaseResult::IterationLimit => {
                return Ok(SolveOutcome::with_status(
                    Status::IterationLimit,
                    n,
                    m_orig,
                    tab.iterations,
                ))
            }
            PhaseResult::Unbounded => {
                return Err(SolverError::NumericalBreakdown(
                    "phase 1 reported an unbounded ray".into(),
                ))
            }
            PhaseResult::Optimal => {}
        }
        let infeas = -tab.t[m][ncols];
        let bscale = b0.iter().fold(1.0_f64, |a, b| a.max(b.abs()));
        if infeas > FEAS_TOL * bscale {
            return Ok(SolveOutcome::with_status(
                Status::Infeasible,
                n,
                m_orig,
                tab.iterations,
            ));
        }
        // Drive remaining artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] < n_art_start {
                continue;
            }
            let col = (0..n_art_start)
                .filter(|&k| tab.t[r][k].abs() > PIVOT_TOL)
                .max_by(|&a, &b| tab.t[r][a].abs().total_cmp(&tab.t[r][b].abs()));
            if let Some(col) = col {
                tab.pivot(r, col);
            }
        }
    }

    // Phase 2.
    let mut cost2 = vec![0.0; ncols];
    for j in 0..n {
        let c = p.objective[j];
        let k = col_of[j];
        match maps[j] {
            ColMap::Shift { .. } => cost2[k] = c,
            ColMap::Neg { .. } => cost2[k] = -c,
            ColMap::Split => {
                cost2[k] = c;
                cost2[k + 1] = -c;
            }
        }
    }
    tab.set_costs(&cost2);
    tab.degenerate = 0;
    match tab.run(false) {
        PhaseResult::IterationLimit => {
            return Ok(SolveOutcome::with_status(
                Status::IterationLimit,
                n,
                m_orig,
                tab.iterations,
            ))
        }
        PhaseResult::Unbounded => {
            return Ok(SolveOutcome::with_status(
                Status::Unbounded,
                n,
                m_orig,
                tab.iterations,
            ))
        }
        PhaseResult::Optimal => {}
    }

    // Refine the basic solution and the duals from the original columns.
    let mut xs = vec![0.0; ncols];
    let mut y_std = vec![0.0; m];
    let bmat = DMatrix::from_fn(m, m, |r, c| a0[r][tab.basis[c]]);
    let rhs = DMatrix::from_fn(m, 1, |r, _| b0[r]);
    let cb = DMatrix::from_fn(m, 1, |r, _| cost2[tab.basis[r]]);
    match (
        lu_solve_multi(&bmat, &rhs, 1e-13),
        lu_solve_multi(&bmat.transpose(), &cb, 1e-13),
    ) {
        (Ok(xb), Ok(y)) => {
            for r in 0..m {
                xs[tab.basis[r]] = xb[(r, 0)];
                y_std[r] = y[(r, 0)];
            }
        }
        _ => {
            for r in 0..m {
                xs[tab.basis[r]] = tab.rhs(r);
                y_std[r] = -tab.t[m][init_col[r]];
            }
        }
    }

    let mut primal = vec![0.0; n];
    for j in 0..n {
        let k = col_of[j];
        primal[j] = match maps[j] {
            ColMap::Shift { lb } => lb + xs[k].max(0.0),
            ColMap::Neg { ub } => ub - xs[k].max(0.0),
            ColMap::Split => xs[k].max(0.0) - xs[k + 1].max(0.0),
        };
    }
    let mut duals = vec![0.0; m_orig];
    for (r, row) in std_rows.iter().enumerate() {
        if let Some((i, factor)) = row.origin {
            duals[i] = y_std[r] * factor;
        }
    }
    for (i, row) in p.rows.iter().enumerate() {
        // Clean sign noise on rows whose dual sign is fixed.
        match row.sense {
            Sense::Le if duals[i] > 0.0 => duals[i] = duals[i].min(0.0),
            Sense::Ge if duals[i] < 0.0 => duals[i] = duals[i].max(0.0),
            _ => {}
        }
    }
    let reduced_costs: Vec<f64> = (0..n)
        .map(|j| {
            p.objective[j]
                - p.rows
                    .iter()
                    .zip(&duals)
                    .map(|(row, y)| row.coeffs[j] * y)
                    .sum::<f64>()
        })
        .collect();
    let objective = super::dense::dot(&p.objective, &primal);
    Ok(SolveOutcome {
        status: Status::Optimal,
        primal,
        duals,
        reduced_costs,
        objective,
        iterations: tab.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::LinearRow;

    #[test]
    fn single_lower_bound_row() {
        let mut p = LpProblem::new(1);
        p.objective = vec![1.0];
        p.add_row(LinearRow::ge(vec![1.0], 1.0));
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert!((out.primal[0] - 1.0).abs() < 1e-12);
        assert!((out.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut p = LpProblem::new(1);
        p.add_row(LinearRow::le(vec![1.0], -1.0));
        p.set_bounds(0, 0.0, f64::INFINITY);
        assert_eq!(solve_lp(&p).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn free_direction_is_unbounded() {
        let mut p = LpProblem::new(2);
        p.objective = vec![-1.0, 0.0];
        p.add_row(LinearRow::le(vec![0.0, 1.0], 3.0));
        p.set_bounds(0, 0.0, f64::INFINITY);
        assert_eq!(solve_lp(&p).unwrap().status, Status::Unbounded);
    }

    #[test]
    fn bounded_variables_and_equalities() {
        // min -x - 2y  s.t. x + y = 3, 0 <= x <= 2, 0 <= y <= 2.5
        let mut p = LpProblem::new(2);
        p.objective = vec![-1.0, -2.0];
        p.add_row(LinearRow::eq(vec![1.0, 1.0], 3.0));
        p.set_bounds(0, 0.0, 2.0).set_bounds(1, 0.0, 2.5);
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert!((out.primal[0] - 0.5).abs() < 1e-12);
        assert!((out.primal[1] - 2.5).abs() < 1e-12);
        assert!((out.objective + 5.5).abs() < 1e-12);
        // Equality dual -1 and y at its upper bound with reduced cost -1.
        assert!((out.duals[0] + 1.0).abs() < 1e-12);
        assert!((out.reduced_costs[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_rhs_rows_and_upper_only_bounds() {
        // max x s.t. x <= -2 with x free above -inf
        let mut p = LpProblem::new(1);
        p.objective = vec![-1.0];
        p.add_row(LinearRow::le(vec![1.0], -2.0));
        let out = solve_lp(&p).unwrap();
        assert!((out.primal[0] + 2.0).abs() < 1e-12);
        let mut p = LpProblem::new(1);
        p.objective = vec![1.0];
        p.set_bounds(0, f64::NEG_INFINITY, 4.0);
        p.add_row(LinearRow::ge(vec![2.0], 3.0));
        let out = solve_lp(&p).unwrap();
        assert!((out.primal[0] - 1.5).abs() < 1e-12);
        assert!((out.duals[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut p = LpProblem::new(2);
        p.objective = vec![1.0, 1.0];
        p.add_row(LinearRow::eq(vec![1.0, 1.0], 2.0));
        p.add_row(LinearRow::eq(vec![2.0, 2.0], 4.0));
        p.set_bounds(0, 0.0, f64::INFINITY).set_bounds(1, 0.0, f64::INFINITY);
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert!((out.objective - 2.0).abs() < 1e-12);
    }
}
