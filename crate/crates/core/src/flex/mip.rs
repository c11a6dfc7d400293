//! The active-set mixed-integer program behind the flexibility index.
//!
//! Continuous variables, in order: `theta, z, x, delta, s (J), lambda (J),
//! mu (I), aux`, followed by the activity binaries `y (J)`:
//!
//! ```text
//! min delta
//!   a_j . (theta, z, x) + s_j = rhs_j          j in J
//!   h_i . (theta, z, x)       = rhs_i          i in I
//!   sum_j lambda_j            = 1
//!   sum_j lambda_j a_j,k + sum_i mu_i h_i,k = 0 for every recourse and state k
//!   s_j <= U (1 - y_j),  lambda_j <= y_j
//!   theta in T(delta)
//! ```
//!
//! Polyhedral sets give LP node relaxations. A quadratic member whose level
//! is the only place `delta` appears turns each node into a QP minimizing
//! the quadratic form. A quadratic member combined with `delta`-scaled
//! linear rows is handled by bisection on `delta` with a QP per probe.

use crate::error::{FlexError, Result};
use crate::model::LinearSystem;
use crate::sets::{CompiledSet, QuadraticRow};
use crate::solver::{
    branch_and_bound, solve_lp, solve_qp, BnbConfig, BnbOutcome, BnbStatus, LinearRow, LpProblem, QpProblem,
    Relaxation, SolveOutcome, SolverError, Status,
};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub nt: usize,
    pub nz: usize,
    pub nx: usize,
    pub nj: usize,
    pub ni: usize,
    pub delta: usize,
    pub s: usize,
    pub lam: usize,
    pub mu: usize,
    pub aux: usize,
    pub y: usize,
    pub n: usize,
}

impl Layout {
    fn new(system: &LinearSystem, set: &CompiledSet) -> Self {
        let (nt, nz, nx) = (system.n_theta(), system.n_z(), system.n_x());
        let nj = system.inequalities.len();
        let ni = system.equalities.len();
        let delta = nt + nz + nx;
        let s = delta + 1;
        let lam = s + nj;
        let mu = lam + nj;
        let aux = mu + ni;
        let y = aux + set.n_aux;
        Self {
            nt,
            nz,
            nx,
            nj,
            ni,
            delta,
            s,
            lam,
            mu,
            aux,
            y,
            n: y + nj,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Linear,
    Quadratic,
    Bisection,
}

pub(crate) struct KktModel<'a> {
    pub layout: Layout,
    base: LpProblem,
    quadratic: Option<&'a QuadraticRow>,
    mode: Mode,
    /// Binaries pinned to zero (vacuous rows, alternate-optima sweeps).
    pinned_off: Vec<bool>,
}

/// Everything the flexibility index needs from one solved MIP.
#[derive(Debug, Clone)]
pub(crate) struct MipSolution {
    pub f: f64,
    pub primal: Vec<f64>,
    pub y: Vec<bool>,
    pub nodes: usize,
    pub gap: f64,
    pub status: BnbStatus,
    pub history: Vec<f64>,
}

impl<'a> KktModel<'a> {
    pub fn new(system: &LinearSystem, set: &'a CompiledSet, big_m: f64, pinned: &[usize]) -> Self {
        let l = Layout::new(system, set);
        let mut lp = LpProblem::new(l.n);
        lp.objective[l.delta] = 1.0;
        let stack = |c: &crate::model::AffineConstraint| {
            let mut row = vec![0.0; l.n];
            row[..l.delta].copy_from_slice(&c.stacked());
            row
        };
        for (j, c) in system.inequalities.iter().enumerate() {
            let mut row = stack(c);
            row[l.s + j] = 1.0;
            lp.add_row(LinearRow::eq(row, c.rhs));
        }
        for c in &system.equalities {
            lp.add_row(LinearRow::eq(stack(c), c.rhs));
        }
        let mut row = vec![0.0; l.n];
        for j in 0..l.nj {
            row[l.lam + j] = 1.0;
        }
        lp.add_row(LinearRow::eq(row, 1.0));
        for k in 0..l.nz + l.nx {
            let coef = |c: &crate::model::AffineConstraint| {
                if k < l.nz {
                    c.a_z[k]
                } else {
                    c.a_x[k - l.nz]
                }
            };
            let mut row = vec![0.0; l.n];
            for (j, c) in system.inequalities.iter().enumerate() {
                row[l.lam + j] = coef(c);
            }
            for (i, c) in system.equalities.iter().enumerate() {
                row[l.mu + i] = coef(c);
            }
            lp.add_row(LinearRow::eq(row, 0.0));
        }
        for j in 0..l.nj {
            let mut row = vec![0.0; l.n];
            row[l.s + j] = 1.0;
            row[l.y + j] = big_m;
            lp.add_row(LinearRow::le(row, big_m));
            let mut row = vec![0.0; l.n];
            row[l.lam + j] = 1.0;
            row[l.y + j] = -1.0;
            lp.add_row(LinearRow::le(row, 0.0));
        }
        for r in &set.rows {
            let mut row = vec![0.0; l.n];
            row[..l.nt].copy_from_slice(&r.theta);
            row[l.delta] = r.delta;
            for &(k, c) in &r.aux {
                row[l.aux + k] += c;
            }
            lp.add_row(LinearRow::le(row, r.rhs));
        }
        lp.set_bounds(l.delta, 0.0, f64::INFINITY);
        for j in 0..l.nj {
            lp.set_bounds(l.s + j, 0.0, f64::INFINITY);
            lp.set_bounds(l.lam + j, 0.0, f64::INFINITY);
            lp.set_bounds(l.y + j, 0.0, 1.0);
        }
        for k in 0..set.n_aux {
            lp.set_bounds(l.aux + k, set.aux_lower[k], set.aux_upper[k]);
        }
        let mut pinned_off = vec![false; l.nj];
        for j in 0..l.nj {
            if system.is_vacuous(j) {
                pinned_off[j] = true;
            }
        }
        for &j in pinned {
            pinned_off[j] = true;
        }
        let mode = match (&set.quadratic, set.linear_uses_delta()) {
            (None, _) => Mode::Linear,
            (Some(_), false) => Mode::Quadratic,
            (Some(_), true) => Mode::Bisection,
        };
        Self {
            layout: l,
            base: lp,
            quadratic: set.quadratic.as_ref(),
            mode,
            pinned_off,
        }
    }

    fn node_lp(&self, fix: &[Option<bool>]) -> LpProblem {
        let l = &self.layout;
        let mut lp = self.base.clone();
        for j in 0..l.nj {
            let v = if self.pinned_off[j] { Some(false) } else { fix[j] };
            // Fixed binaries also pin s or lambda directly: through the
            // big-M row alone, s_j = 0 only holds to about U * 1e-14.
            match v {
                Some(true) => {
                    lp.set_bounds(l.y + j, 1.0, 1.0);
                    lp.set_bounds(l.s + j, 0.0, 0.0);
                }
                Some(false) => {
                    lp.set_bounds(l.y + j, 0.0, 0.0);
                    lp.set_bounds(l.lam + j, 0.0, 0.0);
                }
                None => {
                    lp.set_bounds(l.y + j, 0.0, 1.0);
                }
            }
        }
        lp
    }

    fn qp_of(&self, lp: LpProblem, q: &QuadraticRow) -> QpProblem {
        let l = &self.layout;
        let mut qp = QpProblem::new(l.n);
        for a in 0..l.nt {
            for b in 0..l.nt {
                qp.quadratic[a][b] = 2.0 * q.matrix[a][b];
            }
            qp.linear[a] = -2.0 * (0..l.nt).map(|b| q.matrix[a][b] * q.mean[b]).sum::<f64>();
        }
        qp.rows = lp.rows;
        qp.lower = lp.lower;
        qp.upper = lp.upper;
        qp
    }

    fn quadratic_value(&self, v: &[f64]) -> f64 {
        self.quadratic.map_or(0.0, |q| q.value(&v[..self.layout.nt]))
    }

    fn solved(&self, bound: f64, primal: Vec<f64>) -> Relaxation<Vec<f64>> {
        let l = &self.layout;
        Relaxation::Solved {
            bound,
            binaries: primal[l.y..l.y + l.nj].to_vec(),
            payload: primal,
        }
    }

    fn check(out: &SolveOutcome, what: &str) -> std::result::Result<bool, SolverError> {
        match out.status {
            Status::Optimal => Ok(true),
            Status::Infeasible => Ok(false),
            Status::Unbounded => Err(SolverError::NumericalBreakdown(format!(
                "{what} relaxation is unbounded"
            ))),
            Status::IterationLimit => Err(SolverError::NumericalBreakdown(format!(
                "{what} relaxation hit the iteration limit"
            ))),
        }
    }

    pub fn relax(&self, fix: &[Option<bool>]) -> std::result::Result<Relaxation<Vec<f64>>, SolverError> {
        let lp = self.node_lp(fix);
        match self.mode {
            Mode::Linear => {
                let out = solve_lp(&lp)?;
                if !Self::check(&out, "LP")? {
                    return Ok(Relaxation::Infeasible);
                }
                let d = out.primal[self.layout.delta].max(0.0);
                Ok(self.solved(d, out.primal))
            }
            Mode::Quadratic => {
                let q = self.quadratic.expect("quadratic mode");
                let mut lp = lp;
                lp.set_bounds(self.layout.delta, 0.0, 0.0);
                let out = solve_qp(&self.qp_of(lp, q))?;
                if !Self::check(&out, "QP")? {
                    return Ok(Relaxation::Infeasible);
                }
                let level = self.quadratic_value(&out.primal);
                Ok(self.solved(q.delta_of(level), out.primal))
            }
            Mode::Bisection => self.bisect(lp),
        }
    }

    /// Minimize `delta` with both the quadratic and the scaled linear rows.
    fn bisect(&self, lp: LpProblem) -> std::result::Result<Relaxation<Vec<f64>>, SolverError> {
        let q = self.quadratic.expect("bisection mode");
        let d = self.layout.delta;
        let lin = solve_lp(&lp)?;
        if !Self::check(&lin, "LP")? {
            return Ok(Relaxation::Infeasible);
        }
        let free = solve_qp(&self.qp_of(lp.clone(), q))?;
        if !Self::check(&free, "QP")? {
            return Ok(Relaxation::Infeasible);
        }
        let lower = lin.primal[d].max(q.delta_of(self.quadratic_value(&free.primal)));
        let probe = |delta: f64| -> std::result::Result<Option<Vec<f64>>, SolverError> {
            let mut fixed = lp.clone();
            fixed.set_bounds(d, delta, delta);
            let out = solve_qp(&self.qp_of(fixed, q))?;
            if !Self::check(&out, "QP")? {
                return Ok(None);
            }
            let level = self.quadratic_value(&out.primal);
            let cap = q.level_of(delta);
            Ok((level <= cap + 1e-12 * (1.0 + cap)).then_some(out.primal))
        };
        if let Some(p) = probe(lower)? {
            return Ok(self.solved(lower, p));
        }
        let mut lo = lower;
        let mut hi = lower.max(1e-6) * 2.0;
        let mut best = None;
        for _ in 0..200 {
            if let Some(p) = probe(hi)? {
                best = Some(p);
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
        let Some(mut best) = best else {
            return Ok(Relaxation::Infeasible);
        };
        for _ in 0..200 {
            if hi - lo <= 1e-12 * (1.0 + hi) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            match probe(mid)? {
                Some(p) => {
                    hi = mid;
                    best = p;
                }
                None => lo = mid,
            }
        }
        Ok(self.solved(hi, best))
    }

    pub fn solve(&self, cfg: &BnbConfig) -> Result<Option<MipSolution>> {
        let nj = self.layout.nj;
        let out: BnbOutcome<Vec<f64>> = branch_and_bound(nj, cfg, |fix| self.relax(fix))?;
        let Some(inc) = out.incumbent else {
            return match out.status {
                BnbStatus::NodeLimit => Err(FlexError::Solver(SolverError::NumericalBreakdown(format!(
                    "node limit {} reached before any incumbent",
                    cfg.node_limit
                )))),
                _ => Ok(None),
            };
        };
        // An incumbent found with free binaries inherits the big-M precision
        // floor; re-solve it with the assignment fixed.
        let fix: Vec<Option<bool>> = inc.binaries.iter().map(|&b| Some(b)).collect();
        let (f, primal) = match self.relax(&fix)? {
            Relaxation::Solved { bound, payload, .. } if (bound - inc.objective).abs() <= 1e-9 * (1.0 + inc.objective.abs()) => {
                (bound, payload)
            }
            _ => (inc.objective, inc.payload),
        };
        Ok(Some(MipSolution {
            f,
            primal,
            y: inc.binaries,
            nodes: out.nodes,
            gap: out.gap,
            status: out.status,
            history: out.history,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AffineConstraint;
    use crate::sets::UncertaintySetSpec;

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
    fn ellipsoid_and_box_on_design_a() {
        let sys = design_a();
        let e = UncertaintySetSpec::Ellipsoid {
            mean: vec![4.0, 5.0],
            covariance: vec![vec![2.0, 1.0], vec![1.0, 3.0]],
        }
        .compile()
        .unwrap();
        let m = KktModel::new(&sys, &e, 1e5, &[]);
        let sol = m.solve(&BnbConfig::default()).unwrap().unwrap();
        assert!((sol.f - 25.0 / 7.0).abs() < 1e-9);
        assert_eq!(sol.y, vec![true, false, false, false]);

        let b = UncertaintySetSpec::Hyperbox {
            mean: vec![4.0, 5.0],
            dev_minus: vec![4.243, 5.196],
            dev_plus: vec![4.243, 5.196],
        }
        .compile()
        .unwrap();
        let sol = KktModel::new(&sys, &b, 1e5, &[]).solve(&BnbConfig::default()).unwrap().unwrap();
        assert!((sol.f - 5.0 / (4.243 + 5.196)).abs() < 1e-9);
    }

    #[test]
    fn bisection_matches_box_when_box_binds() {
        // Ellipsoid far larger than the box: the box decides.
        let sys = design_a();
        let set = UncertaintySetSpec::Intersection {
            members: vec![
                UncertaintySetSpec::Ellipsoid {
                    mean: vec![4.0, 5.0],
                    covariance: vec![vec![100.0, 0.0], vec![0.0, 100.0]],
                },
                UncertaintySetSpec::PNorm {
                    mean: vec![4.0, 5.0],
                    p: crate::sets::PNorm::LInf,
                },
            ],
        }
        .compile()
        .unwrap();
        let sol = KktModel::new(&sys, &set, 1e5, &[]).solve(&BnbConfig::default()).unwrap().unwrap();
        // linf alone: min over f1 (5/2), f3 (4), f4 (5), f2: (2 - 4 + 10)/3 = 8/3
        assert!((sol.f - 2.5).abs() < 1e-9, "{}", sol.f);
    }
}
