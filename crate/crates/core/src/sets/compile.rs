//! Lowering of set specifications to rows over `(theta, delta, aux)`.

use nalgebra::DMatrix;

use super::{cholesky, PNorm, UncertaintySetSpec};
use crate::error::Result;
use crate::solver::{solve_lp, LinearRow, LpProblem, Status};

/// `theta_coeffs . theta + delta_coeff * delta + sum aux_coeffs <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct SetRow {
    pub theta: Vec<f64>,
    pub delta: f64,
    /// Sparse `(aux index, coefficient)` pairs.
    pub aux: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadraticKind {
    /// `w' M w <= delta`
    Ellipsoid,
    /// `w' w <= delta^2`
    L2,
}

/// The single convex quadratic row `(theta - mean)' M (theta - mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticRow {
    pub kind: QuadraticKind,
    pub mean: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
}

impl QuadraticRow {
    pub fn value(&self, theta: &[f64]) -> f64 {
        let w: Vec<f64> = theta.iter().zip(&self.mean).map(|(t, m)| t - m).collect();
        self.matrix
            .iter()
            .zip(&w)
            .map(|(row, wi)| wi * row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    /// Convert a quadratic level `q` to the set's `delta` scale.
    pub fn delta_of(&self, q: f64) -> f64 {
        match self.kind {
            QuadraticKind::Ellipsoid => q,
            QuadraticKind::L2 => q.max(0.0).sqrt(),
        }
    }

    pub fn level_of(&self, delta: f64) -> f64 {
        match self.kind {
            QuadraticKind::Ellipsoid => delta,
            QuadraticKind::L2 => delta * delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledSet {
    pub n_theta: usize,
    pub n_aux: usize,
    pub aux_lower: Vec<f64>,
    pub aux_upper: Vec<f64>,
    pub rows: Vec<SetRow>,
    pub quadratic: Option<QuadraticRow>,
}

impl CompiledSet {
    fn new(n_theta: usize) -> Self {
        Self {
            n_theta,
            n_aux: 0,
            aux_lower: Vec::new(),
            aux_upper: Vec::new(),
            rows: Vec::new(),
            quadratic: None,
        }
    }

    fn add_aux(&mut self, count: usize, lower: f64) -> usize {
        let first = self.n_aux;
        self.n_aux += count;
        self.aux_lower.extend(std::iter::repeat_n(lower, count));
        self.aux_upper.extend(std::iter::repeat_n(f64::INFINITY, count));
        first
    }

    fn unit(&self, i: usize, v: f64) -> Vec<f64> {
        let mut t = vec![0.0; self.n_theta];
        t[i] = v;
        t
    }

    /// Rows `e_i >= |theta_i - mean_i|`; returns the first aux index.
    fn abs_aux(&mut self, mean: &[f64]) -> usize {
        let e = self.add_aux(mean.len(), 0.0);
        for (i, &m) in mean.iter().enumerate() {
            for sign in [1.0, -1.0] {
                self.rows.push(SetRow {
                    theta: self.unit(i, sign),
                    delta: 0.0,
                    aux: vec![(e + i, -1.0)],
                    rhs: sign * m,
                });
            }
        }
        e
    }

    /// Whether any linear row scales with `delta`.
    pub fn linear_uses_delta(&self) -> bool {
        self.rows.iter().any(|r| r.delta != 0.0)
    }

    /// Decide `theta in T(delta)` from the compiled rows, finding the
    /// auxiliaries by LP.
    pub fn satisfiable(&self, theta: &[f64], delta: f64) -> Result<bool> {
        if let Some(q) = &self.quadratic {
            if q.value(theta) > q.level_of(delta) * (1.0 + 1e-12) + 1e-12 {
                return Ok(false);
            }
        }
        let mut lp = LpProblem::new(self.n_aux);
        for k in 0..self.n_aux {
            lp.set_bounds(k, self.aux_lower[k], self.aux_upper[k]);
        }
        let mut fixed_ok = true;
        for r in &self.rows {
            let rhs = r.rhs - r.delta * delta - r.theta.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
            if r.aux.is_empty() {
                fixed_ok &= rhs >= -1e-12 * (1.0 + r.rhs.abs());
                continue;
            }
            let mut coeffs = vec![0.0; self.n_aux];
            for &(k, c) in &r.aux {
                coeffs[k] += c;
            }
            lp.add_row(LinearRow::le(coeffs, rhs + 1e-12 * (1.0 + rhs.abs())));
        }
        if !fixed_ok {
            return Ok(false);
        }
        if self.n_aux == 0 {
            return Ok(true);
        }
        Ok(solve_lp(&lp)?.status == Status::Optimal)
    }
}

impl UncertaintySetSpec {
    /// Lower the set to linear rows plus at most one quadratic row.
    pub fn compile(&self) -> Result<CompiledSet> {
        self.validate()?;
        let spec = self.resolved()?;
        let n = spec.dim().unwrap_or(0);
        let mut out = CompiledSet::new(n);
        for leaf in spec.leaves() {
            compile_leaf(leaf, &mut out)?;
        }
        Ok(out)
    }
}

fn compile_leaf(leaf: &UncertaintySetSpec, out: &mut CompiledSet) -> Result<()> {
    let n = out.n_theta;
    match leaf {
        UncertaintySetSpec::Ellipsoid { mean, covariance } => {
            let chol = cholesky(covariance)?;
            let inv = chol.inverse();
            let inv = (&inv + inv.transpose()) * 0.5;
            out.quadratic = Some(QuadraticRow {
                kind: QuadraticKind::Ellipsoid,
                mean: mean.clone(),
                matrix: rows_of(&inv),
            });
        }
        UncertaintySetSpec::PNorm { mean, p: PNorm::L2 } => {
            out.quadratic = Some(QuadraticRow {
                kind: QuadraticKind::L2,
                mean: mean.clone(),
                matrix: rows_of(&DMatrix::identity(n, n)),
            });
        }
        UncertaintySetSpec::Hyperbox { mean, dev_minus, dev_plus } => {
            for i in 0..n {
                out.rows.push(SetRow {
                    theta: out.unit(i, 1.0),
                    delta: -dev_plus[i],
                    aux: vec![],
                    rhs: mean[i],
                });
                out.rows.push(SetRow {
                    theta: out.unit(i, -1.0),
                    delta: -dev_minus[i],
                    aux: vec![],
                    rhs: -mean[i],
                });
            }
        }
        UncertaintySetSpec::PNorm { mean, p: PNorm::LInf } => {
            for i in 0..n {
                for sign in [1.0, -1.0] {
                    out.rows.push(SetRow {
                        theta: out.unit(i, sign),
                        delta: -1.0,
                        aux: vec![],
                        rhs: sign * mean[i],
                    });
                }
            }
        }
        UncertaintySetSpec::PNorm { mean, p: PNorm::L1 } => {
            let e = out.abs_aux(mean);
            out.rows.push(SetRow {
                theta: vec![0.0; n],
                delta: -1.0,
                aux: (0..n).map(|i| (e + i, 1.0)).collect(),
                rhs: 0.0,
            });
        }
        UncertaintySetSpec::CVaRNorm { mean, alpha } => {
            let e = out.abs_aux(mean);
            let t = out.add_aux(1, 0.0);
            let m = out.add_aux(n, 0.0);
            // t (1 - alpha) n + sum m_i <= delta
            let mut aux = vec![(t, (1.0 - alpha) * n as f64)];
            aux.extend((0..n).map(|i| (m + i, 1.0)));
            out.rows.push(SetRow {
                theta: vec![0.0; n],
                delta: -1.0,
                aux,
                rhs: 0.0,
            });
            // e_i - t - m_i <= 0
            for i in 0..n {
                out.rows.push(SetRow {
                    theta: vec![0.0; n],
                    delta: 0.0,
                    aux: vec![(e + i, 1.0), (t, -1.0), (m + i, -1.0)],
                    rhs: 0.0,
                });
            }
        }
        UncertaintySetSpec::Halfspaces { a, b } => {
            for (row, &bi) in a.iter().zip(b) {
                out.rows.push(SetRow {
                    theta: row.clone(),
                    delta: 0.0,
                    aux: vec![],
                    rhs: bi,
                });
            }
        }
        UncertaintySetSpec::Intersection { .. } | UncertaintySetSpec::Nonnegative { .. } => {
            unreachable!("leaves are resolved")
        }
    }
    Ok(())
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}
