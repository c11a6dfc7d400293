//! Small dense kernels shared by the solvers.

use nalgebra::{DMatrix, DVector};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Full Householder QR of an `n x k` matrix (`k <= n` not required).
///
/// Returns the orthogonal factor `Q` (`n x n`) and the number of columns
/// found independent. Columns are processed in order; a column whose
/// remaining norm falls below `tol * (1 + original norm)` is treated as
/// dependent and skipped, so the first `rank` columns of `Q` span the
/// processed columns and the rest span the orthogonal complement.
pub(crate) struct FullQr {
    pub q: DMatrix<f64>,
    pub rank: usize,
    /// Indices of the input columns that were kept, in processing order.
    pub kept: Vec<usize>,
    /// Upper-triangular factor restricted to the kept columns (`rank x rank`).
    pub r: DMatrix<f64>,
}

pub(crate) fn full_qr(a: &DMatrix<f64>, tol: f64) -> FullQr {
    let n = a.nrows();
    let k = a.ncols();
    let mut work = a.clone();
    let mut q = DMatrix::<f64>::identity(n, n);
    let mut rank = 0;
    let mut kept = Vec::new();
    for col in 0..k {
        if rank == n {
            break;
        }
        let orig_norm = work.column(col).norm();
        let tail_norm = work.view((rank, col), (n - rank, 1)).norm();
        if tail_norm <= tol * (1.0 + orig_norm) {
            continue;
        }
        // Householder vector for rows rank..n of this column.
        let x0 = work[(rank, col)];
        let alpha = if x0 >= 0.0 { -tail_norm } else { tail_norm };
        let mut v = DVector::<f64>::zeros(n - rank);
        for i in 0..n - rank {
            v[i] = work[(rank + i, col)];
        }
        v[0] -= alpha;
        let vnorm2 = v.norm_squared();
        if vnorm2 > 0.0 {
            // work <- (I - 2vv'/v'v) work on rows rank..n
            for c in 0..k {
                let mut s = 0.0;
                for i in 0..n - rank {
                    s += v[i] * work[(rank + i, c)];
                }
                let f = 2.0 * s / vnorm2;
                for i in 0..n - rank {
                    work[(rank + i, c)] -= f * v[i];
                }
            }
            // q <- q (I - 2vv'/v'v) on columns rank..n
            for row in 0..n {
                let mut s = 0.0;
                for i in 0..n - rank {
                    s += q[(row, rank + i)] * v[i];
                }
                let f = 2.0 * s / vnorm2;
                for i in 0..n - rank {
                    q[(row, rank + i)] -= f * v[i];
                }
            }
        }
        kept.push(col);
        rank += 1;
    }
    let mut r = DMatrix::<f64>::zeros(rank, rank);
    for (j, &kc) in kept.iter().enumerate() {
        for i in 0..=j {
            r[(i, j)] = work[(i, kc)];
        }
    }
    FullQr { q, rank, kept, r }
}

impl FullQr {
    /// Orthonormal basis of the complement of the kept columns' span.
    pub fn null_basis(&self) -> DMatrix<f64> {
        let n = self.q.nrows();
        self.q.columns(self.rank, n - self.rank).into_owned()
    }

    /// Least-squares solve `A_kept * coef = rhs` using the stored factors.
    pub fn solve_kept(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let qt_b = self.q.columns(0, self.rank).transpose() * rhs;
        back_substitute(&self.r, &qt_b)
    }
}

pub(crate) fn back_substitute(r: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = r.nrows();
    let mut x = DVector::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// Gaussian elimination with partial pivoting on a square system.
///
/// Fails with the offending pivot magnitude when any pivot falls below
/// `pivot_tol`.
pub(crate) fn lu_solve_multi(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    pivot_tol: f64,
) -> Result<DMatrix<f64>, f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    assert_eq!(n, b.nrows());
    let mut m = a.clone();
    let mut rhs = b.clone();
    for col in 0..n {
        let (piv_row, piv_val) = (col..n)
            .map(|r| (r, m[(r, col)].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_val < pivot_tol {
            return Err(piv_val);
        }
        m.swap_rows(col, piv_row);
        rhs.swap_rows(col, piv_row);
        for r in col + 1..n {
            let f = m[(r, col)] / m[(col, col)];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[(r, c)] -= f * m[(col, c)];
            }
            for c in 0..rhs.ncols() {
                rhs[(r, c)] -= f * rhs[(col, c)];
            }
        }
    }
    let mut x = DMatrix::<f64>::zeros(n, rhs.ncols());
    for c in 0..rhs.ncols() {
        for i in (0..n).rev() {
            let mut s = rhs[(i, c)];
            for j in i + 1..n {
                s -= m[(i, j)] * x[(j, c)];
            }
            x[(i, c)] = s / m[(i, i)];
        }
    }
    Ok(x)
}

/// Smallest pivot magnitude reached by column-pivoted elimination of an
/// `m x n` matrix, or `None` if every column yields a pivot.
pub(crate) fn column_rank_deficiency(a: &DMatrix<f64>, pivot_tol: f64) -> Option<f64> {
    let mut m = a.clone();
    let rows = m.nrows();
    let cols = m.ncols();
    let mut row = 0;
    for col in 0..cols {
        if row >= rows {
            return Some(0.0);
        }
        let (piv_row, piv_val) = (row..rows)
            .map(|r| (r, m[(r, col)].abs()))
            .fold((row, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_val < pivot_tol {
            return Some(piv_val.max(0.0));
        }
        m.swap_rows(row, piv_row);
        for r in row + 1..rows {
            let f = m[(r, col)] / m[(row, col)];
            for c in col..cols {
                m[(r, c)] -= f * m[(row, c)];
            }
        }
        row += 1;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_null_space_is_orthogonal_to_columns() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 2.0, 1.0, 0.0, 3.0, 1.0, 1.0]);
        let qr = full_qr(&a, 1e-12);
        assert_eq!(qr.rank, 2);
        let z = qr.null_basis();
        assert_eq!(z.ncols(), 2);
        let prod = a.transpose() * &z;
        assert!(prod.amax() < 1e-12);
        let ztz = z.transpose() * &z;
        assert!((ztz - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn qr_skips_dependent_columns_and_solves() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 0.0, 1.0, 1.0, 2.0, 0.0]);
        let qr = full_qr(&a, 1e-12);
        assert_eq!(qr.kept, vec![0, 2]);
        // a_kept * [1, 2] = [1, 2, 1]
        let coef = qr.solve_kept(&DVector::from_vec(vec![1.0, 2.0, 1.0]));
        assert!((coef[0] - 1.0).abs() < 1e-12 && (coef[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lu_reports_small_pivot() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        assert!(lu_solve_multi(&a, &b, 1e-10).is_err());
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let x = lu_solve_multi(&a, &b, 1e-10).unwrap();
        assert!((x[(0, 0)] - 0.2).abs() < 1e-14 && (x[(1, 0)] - 0.6).abs() < 1e-14);
    }
}
