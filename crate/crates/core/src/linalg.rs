//! Small dense matrices and pivoted Cholesky factorization.
//!
//! Model fits in this crate involve a handful of coefficients, so the
//! routines favor clarity and strict failure detection over tuned
//! performance: row-major storage, full diagonal pivoting, and explicit
//! errors instead of silent NaN propagation. Rank deficiency surfaces as
//! [`SingularError`] carrying the offending pivot so callers can report
//! which direction of the information matrix collapsed.

use thiserror::Error;

/// Relative pivot threshold for the rank test: a pivot below this fraction
/// of the largest initial diagonal entry marks the matrix as numerically
/// rank deficient.
pub const PIVOT_REL_TOL: f64 = 1e-12;

/// Rank deficiency detected during factorization.
#[derive(Debug, Clone, Error)]
#[error("matrix is numerically singular: pivot {pivot:.3e} at index {index} (rank {rank})")]
pub struct SingularError {
    /// Magnitude of the failing pivot.
    pub pivot: f64,
    /// Original row/column index of the failing pivot.
    pub index: usize,
    /// Number of pivots accepted before the failure.
    pub rank: usize,
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    /// Zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds a matrix by evaluating `f(row, col)` at every position.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from row slices; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Row `i` as a slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Matrix-vector product `A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// Maximum absolute entry, zero for an empty matrix.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Dot product of two equal-length slices.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cholesky factorization of a symmetric positive definite matrix with full
/// diagonal pivoting: `P A Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Mat,
    /// `perm[k]` is the original index of pivoted position `k`.
    perm: Vec<usize>,
}

impl Cholesky {
    /// Factors `a`, failing with [`SingularError`] as soon as a pivot falls
    /// below `PIVOT_REL_TOL` times the largest initial diagonal entry.
    ///
    /// Only the lower triangle of `a` is read.
    pub fn factor(a: &Mat) -> Result<Self, SingularError> {
        assert_eq!(a.rows, a.cols, "square matrix required");
        let n = a.rows;
        let mut work = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = (0..n).map(|i| work.at(i, i)).fold(0.0_f64, f64::max);
        for k in 0..n {
            let (j, piv) = (k..n)
                .map(|i| (i, work.at(i, i)))
                .fold((k, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if !(piv > PIVOT_REL_TOL * scale) || !piv.is_finite() {
                return Err(SingularError { pivot: piv, index: perm[j], rank: k });
            }
            swap_sym(&mut work, k, j);
            perm.swap(k, j);
            let lkk = piv.sqrt();
            work.set(k, k, lkk);
            for i in k + 1..n {
                let v = work.at(i, k) / lkk;
                work.set(i, k, v);
            }
            for jj in k + 1..n {
                let ljk = work.at(jj, k);
                for i in jj..n {
                    let v = work.at(i, jj) - work.at(i, k) * ljk;
                    work.set(i, jj, v);
                }
            }
        }
        Ok(Cholesky { l: work, perm })
    }

    /// Solves `A x = b` for the factored matrix.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows;
        assert_eq!(b.len(), n, "dimension mismatch");
        // Forward substitution on the permuted right-hand side.
        let mut z = vec![0.0; n];
        for i in 0..n {
            let mut s = b[self.perm[i]];
            for j in 0..i {
                s -= self.l.at(i, j) * z[j];
            }
            z[i] = s / self.l.at(i, i);
        }
        // Back substitution, then undo the permutation.
        let mut u = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = z[i];
            for j in i + 1..n {
                s -= self.l.at(j, i) * u[j];
            }
            u[i] = s / self.l.at(i, i);
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.perm[i]] = u[i];
        }
        x
    }

    /// Inverse of the factored matrix, symmetrized against roundoff.
    pub fn inverse(&self) -> Mat {
        let n = self.l.rows;
        let mut inv = Mat::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e);
            e[j] = 0.0;
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (inv.at(i, j) + inv.at(j, i));
                inv.set(i, j, s);
                inv.set(j, i, s);
            }
        }
        inv
    }
}

/// Solves the symmetric positive definite system `A x = b`.
pub fn solve_spd(a: &Mat, b: &[f64]) -> Result<Vec<f64>, SingularError> {
    Ok(Cholesky::factor(a)?.solve(b))
}

/// Inverse of a symmetric positive definite matrix.
pub fn inv_spd(a: &Mat) -> Result<Mat, SingularError> {
    Ok(Cholesky::factor(a)?.inverse())
}

/// Factor `F` with `F Fᵀ = A` for a symmetric positive *semi*-definite `A`,
/// used to draw from a multivariate normal with covariance `A`.
///
/// Pivots at or below the rank threshold terminate the factorization and the
/// remaining columns stay zero, so a rank-deficient covariance yields draws
/// supported on its column space instead of an error.
pub fn psd_root(a: &Mat) -> Mat {
    assert_eq!(a.rows, a.cols, "square matrix required");
    let n = a.rows;
    let mut work = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let scale = (0..n).map(|i| work.at(i, i)).fold(0.0_f64, f64::max);
    let mut rank = n;
    for k in 0..n {
        let (j, piv) = (k..n)
            .map(|i| (i, work.at(i, i)))
            .fold((k, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if !(piv > PIVOT_REL_TOL * scale) || !piv.is_finite() {
            rank = k;
            break;
        }
        swap_sym(&mut work, k, j);
        perm.swap(k, j);
        let lkk = piv.sqrt();
        work.set(k, k, lkk);
        for i in k + 1..n {
            let v = work.at(i, k) / lkk;
            work.set(i, k, v);
        }
        for jj in k + 1..n {
            let ljk = work.at(jj, k);
            for i in jj..n {
                let v = work.at(i, jj) - work.at(i, k) * ljk;
                work.set(i, jj, v);
            }
        }
    }
    // Undo the permutation: F[perm[i]][j] = L[i][j] for accepted columns.
    let mut f = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..rank.min(i + 1) {
            f.set(perm[i], j, work.at(i, j));
        }
    }
    f
}

/// Symmetric row/column exchange `k <-> j` touching only the lower triangle.
fn swap_sym(a: &mut Mat, k: usize, j: usize) {
    if k == j {
        return;
    }
    let (k, j) = (k.min(j), k.max(j));
    let n = a.rows;
    for c in 0..k {
        let t = a.at(k, c);
        a.set(k, c, a.at(j, c));
        a.set(j, c, t);
    }
    for r in j + 1..n {
        let t = a.at(r, k);
        a.set(r, k, a.at(r, j));
        a.set(r, j, t);
    }
    for r in k + 1..j {
        let t = a.at(r, k);
        a.set(r, k, a.at(j, r));
        a.set(j, r, t);
    }
    let t = a.at(k, k);
    a.set(k, k, a.at(j, j));
    a.set(j, j, t);
}
