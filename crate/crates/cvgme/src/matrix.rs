//! Small dense matrix kernel: row-major `Matrix`, symmetric `SymMatrix`,
//! cyclic Jacobi eigendecomposition and Cholesky factorization.
//!
//! Everything here targets matrices of order ≲ 50; no blocking, no BLAS.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::InvalidDimension("empty matrix".into()));
        }
        let c = rows[0].len();
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidDimension("ragged rows".into()));
        }
        let mut m = Matrix::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| self.data[i * self.cols..(i + 1) * self.cols].to_vec())
            .collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch in mul");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// `self * other^T`.
    pub fn mul_transpose(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "dimension mismatch in mul_transpose");
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            for j in 0..other.rows {
                let mut s = 0.0;
                for k in 0..self.cols {
                    s += self[(i, k)] * other[(j, k)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= c;
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&other.data) {
            *v += w;
        }
        out
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&other.data) {
            *v -= w;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, &v| a.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |a, (&v, &w)| a.max((v - w).abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies `block` into `self` with upper-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Matrix) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Matrix {
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        out
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Symmetric matrix stored canonically: both triangles hold the value taken
/// from the upper triangle at construction time.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    m: Matrix,
}

impl SymMatrix {
    /// Builds from full rows. Asymmetry beyond `tol` is rejected; below it the
    /// matrix is symmetrized from the upper triangle.
    pub fn from_rows(rows: &[Vec<f64>], tol: f64) -> Result<Self> {
        let m = Matrix::from_rows(rows)?;
        Self::from_matrix(&m, tol)
    }

    pub fn from_matrix(m: &Matrix, tol: f64) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::InvalidDimension(format!(
                "expected square matrix, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        if !m.is_finite() {
            return Err(Error::NumericInput("non-finite entry".into()));
        }
        let n = m.rows();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let d = (m[(i, j)] - m[(j, i)]).abs();
                if d > tol {
                    return Err(Error::Asymmetric { row: i, col: j, diff: d });
                }
                out[(i, j)] = m[(i, j)];
                out[(j, i)] = m[(i, j)];
            }
        }
        Ok(SymMatrix { n, m: out })
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix {
            n,
            m: Matrix::identity(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.m.to_rows()
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        self.m.max_abs_diff(&other.m)
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order with matching eigenvector columns.
/// Each eigenvector's largest-magnitude component is made positive, so the
/// output is deterministic.
pub fn sym_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    assert_eq!(a.rows(), a.cols());
    let n = a.rows();
    let mut m = a.clone();
    // enforce exact symmetry of the working copy
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let mut v = Matrix::identity(n);
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    let tol = 1e-15 * scale;
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m[(p, q)].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap().then(i.cmp(&j)));
    let mut vals = Vec::with_capacity(n);
    let mut vecs = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vals.push(m[(src, src)]);
        // sign convention: largest-|component| positive
        let col = v.column(src);
        let mut imax = 0;
        for (k, c) in col.iter().enumerate() {
            if c.abs() > col[imax].abs() {
                imax = k;
            }
        }
        let sgn = if col[imax] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            vecs[(k, dst)] = sgn * col[k];
        }
    }
    (vals, vecs)
}

/// `f(A) = V f(Λ) V^T` for a symmetric matrix.
pub fn sym_apply(a: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let n = a.rows();
    let (vals, vecs) = sym_eigen(a);
    let mut out = Matrix::zeros(n, n);
    for k in 0..n {
        let fk = f(vals[k]);
        if fk == 0.0 {
            continue;
        }
        for i in 0..n {
            let vik = vecs[(i, k)];
            if vik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[(i, j)] += fk * vik * vecs[(j, k)];
            }
        }
    }
    out
}

/// Cholesky factorization `L L^T = a` with strictly positive diagonal.
///
/// Fails with the 1-based pivot index as soon as a pivot is not positive.
pub fn cholesky(a: &SymMatrix) -> Result<Matrix> {
    let n = a.dim();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j + 1 });
        }
        l[(j, j)] = d.sqrt();
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / l[(j, j)];
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cholesky_identity_is_identity() {
        let l = cholesky(&SymMatrix::identity(4)).unwrap();
        assert_eq!(l, Matrix::identity(4));
    }

    #[test]
    fn cholesky_two_by_two_hand_case() {
        let a = SymMatrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 2.0]], 0.0).unwrap();
        let l = cholesky(&a).unwrap();
        assert_eq!(l.to_rows(), vec![vec![2.0, 0.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn cholesky_reconstructs_input() {
        let a = SymMatrix::from_rows(
            &[
                vec![6.3, -1.6, 2.8],
                vec![-1.6, 10.0, -5.6],
                vec![2.8, -5.6, 5.4],
            ],
            0.0,
        )
        .unwrap();
        let l = cholesky(&a).unwrap();
        let back = l.mul_transpose(&l);
        assert!(back.max_abs_diff(a.as_matrix()) <= 1e-10);
    }

    #[test]
    fn cholesky_reports_failing_pivot() {
        let a = SymMatrix::from_rows(
            &[vec![1.0, 2.0, 0.0], vec![2.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            0.0,
        )
        .unwrap();
        match cholesky(&a) {
            Err(Error::NotPositiveDefinite { pivot }) => assert_eq!(pivot, 2),
            other => panic!("expected pivot failure, got {other:?}"),
        }
    }

    #[test]
    fn sym_from_rows_rejects_asymmetry() {
        let r = SymMatrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]], 1e-9);
        assert!(matches!(r, Err(Error::Asymmetric { .. })));
        // below tolerance: symmetrized from the upper triangle
        let s = SymMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5 + 1e-12, 1.0]], 1e-9).unwrap();
        assert_eq!(s.get(1, 0), 0.5);
    }

    #[test]
    fn jacobi_diagonalizes() {
        let a = Matrix::from_rows(&[
            vec![2.0, -1.0, 0.3, 0.0],
            vec![-1.0, 3.0, 0.0, 0.2],
            vec![0.3, 0.0, 1.5, -0.7],
            vec![0.0, 0.2, -0.7, 2.5],
        ])
        .unwrap();
        let (vals, vecs) = sym_eigen(&a);
        // A V = V diag(vals)
        let av = a.mul(&vecs);
        for k in 0..4 {
            for i in 0..4 {
                assert_abs_diff_eq!(av[(i, k)], vals[k] * vecs[(i, k)], epsilon = 1e-12);
            }
        }
        // orthonormal columns
        let vtv = vecs.transpose().mul(&vecs);
        assert!(vtv.max_abs_diff(&Matrix::identity(4)) <= 1e-12);
        // ascending order
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sym_apply_square_root() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let r = sym_apply(&a, f64::sqrt);
        assert!(r.mul(&r).max_abs_diff(&a) <= 1e-13);
    }
}
