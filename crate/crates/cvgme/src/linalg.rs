//! Symplectic linear algebra for Gaussian covariance matrices.
//!
//! Conventions: `2N x 2N` matrices use the `(x_1..x_N, p_1..p_N)` ordering,
//! the symplectic form is `Omega = [[0, I], [-I, 0]]`, vacuum variance is 1,
//! and mode indices are 1-based at the API surface.

use crate::error::{Error, Result};
use crate::matrix::{cholesky as chol, sym_apply, sym_eigen, Matrix, SymMatrix};
use serde::{Deserialize, Serialize};

/// Symplectic form `Omega_N` (antisymmetric `2N x 2N`).
pub fn symplectic_form(modes: usize) -> Result<Matrix> {
    if modes == 0 {
        return Err(Error::InvalidDimension("modes must be >= 1".into()));
    }
    let mut o = Matrix::zeros(2 * modes, 2 * modes);
    for i in 0..modes {
        o[(i, modes + i)] = 1.0;
        o[(modes + i, i)] = -1.0;
    }
    Ok(o)
}

/// Covariance matrix of an N-mode Gaussian state with no x-p correlations,
/// stored as its two `N x N` diagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    modes: usize,
    x: SymMatrix,
    p: SymMatrix,
}

/// JSON form of [`CovarianceMatrix`]: full symmetric blocks, row-major.
#[derive(Serialize, Deserialize)]
pub struct CmJson {
    pub modes: usize,
    pub x: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
}

impl CovarianceMatrix {
    pub fn new(x: SymMatrix, p: SymMatrix) -> Result<Self> {
        if x.dim() != p.dim() || x.dim() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "x block {}x{0}, p block {}x{1}",
                x.dim(),
                p.dim()
            )));
        }
        Ok(CovarianceMatrix { modes: x.dim(), x, p })
    }

    /// Builds from full row data, rejecting asymmetry beyond `1e-9`.
    pub fn from_blocks(x: &[Vec<f64>], p: &[Vec<f64>]) -> Result<Self> {
        CovarianceMatrix::new(SymMatrix::from_rows(x, 1e-9)?, SymMatrix::from_rows(p, 1e-9)?)
    }

    /// Splits a full `2N x 2N` matrix; the off-diagonal x-p blocks must vanish
    /// within `tol`.
    pub fn from_full(m: &Matrix, tol: f64) -> Result<Self> {
        if m.rows() != m.cols() || m.rows() % 2 != 0 {
            return Err(Error::InvalidDimension(format!(
                "expected even square matrix, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let n = m.rows() / 2;
        let cross = m.block(0, n, n, n).max_abs().max(m.block(n, 0, n, n).max_abs());
        if cross > tol {
            return Err(Error::NumericInput(format!(
                "x-p cross block of magnitude {cross:e} exceeds {tol:e}"
            )));
        }
        CovarianceMatrix::new(
            SymMatrix::from_matrix(&m.block(0, 0, n, n), 1e-8)?,
            SymMatrix::from_matrix(&m.block(n, n, n, n), 1e-8)?,
        )
    }

    pub fn vacuum(modes: usize) -> Self {
        CovarianceMatrix {
            modes,
            x: SymMatrix::identity(modes),
            p: SymMatrix::identity(modes),
        }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn x_block(&self) -> &SymMatrix {
        &self.x
    }

    pub fn p_block(&self) -> &SymMatrix {
        &self.p
    }

    pub fn to_full(&self) -> Matrix {
        let n = self.modes;
        let mut m = Matrix::zeros(2 * n, 2 * n);
        m.set_block(0, 0, self.x.as_matrix());
        m.set_block(n, n, self.p.as_matrix());
        m
    }

    /// Marginal CM of the given 1-based mode subset, in the given order.
    pub fn reduced(&self, modes: &[usize]) -> Result<CovarianceMatrix> {
        if modes.is_empty() {
            return Err(Error::InvalidSplit("empty mode subset".into()));
        }
        for &m in modes {
            if m == 0 || m > self.modes {
                return Err(Error::InvalidSplit(format!("mode {m} out of range")));
            }
        }
        let pick = |b: &SymMatrix| {
            let rows: Vec<Vec<f64>> = modes
                .iter()
                .map(|&i| modes.iter().map(|&j| b.get(i - 1, j - 1)).collect())
                .collect();
            SymMatrix::from_rows(&rows, 0.0).expect("submatrix of symmetric is symmetric")
        };
        CovarianceMatrix::new(pick(&self.x), pick(&self.p))
    }

    pub fn max_abs_diff(&self, other: &CovarianceMatrix) -> f64 {
        self.x
            .max_abs_diff(&other.x)
            .max(self.p.max_abs_diff(&other.p))
    }

    pub fn to_json(&self) -> CmJson {
        CmJson {
            modes: self.modes,
            x: self.x.to_rows(),
            p: self.p.to_rows(),
        }
    }

    pub fn from_json(j: &CmJson) -> Result<Self> {
        let cm = CovarianceMatrix::from_blocks(&j.x, &j.p)?;
        if cm.modes != j.modes {
            return Err(Error::DimensionMismatch(format!(
                "declared {} modes, blocks are {}x{}",
                j.modes, cm.modes, cm.modes
            )));
        }
        Ok(cm)
    }
}

/// Real symplectic matrix (`S Omega S^T = Omega` within `1e-9`).
#[derive(Debug, Clone)]
pub struct SymplecticMatrix {
    modes: usize,
    m: Matrix,
}

impl SymplecticMatrix {
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if m.rows() != m.cols() || m.rows() % 2 != 0 || m.rows() == 0 {
            return Err(Error::InvalidDimension(format!(
                "expected even square matrix, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let modes = m.rows() / 2;
        let residual = symplectic_residual(&m, modes);
        if residual > 1e-9 {
            return Err(Error::NotSymplectic { residual });
        }
        Ok(SymplecticMatrix { modes, m })
    }

    pub fn identity(modes: usize) -> Self {
        SymplecticMatrix {
            modes,
            m: Matrix::identity(2 * modes),
        }
    }

    /// Balanced beam splitter on modes `(i, j)`:
    /// `(xi, xj) -> ((xi+xj)/sqrt2, (xi-xj)/sqrt2)`, same on p.
    pub fn balanced_beam_splitter(modes: usize, i: usize, j: usize) -> Result<Self> {
        Self::rotation_mixer(modes, i, j, std::f64::consts::FRAC_PI_4)
    }

    /// General two-mode mixer: `xi -> cos t Â· xi + sin t Â· xj`,
    /// `xj -> sin t Â· xi - cos t Â· xj`, same on p.
    pub fn rotation_mixer(modes: usize, i: usize, j: usize, theta: f64) -> Result<Self> {
        check_mode(modes, i)?;
        check_mode(modes, j)?;
        if i == j {
            return Err(Error::InvalidDimension("mixer needs two distinct modes".into()));
        }
        let (c, s) = (theta.cos(), theta.sin());
        let mut m = Matrix::identity(2 * modes);
        for off in [0, modes] {
            let (a, b) = (off + i - 1, off + j - 1);
            m[(a, a)] = c;
            m[(a, b)] = s;
            m[(b, a)] = s;
            m[(b, b)] = -c;
        }
        SymplecticMatrix::from_matrix(m)
    }

    /// Single-mode squeezer: `x_i -> e^r x_i`, `p_i -> e^{-r} p_i`.
    pub fn squeezer(modes: usize, i: usize, r: f64) -> Result<Self> {
        check_mode(modes, i)?;
        let mut m = Matrix::identity(2 * modes);
        m[(i - 1, i - 1)] = r.exp();
        m[(modes + i - 1, modes + i - 1)] = (-r).exp();
        SymplecticMatrix::from_matrix(m)
    }

    /// Local pi rotation of mode `i`: `x_i -> -x_i`, `p_i -> -p_i`.
    pub fn mode_flip(modes: usize, i: usize) -> Result<Self> {
        check_mode(modes, i)?;
        let mut m = Matrix::identity(2 * modes);
        m[(i - 1, i - 1)] = -1.0;
        m[(modes + i - 1, modes + i - 1)] = -1.0;
        SymplecticMatrix::from_matrix(m)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn compose(&self, rhs: &SymplecticMatrix) -> Result<Self> {
        SymplecticMatrix::from_matrix(self.m.mul(&rhs.m))
    }

    /// `S^T S`, the pure-state CM generated by this symplectic.
    pub fn gram(&self) -> Matrix {
        self.m.transpose().mul(&self.m)
    }
}

fn check_mode(modes: usize, i: usize) -> Result<()> {
    if i == 0 || i > modes {
        return Err(Error::InvalidDimension(format!(
            "mode {i} out of range 1..={modes}"
        )));
    }
    Ok(())
}

fn symplectic_residual(m: &Matrix, modes: usize) -> f64 {
    let omega = symplectic_form(modes).expect("modes >= 1");
    m.mul(&omega).mul_transpose(m).max_abs_diff(&omega)
}

/// `S gamma S^T` as a full `2N x 2N` matrix.
///
/// The symplectic condition is re-checked at the `1e-6` level so that
/// externally supplied matrices cannot silently produce unphysical output.
pub fn apply_symplectic(cm: &CovarianceMatrix, s: &SymplecticMatrix) -> Result<Matrix> {
    if s.modes() != cm.modes() {
        return Err(Error::DimensionMismatch(format!(
            "CM has {} modes, symplectic has {}",
            cm.modes(),
            s.modes()
        )));
    }
    let residual = symplectic_residual(&s.m, s.modes);
    if residual > 1e-6 {
        return Err(Error::NotSymplectic { residual });
    }
    Ok(s.m.mul(&cm.to_full()).mul_transpose(&s.m))
}

/// Momentum sign flip of a mode subset (partial transposition on the CM).
///
/// `flipped` must be a nonempty proper subset of `{1..N}`.
pub fn partial_transpose(cm: &CovarianceMatrix, flipped: &[usize]) -> Result<CovarianceMatrix> {
    let n = cm.modes();
    if flipped.is_empty() || flipped.len() >= n {
        return Err(Error::InvalidSplit(
            "flipped modes must be a nonempty proper subset".into(),
        ));
    }
    let mut sign = vec![1.0; n];
    for &m in flipped {
        if m == 0 || m > n {
            return Err(Error::InvalidSplit(format!("mode {m} out of range")));
        }
        sign[m - 1] = -1.0;
    }
    let p_rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| sign[i] * sign[j] * cm.p_block().get(i, j)).collect())
        .collect();
    CovarianceMatrix::new(
        cm.x_block().clone(),
        SymMatrix::from_rows(&p_rows, 0.0).expect("sign conjugation preserves symmetry"),
    )
}

/// Symplectic eigenvalues of a positive-definite `2N x 2N` matrix, descending.
///
/// These are the moduli of the eigenvalue pairs of `i Omega M`, computed from
/// the symmetric eigenproblem of `B^T B` with `B = M^{1/2} Omega M^{1/2}`.
pub fn symplectic_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    if !m.is_finite() {
        return Err(Error::NumericInput("non-finite entry".into()));
    }
    let n2 = m.rows();
    if n2 != m.cols() || n2 % 2 != 0 {
        return Err(Error::InvalidDimension(format!("{}x{}", m.rows(), m.cols())));
    }
    let modes = n2 / 2;
    let (vals, _) = sym_eigen(m);
    if vals[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite { pivot: 1 });
    }
    let root = sym_apply(m, f64::sqrt);
    let omega = symplectic_form(modes)?;
    let b = root.mul(&omega).mul(&root);
    let (sq, _) = sym_eigen(&b.transpose().mul(&b));
    // eigenvalues come doubled; take every second from the top
    let mut nus: Vec<f64> = (0..modes)
        .map(|k| sq[n2 - 1 - 2 * k].max(0.0).sqrt())
        .collect();
    nus.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(nus)
}

/// Smallest symplectic eigenvalue of a CM (PPT tests, physicality margins).
pub fn min_symplectic_eigenvalue(cm: &CovarianceMatrix) -> Result<f64> {
    let nus = symplectic_eigenvalues(&cm.to_full())?;
    Ok(*nus.last().expect("at least one mode"))
}

/// Uncertainty-principle test: all symplectic eigenvalues `>= 1 - tol`.
///
/// Matrices that are not even positive definite report `false` rather than an
/// error; non-finite input is an error.
pub fn is_physical(cm: &CovarianceMatrix, tol: f64) -> Result<bool> {
    let full = cm.to_full();
    if !full.is_finite() {
        return Err(Error::NumericInput("non-finite entry".into()));
    }
    let (vals, _) = sym_eigen(&full);
    if vals[0] <= 0.0 {
        return Ok(false);
    }
    Ok(min_symplectic_eigenvalue(cm)? >= 1.0 - tol)
}

/// Default tolerance for [`is_physical`].
pub const PHYSICALITY_TOL: f64 = 1e-9;

/// Williamson decomposition of a positive-definite `2N x 2N` matrix:
/// `S Z S^T = diag(nu_1..nu_N, nu_1..nu_N)` with `S Omega S^T = Omega`.
///
/// `nu` is returned in descending order. The eigenbasis is extracted from the
/// real symmetric embedding `[[0, -A], [A, 0]]` of `i A`,
/// `A = Z^{-1/2} Omega Z^{-1/2}`: an eigenvector `(a; b)` at eigenvalue
/// `-sigma` satisfies `A a = -sigma b` with `|a| = |b|`, `a` orthogonal to
/// `b`, which is exactly one symplectic eigenplane. Near-degenerate clusters
/// are resolved by projecting out already-chosen planes. Two Newton steps
/// `S <- S + (S Omega S^T - Omega) Omega S / 2` pin the symplectic condition
/// to machine precision.
pub fn williamson(z: &Matrix) -> Result<(SymplecticMatrix, Vec<f64>)> {
    if z.rows() != z.cols() || z.rows() % 2 != 0 || z.rows() == 0 {
        return Err(Error::InvalidDimension(format!("{}x{}", z.rows(), z.cols())));
    }
    if !z.is_finite() {
        return Err(Error::NumericInput("non-finite entry".into()));
    }
    let n2 = z.rows();
    let modes = n2 / 2;
    let zs = SymMatrix::from_matrix(z, 1e-9)?;
    let (vals, _) = sym_eigen(zs.as_matrix());
    if vals[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite { pivot: 1 });
    }
    let inv_root = sym_apply(zs.as_matrix(), |v| 1.0 / v.sqrt());
    let omega = symplectic_form(modes)?;
    let mut a = inv_root.mul(&omega).mul(&inv_root);
    // exact antisymmetrization
    for i in 0..n2 {
        a[(i, i)] = 0.0;
        for j in (i + 1)..n2 {
            let v = 0.5 * (a[(i, j)] - a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = -v;
        }
    }
    // real embedding of iA
    let mut embed = Matrix::zeros(2 * n2, 2 * n2);
    for i in 0..n2 {
        for j in 0..n2 {
            embed[(i, n2 + j)] = -a[(i, j)];
            embed[(n2 + i, j)] = a[(i, j)];
        }
    }
    let (evals, evecs) = sym_eigen(&embed);
    let scale = evals[0].abs().max(evals[2 * n2 - 1].abs());

    // negative eigenvalues ascending = sigma descending; walk them and
    // greedily extract one (u, v) plane per symplectic eigenvalue
    let mut planes: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(modes);
    let mut k = 0;
    while k < 2 * n2 && evals[k] < 0.0 && planes.len() < modes {
        // cluster of numerically coincident eigenvalues
        let mut end = k + 1;
        while end < 2 * n2
            && evals[end] < 0.0
            && evals[end] - evals[k] <= 1e-9 * evals[k].abs() + 1e-12 * scale
        {
            end += 1;
        }
        let cluster_start = planes.len();
        for col in k..end {
            let mut va: Vec<f64> = (0..n2).map(|i| evecs[(i, col)]).collect();
            let mut vb: Vec<f64> = (0..n2).map(|i| evecs[(n2 + i, col)]).collect();
            // project out chosen planes of this cluster, including the
            // 90-degree phase partner (-v; u) of each
            for (u, v, _) in &planes[cluster_start..] {
                let mut c1 = 0.0;
                let mut c2 = 0.0;
                for i in 0..n2 {
                    c1 += 0.5 * (va[i] * u[i] + vb[i] * v[i]);
                    c2 += 0.5 * (vb[i] * u[i] - va[i] * v[i]);
                }
                for i in 0..n2 {
                    va[i] -= c1 * u[i] - c2 * v[i];
                    vb[i] -= c1 * v[i] + c2 * u[i];
                }
            }
            let norm2: f64 = va.iter().chain(vb.iter()).map(|x| x * x).sum();
            if norm2 < 0.25 {
                continue; // phase partner of an already-chosen plane
            }
            let s = (2.0 / norm2).sqrt();
            let u: Vec<f64> = va.iter().map(|x| x * s).collect();
            let v: Vec<f64> = vb.iter().map(|x| x * s).collect();
            // recompute sigma as |A u| (more accurate than the eigenvalue)
            let mut sigma2 = 0.0;
            for i in 0..n2 {
                let mut acc = 0.0;
                for j in 0..n2 {
                    acc += a[(i, j)] * u[j];
                }
                sigma2 += acc * acc;
            }
            let sigma = sigma2.sqrt();
            planes.push((u, v, sigma));
            if planes.len() == modes {
                break;
            }
        }
        k = end;
    }
    if planes.len() != modes {
        return Err(Error::NumericalFailure {
            context: "williamson eigenplane extraction",
            residual: (modes - planes.len()) as f64,
        });
    }
    // sigma ascending = nu descending
    planes.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap());
    // sign convention: first component of u above 1e-10 made positive
    for (u, v, _) in &mut planes {
        if let Some(first) = u.iter().find(|x| x.abs() > 1e-10) {
            if *first < 0.0 {
                for x in u.iter_mut() {
                    *x = -*x;
                }
                for x in v.iter_mut() {
                    *x = -*x;
                }
            }
        }
    }
    let nus: Vec<f64> = planes.iter().map(|p| 1.0 / p.2).collect();

    // S = diag(sqrt(nu)) B^T Z^{-1/2}, B = [u_1..u_N | v_1..v_N]
    let mut bt = Matrix::zeros(n2, n2);
    for (row, (u, v, _)) in planes.iter().enumerate() {
        for i in 0..n2 {
            bt[(row, i)] = u[i];
            bt[(modes + row, i)] = v[i];
        }
    }
    let mut s = bt.mul(&inv_root);
    for row in 0..n2 {
        let f = nus[row % modes].sqrt();
        for i in 0..n2 {
            s[(row, i)] *= f;
        }
    }
    // Newton projection onto the symplectic group
    for _ in 0..2 {
        let e = s.mul(&omega).mul_transpose(&s).sub(&omega);
        s = s.add(&e.mul(&omega).mul(&s).scaled(0.5));
    }

    let mut zw = Matrix::zeros(n2, n2);
    for i in 0..modes {
        zw[(i, i)] = nus[i];
        zw[(modes + i, modes + i)] = nus[i];
    }
    let diag_residual = s.mul(z).mul_transpose(&s).max_abs_diff(&zw);
    if diag_residual > 1e-8 {
        return Err(Error::NumericalFailure {
            context: "williamson diagonalization",
            residual: diag_residual,
        });
    }
    let sym = SymplecticMatrix::from_matrix(s)
        .map_err(|_| Error::NumericalFailure { context: "williamson symplectic condition", residual: f64::NAN })?;
    Ok((sym, nus))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symplectic_form_smallest_case() {
        let o = symplectic_form(1).unwrap();
        assert_eq!(o.to_rows(), vec![vec![0.0, 1.0], vec![-1.0, 0.0]]);
        assert!(symplectic_form(0).is_err());
    }

    #[test]
    fn symplectic_form_three_modes() {
        let o = symplectic_form(3).unwrap();
        assert_eq!(o[(0, 3)], 1.0);
        assert_eq!(o[(3, 0)], -1.0);
        let mut nonzero = 0;
        for i in 0..6 {
            for j in 0..6 {
                if o[(i, j)] != 0.0 {
                    nonzero += 1;
                    assert_eq!(o[(i, j)], -o[(j, i)]);
                }
            }
        }
        assert_eq!(nonzero, 6);
    }

    #[test]
    fn symplectic_form_antisymmetry() {
        for n in 2..=6 {
            let o = symplectic_form(n).unwrap();
            assert!(o.transpose().max_abs_diff(&o.scaled(-1.0)) == 0.0);
        }
    }

    #[test]
    fn vacuum_is_physical() {
        for n in 1..=5 {
            assert!(is_physical(&CovarianceMatrix::vacuum(n), PHYSICALITY_TOL).unwrap());
        }
    }

    #[test]
    fn partial_transpose_is_involution_and_preserves_x() {
        let cm = CovarianceMatrix::from_blocks(
            &[
                vec![2.0, 0.5, 0.1],
                vec![0.5, 1.5, -0.4],
                vec![0.1, -0.4, 1.2],
            ],
            &[
                vec![1.8, -0.3, 0.2],
                vec![-0.3, 1.1, 0.6],
                vec![0.2, 0.6, 2.2],
            ],
        )
        .unwrap();
        let pt = partial_transpose(&cm, &[2]).unwrap();
        assert_eq!(pt.x_block(), cm.x_block());
        assert_eq!(pt.p_block().get(0, 1), 0.3);
        assert_eq!(pt.p_block().get(1, 2), -0.6);
        assert_eq!(pt.p_block().get(1, 1), 1.1);
        let back = partial_transpose(&pt, &[2]).unwrap();
        assert_eq!(back, cm);
        assert!(partial_transpose(&cm, &[]).is_err());
        assert!(partial_transpose(&cm, &[1, 2, 3]).is_err());
    }

    #[test]
    fn tmsv_partial_transpose_min_eigenvalue() {
        // TMSV at r = 0.5: PPT minimum symplectic eigenvalue is e^{-2r} = e^{-1}
        let r: f64 = 0.5;
        let (a, c) = ((2.0 * r).cosh(), (2.0 * r).sinh());
        let cm = CovarianceMatrix::from_blocks(
            &[vec![a, c], vec![c, a]],
            &[vec![a, -c], vec![-c, a]],
        )
        .unwrap();
        let pt = partial_transpose(&cm, &[2]).unwrap();
        let min = min_symplectic_eigenvalue(&pt).unwrap();
        assert_abs_diff_eq!(min, (-1.0f64).exp(), epsilon = 1e-10);
    }

    #[test]
    fn apply_symplectic_identity_and_involution() {
        let cm = CovarianceMatrix::from_blocks(
            &[vec![1.5, 0.2], vec![0.2, 1.1]],
            &[vec![0.9, -0.1], vec![-0.1, 1.3]],
        )
        .unwrap();
        let id = SymplecticMatrix::identity(2);
        assert!(apply_symplectic(&cm, &id).unwrap().max_abs_diff(&cm.to_full()) == 0.0);
        // the balanced beam splitter is an involution on the CM
        let bs = SymplecticMatrix::balanced_beam_splitter(2, 1, 2).unwrap();
        let once = apply_symplectic(&cm, &bs).unwrap();
        let cm1 = CovarianceMatrix::from_full(&once, 1e-12).unwrap();
        let twice = apply_symplectic(&cm1, &bs).unwrap();
        assert!(twice.max_abs_diff(&cm.to_full()) <= 1e-12);
    }

    #[test]
    fn williamson_identity() {
        let (s, nus) = williamson(&Matrix::identity(6)).unwrap();
        for nu in &nus {
            assert_abs_diff_eq!(*nu, 1.0, epsilon = 1e-12);
        }
        // symplectic and orthogonal
        let sm = s.as_matrix();
        assert!(sm.mul_transpose(sm).max_abs_diff(&Matrix::identity(6)) <= 1e-10);
    }

    #[test]
    fn williamson_tmsv_is_pure() {
        let r: f64 = 0.7;
        let (a, c) = ((2.0 * r).cosh(), (2.0 * r).sinh());
        let cm = CovarianceMatrix::from_blocks(
            &[vec![a, c], vec![c, a]],
            &[vec![a, -c], vec![-c, a]],
        )
        .unwrap();
        let (_, nus) = williamson(&cm.to_full()).unwrap();
        for nu in nus {
            assert_abs_diff_eq!(nu, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn williamson_rejects_indefinite() {
        let m = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert!(williamson(&m).is_err());
    }

    fn random_symplectic(modes: usize, rng: &mut ChaCha8Rng) -> SymplecticMatrix {
        let mut s = SymplecticMatrix::identity(modes);
        for _ in 0..8 {
            let i = rng.gen_range(1..=modes);
            let mut j = rng.gen_range(1..=modes);
            while j == i && modes > 1 {
                j = rng.gen_range(1..=modes);
            }
            let next = if modes > 1 && rng.gen_bool(0.5) {
                SymplecticMatrix::rotation_mixer(modes, i, j, rng.gen_range(-1.5..1.5)).unwrap()
            } else {
                SymplecticMatrix::squeezer(modes, i, rng.gen_range(-0.8..0.8)).unwrap()
            };
            s = next.compose(&s).unwrap();
        }
        s
    }

    #[test]
    fn pure_state_cms_are_physical() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..100 {
            let modes = rng.gen_range(1..=4);
            let s = random_symplectic(modes, &mut rng);
            let cm = CovarianceMatrix::from_full(&s.gram(), 1e-6);
            // squeezer/mixer products keep x and p uncoupled
            let cm = cm.expect("x-p blocks stay zero for these generators");
            assert!(is_physical(&cm, 1e-7).unwrap());
        }
    }

    #[test]
    fn williamson_cross_checks_min_symplectic_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let modes = rng.gen_range(1..=3);
            let s = random_symplectic(modes, &mut rng);
            // thermal-ish positive definite: S^T S + small identity
            let m = s.gram().add(&Matrix::identity(2 * modes).scaled(rng.gen_range(0.1..1.0)));
            let (_, nus) = williamson(&m).unwrap();
            let direct = symplectic_eigenvalues(&m).unwrap();
            for (a, b) in nus.iter().zip(direct.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-8);
            }
        }
    }
}
