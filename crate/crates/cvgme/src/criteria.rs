//! Construction and evaluation of the minimal biseparability criteria.
//!
//! A criterion instance is a tree-sparse pair of lower-triangular coefficient
//! matrices `(L^x, L^p)`. The left-hand sides are the variance sums
//! `U^a = Tr[gamma^a L^a (L^a)^T] / 2`; the right-hand sides are built from
//! the mixed product `M = (L^x)^T L^p` restricted to each side of every
//! bipartite split. Violation of either bound
//!
//! ```text
//! U^x U^p >= ( L + min_k L^(k) ) / 4        (product)
//! U^x + U^p >= min_k K^(k)                  (sum)
//! ```
//!
//! certifies genuine multipartite entanglement, so the evaluator reports the
//! two gaps `d_p` and `d_s` together with the minimizing splits.

use crate::error::{Error, Result};
use crate::linalg::CovarianceMatrix;
use crate::matrix::Matrix;
use crate::tree::{bipartitions, Bipartition, LabeledTree};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Quadrature selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrature {
    X,
    P,
}

/// Which criterion gap to optimize or report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Product,
    Sum,
}

impl std::str::FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "product" | "prod" | "p" => Ok(Criterion::Product),
            "sum" | "s" => Ok(Criterion::Sum),
            other => Err(Error::Parse(format!("unknown criterion {other:?}"))),
        }
    }
}

/// Tree-sparse coefficient pair: one diagonal value per vertex and one
/// off-diagonal value per edge, for each quadrature.
///
/// Flat layout (used by the optimizer): `diag_x[N] ++ off_x[N-1] ++
/// diag_p[N] ++ off_p[N-1]`, with `off[i-1]` sitting on the edge from child
/// `i` to its parent.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyParams {
    tree: LabeledTree,
    diag_x: Vec<f64>,
    off_x: Vec<f64>,
    diag_p: Vec<f64>,
    off_p: Vec<f64>,
}

/// JSON form of [`CholeskyParams`]: coefficients keyed `"i,i"` / `"j,i"`.
#[derive(Serialize, Deserialize)]
pub struct ParamsJson {
    pub tree: serde_json::Value,
    pub ell_x: BTreeMap<String, f64>,
    pub ell_p: BTreeMap<String, f64>,
}

impl CholeskyParams {
    pub fn new(
        tree: &LabeledTree,
        diag_x: Vec<f64>,
        off_x: Vec<f64>,
        diag_p: Vec<f64>,
        off_p: Vec<f64>,
    ) -> Result<Self> {
        let n = tree.order();
        tree.validate_labeling()
            .map_err(|column| Error::InvalidLabeling { column })?;
        if diag_x.len() != n || diag_p.len() != n || off_x.len() != n - 1 || off_p.len() != n - 1 {
            return Err(Error::Parameter(format!(
                "coefficient counts must be {n} diagonal and {} off-diagonal per quadrature",
                n - 1
            )));
        }
        Ok(CholeskyParams {
            tree: tree.clone(),
            diag_x,
            off_x,
            diag_p,
            off_p,
        })
    }

    pub fn from_flat(tree: &LabeledTree, flat: &[f64]) -> Result<Self> {
        let n = tree.order();
        if flat.len() != 2 * (2 * n - 1) {
            return Err(Error::Parameter(format!(
                "flat parameter vector must have length {}",
                2 * (2 * n - 1)
            )));
        }
        CholeskyParams::new(
            tree,
            flat[..n].to_vec(),
            flat[n..2 * n - 1].to_vec(),
            flat[2 * n - 1..3 * n - 1].to_vec(),
            flat[3 * n - 1..].to_vec(),
        )
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * (2 * self.order() - 1));
        v.extend_from_slice(&self.diag_x);
        v.extend_from_slice(&self.off_x);
        v.extend_from_slice(&self.diag_p);
        v.extend_from_slice(&self.off_p);
        v
    }

    pub fn order(&self) -> usize {
        self.tree.order()
    }

    pub fn tree(&self) -> &LabeledTree {
        &self.tree
    }

    pub fn diag(&self, q: Quadrature) -> &[f64] {
        match q {
            Quadrature::X => &self.diag_x,
            Quadrature::P => &self.diag_p,
        }
    }

    pub fn off(&self, q: Quadrature) -> &[f64] {
        match q {
            Quadrature::X => &self.off_x,
            Quadrature::P => &self.off_p,
        }
    }

    pub fn to_json(&self) -> ParamsJson {
        let edges: Vec<Vec<usize>> = self.tree.edges().iter().map(|&(a, b)| vec![a, b]).collect();
        let coeffs = |diag: &[f64], off: &[f64]| {
            let mut m = BTreeMap::new();
            for (i, &v) in diag.iter().enumerate() {
                m.insert(format!("{0},{0}", i + 1), v);
            }
            for (i, &v) in off.iter().enumerate() {
                let child = i + 1;
                let parent = self.tree.parent_of(child).expect("validated labeling");
                m.insert(format!("{parent},{child}"), v);
            }
            m
        };
        ParamsJson {
            tree: serde_json::json!(edges),
            ell_x: coeffs(&self.diag_x, &self.off_x),
            ell_p: coeffs(&self.diag_p, &self.off_p),
        }
    }

    pub fn from_json(j: &ParamsJson) -> Result<Self> {
        let tree = match &j.tree {
            serde_json::Value::String(key) => crate::tree::paper_tree(key)
                .or_else(|_| crate::tree::parse_edge_list(key))?,
            serde_json::Value::Array(rows) => {
                let mut edges = Vec::new();
                let mut maxv = 0;
                for row in rows {
                    let pair: Vec<usize> = serde_json::from_value(row.clone())
                        .map_err(|_| Error::Parse("tree edges must be [u, v] pairs".into()))?;
                    if pair.len() != 2 {
                        return Err(Error::Parse("tree edges must be [u, v] pairs".into()));
                    }
                    maxv = maxv.max(pair[0]).max(pair[1]);
                    edges.push((pair[0], pair[1]));
                }
                LabeledTree::from_edges(maxv, &edges)?
            }
            _ => return Err(Error::Parse("tree must be a fixture key or edge list".into())),
        };
        let n = tree.order();
        let read = |m: &BTreeMap<String, f64>| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut diag = vec![f64::NAN; n];
            let mut off = vec![f64::NAN; n - 1];
            for (k, &v) in m {
                let parts: Vec<&str> = k.split(',').map(str::trim).collect();
                if parts.len() != 2 {
                    return Err(Error::Parse(format!("bad coefficient key {k:?}")));
                }
                let a: usize = parts[0].parse().map_err(|_| Error::Parse(format!("bad key {k:?}")))?;
                let b: usize = parts[1].parse().map_err(|_| Error::Parse(format!("bad key {k:?}")))?;
                if a == b {
                    diag[a - 1] = v;
                } else {
                    let (child, parent) = (a.min(b), a.max(b));
                    if tree.parent_of(child) != Some(parent) {
                        return Err(Error::Parameter(format!(
                            "({parent},{child}) is not a tree edge"
                        )));
                    }
                    off[child - 1] = v;
                }
            }
            if diag.iter().chain(off.iter()).any(|v| v.is_nan()) {
                return Err(Error::Parameter("missing coefficient".into()));
            }
            Ok((diag, off))
        };
        let (diag_x, off_x) = read(&j.ell_x)?;
        let (diag_p, off_p) = read(&j.ell_p)?;
        CholeskyParams::new(&tree, diag_x, off_x, diag_p, off_p)
    }
}

/// Tree-sparse lower-triangular coefficient matrix for one quadrature.
pub fn build_l(params: &CholeskyParams, q: Quadrature) -> Matrix {
    let n = params.order();
    let mut l = Matrix::zeros(n, n);
    for (i, &v) in params.diag(q).iter().enumerate() {
        l[(i, i)] = v;
    }
    for (child, &v) in params.off(q).iter().enumerate() {
        let parent = params.tree.parent_of(child + 1).expect("validated labeling");
        l[(parent - 1, child)] = v;
    }
    l
}

/// Variance sums `(U^x, U^p)` with `U^a = Tr[gamma^a L^a (L^a)^T] / 2`.
pub fn lhs_u(cm: &CovarianceMatrix, params: &CholeskyParams) -> Result<(f64, f64)> {
    let ev = Evaluator::new(cm, params.tree())?;
    let g = ev.gaps(&params.to_flat());
    Ok((g.u_x, g.u_p))
}

/// Squared Frobenius norm of `(L^x)^T L^p`.
pub fn script_l(params: &CholeskyParams) -> f64 {
    let lx = build_l(params, Quadrature::X);
    let lp = build_l(params, Quadrature::P);
    let m = lx.transpose().mul(&lp);
    let mut s = 0.0;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            s += m[(i, j)] * m[(i, j)];
        }
    }
    s
}

/// Split-restricted penalty `L^(k) = 2 sum_ij (|X_ij| - X_ij)`,
/// `X_ij = M^(I)_ij M^(J)_ij`.
pub fn script_l_k(params: &CholeskyParams, split: &Bipartition) -> f64 {
    restricted_terms(params, split).0
}

/// Split-restricted diagonal sum
/// `K^(k) = sum_i |M^(I)_ii| + |M^(J)_ii|`.
pub fn script_k_k(params: &CholeskyParams, split: &Bipartition) -> f64 {
    restricted_terms(params, split).1
}

/// Accumulates the two split-restricted products independently (never as a
/// difference from the full product) so that algebraic identities between
/// splits hold bitwise.
fn restricted_pair(lx: &Matrix, lp: &Matrix, mask: u32, n: usize) -> (Matrix, Matrix) {
    let mut mi = Matrix::zeros(n, n);
    let mut mj = Matrix::zeros(n, n);
    for mode in 0..n {
        let target = if mask >> mode & 1 == 1 { &mut mi } else { &mut mj };
        for i in 0..n {
            let a = lx[(mode, i)];
            if a == 0.0 {
                continue;
            }
            for j in 0..n {
                target[(i, j)] += a * lp[(mode, j)];
            }
        }
    }
    (mi, mj)
}

fn restricted_terms(params: &CholeskyParams, split: &Bipartition) -> (f64, f64) {
    let n = params.order();
    let lx = build_l(params, Quadrature::X);
    let lp = build_l(params, Quadrature::P);
    let (mi, mj) = restricted_pair(&lx, &lp, split.mask_i(), n);
    let mut lk = 0.0;
    let mut kk = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = mi[(i, j)] * mj[(i, j)];
            lk += 2.0 * (x.abs() - x);
        }
        kk += mi[(i, i)].abs() + mj[(i, i)].abs();
    }
    (lk, kk)
}

/// Evaluated criterion quantities for one `(CM, params)` pair.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub u_x: f64,
    pub u_p: f64,
    pub script_l: f64,
    pub script_l_k: Vec<f64>,
    pub script_k_k: Vec<f64>,
    pub d_p: f64,
    pub d_s: f64,
    pub argmin_split_p: String,
    pub argmin_split_s: String,
}

/// Both gaps, computed in one pass (the optimizer hot path).
#[derive(Debug, Clone, Copy)]
pub struct Gaps {
    pub u_x: f64,
    pub u_p: f64,
    pub d_p: f64,
    pub d_s: f64,
}

impl Gaps {
    pub fn of(&self, which: Criterion) -> f64 {
        match which {
            Criterion::Product => self.d_p,
            Criterion::Sum => self.d_s,
        }
    }
}

/// Reusable evaluation context for a fixed `(CM, tree)` pair.
///
/// Precomputes the split masks and the child-parent edges; `gaps` then costs
/// a few matrix products per call. All methods take the flat parameter layout
/// of [`CholeskyParams::to_flat`].
pub struct Evaluator {
    n: usize,
    gx: Matrix,
    gp: Matrix,
    parents: Vec<usize>,
    splits: Vec<Bipartition>,
    masks: Vec<u32>,
}

impl Evaluator {
    pub fn new(cm: &CovarianceMatrix, tree: &LabeledTree) -> Result<Self> {
        if cm.modes() != tree.order() {
            return Err(Error::DimensionMismatch(format!(
                "CM has {} modes, tree has order {}",
                cm.modes(),
                tree.order()
            )));
        }
        let parents: Vec<usize> = tree
            .child_parent_edges()?
            .into_iter()
            .map(|(_, p)| p)
            .collect();
        let splits = bipartitions(tree.order())?;
        let masks = splits.iter().map(|s| s.mask_i()).collect();
        Ok(Evaluator {
            n: tree.order(),
            gx: cm.x_block().as_matrix().clone(),
            gp: cm.p_block().as_matrix().clone(),
            parents,
            splits,
            masks,
        })
    }

    pub fn splits(&self) -> &[Bipartition] {
        &self.splits
    }

    pub fn dim(&self) -> usize {
        2 * (2 * self.n - 1)
    }

    fn fill_l(&self, flat: &[f64], q: Quadrature, l: &mut Matrix) {
        let n = self.n;
        let (diag, off) = match q {
            Quadrature::X => (&flat[..n], &flat[n..2 * n - 1]),
            Quadrature::P => (&flat[2 * n - 1..3 * n - 1], &flat[3 * n - 1..]),
        };
        for i in 0..n {
            for j in 0..n {
                l[(i, j)] = 0.0;
            }
        }
        for i in 0..n {
            l[(i, i)] = diag[i];
        }
        for (child, &v) in off.iter().enumerate() {
            l[(self.parents[child] - 1, child)] = v;
        }
    }

    /// Both criterion gaps at the given flat parameter vector.
    pub fn gaps(&self, flat: &[f64]) -> Gaps {
        let n = self.n;
        debug_assert_eq!(flat.len(), self.dim());
        let mut lx = Matrix::zeros(n, n);
        let mut lp = Matrix::zeros(n, n);
        self.fill_l(flat, Quadrature::X, &mut lx);
        self.fill_l(flat, Quadrature::P, &mut lp);

        // U^a = Tr[g L L^T]/2 via sum_{i,j} g_ij (L L^T)_ij / 2
        let trace_half = |g: &Matrix, l: &Matrix| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let mut llt = 0.0;
                    for k in 0..n {
                        llt += l[(i, k)] * l[(j, k)];
                    }
                    s += g[(i, j)] * llt;
                }
            }
            0.5 * s
        };
        let u_x = trace_half(&self.gx, &lx);
        let u_p = trace_half(&self.gp, &lp);

        let m = lx.transpose().mul(&lp);
        let mut script_l = 0.0;
        for i in 0..n {
            for j in 0..n {
                script_l += m[(i, j)] * m[(i, j)];
            }
        }

        let mut min_lk = f64::INFINITY;
        let mut min_kk = f64::INFINITY;
        for &mask in &self.masks {
            let (mi, mj) = restricted_pair(&lx, &lp, mask, n);
            let mut lk = 0.0;
            let mut kk = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let x = mi[(i, j)] * mj[(i, j)];
                    lk += 2.0 * (x.abs() - x);
                }
                kk += mi[(i, i)].abs() + mj[(i, i)].abs();
            }
            min_lk = min_lk.min(lk);
            min_kk = min_kk.min(kk);
        }

        Gaps {
            u_x,
            u_p,
            d_p: u_x * u_p - 0.25 * (script_l + min_lk),
            d_s: u_x + u_p - min_kk,
        }
    }

    /// Full report with per-split terms and minimizing splits.
    pub fn report(&self, flat: &[f64]) -> CriterionReport {
        let params = CholeskyParams::from_flat(&self.tree_handle(), flat)
            .expect("flat layout matches evaluator");
        let lks: Vec<f64> = self.splits.iter().map(|s| script_l_k(&params, s)).collect();
        let kks: Vec<f64> = self.splits.iter().map(|s| script_k_k(&params, s)).collect();
        let g = self.gaps(flat);
        let argmin = |v: &[f64]| {
            let mut best = 0;
            for (i, x) in v.iter().enumerate() {
                if *x < v[best] {
                    best = i;
                }
            }
            self.splits[best].label()
        };
        CriterionReport {
            u_x: g.u_x,
            u_p: g.u_p,
            script_l: script_l(&params),
            script_l_k: lks.clone(),
            script_k_k: kks.clone(),
            d_p: g.d_p,
            d_s: g.d_s,
            argmin_split_p: argmin(&lks),
            argmin_split_s: argmin(&kks),
        }
    }

    fn tree_handle(&self) -> LabeledTree {
        let edges: Vec<(usize, usize)> = self
            .parents
            .iter()
            .enumerate()
            .map(|(child, &p)| (child + 1, p))
            .collect();
        LabeledTree::from_edges(self.n, &edges).expect("parents encode the tree")
    }
}

/// One-shot evaluation of both criteria.
pub fn evaluate(cm: &CovarianceMatrix, params: &CholeskyParams) -> Result<CriterionReport> {
    let ev = Evaluator::new(cm, params.tree())?;
    Ok(ev.report(&params.to_flat()))
}

// ---------------------------------------------------------------------------
// symbolic rendering (criterion-print)
// ---------------------------------------------------------------------------

/// Output format for [`render_criterion`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    Text,
    Latex,
}

fn coeff(q: char, j: usize, i: usize, f: RenderFormat) -> String {
    match f {
        RenderFormat::Text => format!("l{q}{j}{i}"),
        RenderFormat::Latex => format!("\\ell^{{{q}}}_{{{j}{i}}}"),
    }
}

fn pair_product(j: usize, i: usize, f: RenderFormat) -> String {
    match f {
        RenderFormat::Text => format!("{}*{}", coeff('x', j, i, f), coeff('p', j, i, f)),
        RenderFormat::Latex => format!("{}{}", coeff('x', j, i, f), coeff('p', j, i, f)),
    }
}

/// Renders the left-hand side `U^a` as one variance per edge plus the root
/// term, for `a = x, p` generically.
pub fn render_lhs(tree: &LabeledTree, f: RenderFormat) -> Result<String> {
    let edges = tree.child_parent_edges()?;
    let n = tree.order();
    let mut terms = Vec::new();
    for (i, j) in edges {
        terms.push(match f {
            RenderFormat::Text => format!(
                "<[D({}*a{} + {}*a{})]^2>",
                coeff('a', i, i, f),
                i,
                coeff('a', j, i, f),
                j
            ),
            RenderFormat::Latex => format!(
                "\\langle[\\Delta({}\\alpha_{} + {}\\alpha_{})]^2\\rangle",
                coeff('a', i, i, f),
                i,
                coeff('a', j, i, f),
                j
            ),
        });
    }
    terms.push(match f {
        RenderFormat::Text => format!("{}^2*<(D a{})^2>", coeff('a', n, n, f), n),
        RenderFormat::Latex => format!(
            "{}^2\\langle(\\Delta\\alpha_{})^2\\rangle",
            coeff('a', n, n, f),
            n
        ),
    });
    Ok(match f {
        RenderFormat::Text => format!("U^a = {}   (a = x, p)", terms.join(" + ")),
        RenderFormat::Latex => format!("U^{{\\alpha}} = {}", terms.join(" + ")),
    })
}

/// Renders every `K^(k)` by the edge-cut rule: an uncut child-parent pair
/// contributes `|l_ii l_ii + l_ji l_ji|` jointly, a cut pair contributes the
/// two absolute values separately, plus the root term.
pub fn render_k_expressions(tree: &LabeledTree, f: RenderFormat) -> Result<Vec<(String, String)>> {
    let edges = tree.child_parent_edges()?;
    let n = tree.order();
    let splits = bipartitions(n)?;
    let mut out = Vec::with_capacity(splits.len());
    for split in &splits {
        let mask = split.mask_i();
        let side = |v: usize| mask >> (v - 1) & 1;
        let mut terms = Vec::new();
        for &(i, j) in &edges {
            let vertex = pair_product(i, i, f);
            let edge = pair_product(j, i, f);
            if side(i) == side(j) {
                terms.push(format!("|{vertex} + {edge}|"));
            } else {
                terms.push(format!("|{vertex}|"));
                terms.push(format!("|{edge}|"));
            }
        }
        terms.push(format!("|{}|", pair_product(n, n, f)));
        let name = match f {
            RenderFormat::Text => format!("K({})", split.label()),
            RenderFormat::Latex => format!("\\mathcal{{K}}^{{({})}}", split.label()),
        };
        out.push((name, terms.join(" + ")));
    }
    Ok(out)
}

/// Full criterion rendering: LHS once, then all `K^(k)` lines.
pub fn render_criterion(tree: &LabeledTree, f: RenderFormat) -> Result<String> {
    let mut s = String::new();
    s.push_str(&render_lhs(tree, f)?);
    s.push('\n');
    for (name, expr) in render_k_expressions(tree, f)? {
        s.push_str(&format!("{name} = {expr}\n"));
    }
    s.push_str(match f {
        RenderFormat::Text => "sum criterion: U^x + U^p >= min_k K(k)",
        RenderFormat::Latex => {
            "U^{x} + U^{p} \\geq \\min_k \\mathcal{K}^{(k)}"
        }
    });
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::paper_tree;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn path3_params(dx: [f64; 3], ox: [f64; 2], dp: [f64; 3], op: [f64; 2]) -> CholeskyParams {
        CholeskyParams::new(
            &paper_tree("3").unwrap(),
            dx.to_vec(),
            ox.to_vec(),
            dp.to_vec(),
            op.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn build_l_three_mode_path() {
        let p = path3_params([1.0; 3], [1.0; 2], [1.0; 3], [1.0; 2]);
        let l = build_l(&p, Quadrature::X);
        assert_eq!(
            l.to_rows(),
            vec![
                vec![1.0, 0.0, 0.0],
                vec![1.0, 1.0, 0.0],
                vec![0.0, 1.0, 1.0]
            ]
        );
        // zero off-diagonals give a diagonal matrix
        let p0 = path3_params([2.0, 3.0, 4.0], [0.0; 2], [1.0; 3], [0.0; 2]);
        let l0 = build_l(&p0, Quadrature::X);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l0[(i, j)], if i == j { [2.0, 3.0, 4.0][i] } else { 0.0 });
            }
        }
    }

    #[test]
    fn build_l_star_support() {
        // star "4b": nonzeros exactly at the diagonal and column entries (4, i)
        let tree = paper_tree("4b").unwrap();
        let p = CholeskyParams::new(&tree, vec![1.0; 4], vec![1.0; 3], vec![1.0; 4], vec![1.0; 3])
            .unwrap();
        let l = build_l(&p, Quadrature::X);
        for i in 0..4 {
            for j in 0..4 {
                let expected = i == j || (i == 3 && j < 3);
                assert_eq!(l[(i, j)] != 0.0, expected, "({i},{j})");
            }
        }
    }

    #[test]
    fn vacuum_lhs_is_coefficient_square_sum() {
        let cm = CovarianceMatrix::vacuum(3);
        let p = path3_params([0.5, 1.5, 2.0], [0.25, -1.0], [1.0, 2.0, 3.0], [0.5, 0.5]);
        let (ux, up) = lhs_u(&cm, &p).unwrap();
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        assert_abs_diff_eq!(ux, sq(p.diag(Quadrature::X)) + sq(p.off(Quadrature::X)), epsilon = 1e-12);
        assert_abs_diff_eq!(up, sq(p.diag(Quadrature::P)) + sq(p.off(Quadrature::P)), epsilon = 1e-12);
    }

    /// Independent expansion of the variance sum from CM entries:
    /// each edge contributes `<[D(a u_i + b u_j)]^2>` with
    /// `<Du_i Du_j> = gamma_ij / 2`, plus the root variance term.
    fn lhs_by_expansion(cm: &CovarianceMatrix, p: &CholeskyParams, q: Quadrature) -> f64 {
        let g = match q {
            Quadrature::X => cm.x_block(),
            Quadrature::P => cm.p_block(),
        };
        let n = p.order();
        let mut total = 0.0;
        for (child, &b) in p.off(q).iter().enumerate() {
            let i = child + 1;
            let j = p.tree().parent_of(i).unwrap();
            let a = p.diag(q)[i - 1];
            total += 0.5
                * (a * a * g.get(i - 1, i - 1)
                    + 2.0 * a * b * g.get(i - 1, j - 1)
                    + b * b * g.get(j - 1, j - 1));
        }
        let d = p.diag(q)[n - 1];
        total + 0.5 * d * d * g.get(n - 1, n - 1)
    }

    #[test]
    fn trace_formula_matches_two_mode_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let trees = ["3", "4a", "4b", "5c", "6d"];
        for _ in 0..200 {
            let tree = paper_tree(trees[rng.gen_range(0..trees.len())]).unwrap();
            let n = tree.order();
            let cm = random_cm(n, &mut rng);
            let flat: Vec<f64> = (0..2 * (2 * n - 1)).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let p = CholeskyParams::from_flat(&tree, &flat).unwrap();
            let (ux, up) = lhs_u(&cm, &p).unwrap();
            assert_abs_diff_eq!(ux, lhs_by_expansion(&cm, &p, Quadrature::X), epsilon = 1e-10);
            assert_abs_diff_eq!(up, lhs_by_expansion(&cm, &p, Quadrature::P), epsilon = 1e-10);
        }
    }

    fn random_cm(n: usize, rng: &mut ChaCha8Rng) -> CovarianceMatrix {
        // random pure-state CM from a product of mixers and squeezers
        use crate::linalg::SymplecticMatrix;
        let mut s = SymplecticMatrix::identity(n);
        for _ in 0..6 {
            let i = rng.gen_range(1..=n);
            let next = if n > 1 && rng.gen_bool(0.6) {
                let mut j = rng.gen_range(1..=n);
                while j == i {
                    j = rng.gen_range(1..=n);
                }
                SymplecticMatrix::rotation_mixer(n, i, j, rng.gen_range(-1.0..1.0)).unwrap()
            } else {
                SymplecticMatrix::squeezer(n, i, rng.gen_range(-0.7..0.7)).unwrap()
            };
            s = next.compose(&s).unwrap();
        }
        CovarianceMatrix::from_full(&s.gram(), 1e-8).unwrap()
    }

    #[test]
    fn script_l_three_mode_expansion() {
        // seven-term expansion for the 3-path
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let p = path3_params(
                [v[0], v[1], v[2]],
                [v[3], v[4]],
                [v[5], v[6], v[7]],
                [v[8], v[9]],
            );
            let (x11, x22, x33, x21, x32) = (v[0], v[1], v[2], v[3], v[4]);
            let (p11, p22, p33, p21, p32) = (v[5], v[6], v[7], v[8], v[9]);
            let expect = (x11 * p11 + x21 * p21).powi(2)
                + (x21 * p22).powi(2)
                + (x22 * p21).powi(2)
                + (x22 * p22 + x32 * p32).powi(2)
                + (x32 * p33).powi(2)
                + (x33 * p32).powi(2)
                + (x33 * p33).powi(2);
            assert_abs_diff_eq!(script_l(&p), expect, epsilon = 1e-12);
        }
        // only the root coefficients set
        let p = path3_params([0.0, 0.0, 1.0], [0.0; 2], [0.0, 0.0, 1.0], [0.0; 2]);
        assert_eq!(script_l(&p), 1.0);
    }

    #[test]
    fn script_l_matches_naive_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let tree = paper_tree(["4a", "4b"][rng.gen_range(0..2)]).unwrap();
            let n = tree.order();
            let flat: Vec<f64> = (0..2 * (2 * n - 1)).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let p = CholeskyParams::from_flat(&tree, &flat).unwrap();
            let lx = build_l(&p, Quadrature::X);
            let lp = build_l(&p, Quadrature::P);
            let mut naive = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let mut m = 0.0;
                    for k in 0..n {
                        m += lx[(k, i)] * lp[(k, j)];
                    }
                    naive += m * m;
                }
            }
            assert_abs_diff_eq!(script_l(&p), naive, epsilon = 1e-12);
        }
    }

    /// Direct index-set evaluation of the split-restricted quantities.
    fn naive_restricted(p: &CholeskyParams, split: &Bipartition) -> (f64, f64) {
        let n = p.order();
        let lx = build_l(p, Quadrature::X);
        let lp = build_l(p, Quadrature::P);
        let part = |modes: &[usize], i: usize, j: usize| -> f64 {
            modes.iter().map(|&m| lx[(m - 1, i)] * lp[(m - 1, j)]).sum()
        };
        let mut lk = 0.0;
        let mut kk = 0.0;
        for i in 0..n {
            for j in 0..n {
                let a = part(split.side_i(), i, j);
                let b = part(split.side_j(), i, j);
                let x = a * b;
                lk += 2.0 * (x.abs() - x);
            }
            let a = part(split.side_i(), i, i);
            let b = part(split.side_j(), i, i);
            kk += a.abs() + b.abs();
        }
        (lk, kk)
    }

    #[test]
    fn restricted_terms_match_naive_index_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for key in ["4a", "4b", "5b", "5c", "6e"] {
            let tree = paper_tree(key).unwrap();
            let n = tree.order();
            let splits = bipartitions(n).unwrap();
            for _ in 0..100 {
                let flat: Vec<f64> =
                    (0..2 * (2 * n - 1)).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let p = CholeskyParams::from_flat(&tree, &flat).unwrap();
                let split = &splits[rng.gen_range(0..splits.len())];
                let (lk, kk) = naive_restricted(&p, split);
                assert_abs_diff_eq!(script_l_k(&p, split), lk, epsilon = 1e-12);
                assert_abs_diff_eq!(script_k_k(&p, split), kk, epsilon = 1e-12);
                assert!(lk >= 0.0 && kk >= 0.0);
            }
        }
    }

    #[test]
    fn three_mode_split_identities() {
        // L^(2|31) = L^(1|23) + L^(3|12) exactly, and the all-cut split
        // dominates both K values
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let splits = bipartitions(3).unwrap();
        let by_label = |l: &str| splits.iter().find(|s| s.label() == l).unwrap();
        for _ in 0..100 {
            let v: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let p = path3_params(
                [v[0], v[1], v[2]],
                [v[3], v[4]],
                [v[5], v[6], v[7]],
                [v[8], v[9]],
            );
            let l1 = script_l_k(&p, by_label("1|23"));
            let l2 = script_l_k(&p, by_label("13|2"));
            let l3 = script_l_k(&p, by_label("12|3"));
            assert_eq!(l2, l1 + l3);
            let k1 = script_k_k(&p, by_label("1|23"));
            let k2 = script_k_k(&p, by_label("13|2"));
            let k3 = script_k_k(&p, by_label("12|3"));
            assert!(k1 <= k2 + 1e-12 && k3 <= k2 + 1e-12);
        }
    }

    #[test]
    fn script_l_k_zero_for_aligned_signs() {
        let p = path3_params([1.0, 1.0, 1.0], [0.5, 0.5], [1.0, 1.0, 1.0], [0.5, 0.5]);
        let splits = bipartitions(3).unwrap();
        assert_eq!(script_l_k(&p, &splits[0]), 0.0);
    }

    #[test]
    fn k_edge_cut_rule_for_three_mode_path() {
        let p = path3_params([1.0, 2.0, 3.0], [-1.0, 0.5], [2.0, 1.0, -1.0], [1.5, 2.0]);
        let splits = bipartitions(3).unwrap();
        let d = |i: usize| p.diag(Quadrature::X)[i] * p.diag(Quadrature::P)[i];
        let e = |i: usize| p.off(Quadrature::X)[i] * p.off(Quadrature::P)[i];
        // 1|23: edge (1,2) cut, edge (2,3) uncut
        assert_abs_diff_eq!(
            script_k_k(&p, &splits[0]),
            d(0).abs() + e(0).abs() + (d(1) + e(1)).abs() + d(2).abs(),
            epsilon = 1e-12
        );
        // 12|3 = 3|12: both separate for the cut edge (2,3), joint for (1,2)
        assert_abs_diff_eq!(
            script_k_k(&p, &splits[1]),
            (d(0) + e(0)).abs() + d(1).abs() + e(1).abs() + d(2).abs(),
            epsilon = 1e-12
        );
        // 13|2: both edges cut
        assert_abs_diff_eq!(
            script_k_k(&p, &splits[2]),
            d(0).abs() + e(0).abs() + d(1).abs() + e(1).abs() + d(2).abs(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn vacuum_never_violates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for key in ["3", "4b", "5c"] {
            let tree = paper_tree(key).unwrap();
            let n = tree.order();
            let cm = CovarianceMatrix::vacuum(n);
            let ev = Evaluator::new(&cm, &tree).unwrap();
            for _ in 0..200 {
                let flat: Vec<f64> =
                    (0..2 * (2 * n - 1)).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let g = ev.gaps(&flat);
                assert!(g.d_p >= -1e-12, "d_p = {} on {key}", g.d_p);
                assert!(g.d_s >= -1e-12, "d_s = {} on {key}", g.d_s);
            }
        }
    }

    #[test]
    fn evaluate_rejects_bad_labeling_and_dimensions() {
        let bad_tree = LabeledTree::from_edges(4, &[(1, 2), (1, 3), (1, 4)]).unwrap();
        let cm = CovarianceMatrix::vacuum(4);
        assert!(matches!(
            Evaluator::new(&cm, &bad_tree),
            Err(Error::InvalidLabeling { column: 1 })
        ));
        let tree = paper_tree("3").unwrap();
        let cm4 = CovarianceMatrix::vacuum(4);
        assert!(Evaluator::new(&cm4, &tree).is_err());
    }

    #[test]
    fn mode_flip_symmetry_is_exact() {
        // negating a mode's CM couplings and the incident off-diagonal
        // coefficients leaves both gaps bitwise unchanged
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let tree = paper_tree("4a").unwrap();
        let n = tree.order();
        for _ in 0..50 {
            let cm = random_cm(n, &mut rng);
            let flat: Vec<f64> = (0..2 * (2 * n - 1)).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mode = rng.gen_range(1..=n);
            let flip_cm = {
                let conj = |b: &crate::matrix::SymMatrix| {
                    let rows: Vec<Vec<f64>> = (0..n)
                        .map(|i| {
                            (0..n)
                                .map(|j| {
                                    let s = if (i + 1 == mode) != (j + 1 == mode) { -1.0 } else { 1.0 };
                                    s * b.get(i, j)
                                })
                                .collect()
                        })
                        .collect();
                    crate::matrix::SymMatrix::from_rows(&rows, 0.0).unwrap()
                };
                CovarianceMatrix::new(conj(cm.x_block()), conj(cm.p_block())).unwrap()
            };
            let mut flat_flip = flat.clone();
            let params = CholeskyParams::from_flat(&tree, &flat).unwrap();
            for (child, _) in params.tree().child_parent_edges().unwrap() {
                let parent = params.tree().parent_of(child).unwrap();
                if child == mode || parent == mode {
                    flat_flip[n + child - 1] = -flat_flip[n + child - 1];
                    flat_flip[3 * n - 1 + child - 1] = -flat_flip[3 * n - 1 + child - 1];
                }
            }
            let ev = Evaluator::new(&cm, &tree).unwrap();
            let ev_flip = Evaluator::new(&flip_cm, &tree).unwrap();
            let g = ev.gaps(&flat);
            let gf = ev_flip.gaps(&flat_flip);
            assert_eq!(g.d_p, gf.d_p);
            assert_eq!(g.d_s, gf.d_s);
        }
    }

    #[test]
    fn gaps_and_report_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let tree = paper_tree("5b").unwrap();
        let n = tree.order();
        let cm = random_cm(n, &mut rng);
        let ev = Evaluator::new(&cm, &tree).unwrap();
        for _ in 0..20 {
            let flat: Vec<f64> = (0..2 * (2 * n - 1)).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let g = ev.gaps(&flat);
            let r = ev.report(&flat);
            assert_eq!(g.d_p, r.d_p);
            assert_eq!(g.d_s, r.d_s);
        }
    }

    #[test]
    fn render_three_mode_k_expressions() {
        let tree = paper_tree("3").unwrap();
        let lines = render_k_expressions(&tree, RenderFormat::Text).unwrap();
        let find = |label: &str| {
            lines
                .iter()
                .find(|(name, _)| name == &format!("K({label})"))
                .map(|(_, e)| e.as_str())
                .unwrap()
        };
        assert_eq!(
            find("1|23"),
            "|lx11*lp11| + |lx21*lp21| + |lx22*lp22 + lx32*lp32| + |lx33*lp33|"
        );
        assert_eq!(
            find("13|2"),
            "|lx11*lp11| + |lx21*lp21| + |lx22*lp22| + |lx32*lp32| + |lx33*lp33|"
        );
        assert_eq!(
            find("12|3"),
            "|lx11*lp11 + lx21*lp21| + |lx22*lp22| + |lx32*lp32| + |lx33*lp33|"
        );
    }

    #[test]
    fn render_star_lhs_has_central_mode_in_every_edge_term() {
        let tree = paper_tree("4b").unwrap();
        let lhs = render_lhs(&tree, RenderFormat::Text).unwrap();
        for i in 1..=3 {
            assert!(lhs.contains(&format!("la{i}{i}*a{i} + la4{i}*a4")), "{lhs}");
        }
        assert!(lhs.contains("la44^2*<(D a4)^2>"));
    }

    #[test]
    fn params_json_round_trip() {
        let p = path3_params([0.9, 0.2, 0.01], [-0.2, -1.0], [1.0, 1.0, 0.01], [0.98, 1.0]);
        let j = p.to_json();
        let text = serde_json::to_string(&j).unwrap();
        let back: ParamsJson = serde_json::from_str(&text).unwrap();
        let q = CholeskyParams::from_json(&back).unwrap();
        assert_eq!(p.to_flat(), q.to_flat());
    }
}
