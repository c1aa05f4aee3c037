//! Symmetric spectral machinery: eigendecomposition, numeric rank,
//! Moore-Penrose inverses and orthogonal projectors.
//!
//! Every generalized inverse in the crate is the Moore-Penrose one, built by
//! inverting the nonzero eigenvalues of a symmetric matrix. Projectors
//! `X (X'X)^+ X'` do not depend on which generalized inverse is used, so
//! this choice only fixes the reported solution of singular normal
//! equations (the minimum-norm one).

use crate::error::{Error, Result};
use crate::matrix::{dot, DenseMatrix};

/// Default relative threshold below which eigenvalues count as zero.
pub const DEFAULT_REL_EPS: f64 = 1e-10;
/// Default absolute threshold for matrix identities.
pub const DEFAULT_ABS_EPS: f64 = 1e-9;
/// Maximum number of cyclic Jacobi sweeps.
pub const MAX_SWEEPS: usize = 100;
/// How far a projector trace may sit from an integer before it is rejected.
pub const TRACE_ROUNDING_TOL: f64 = 1e-6;

/// Numerical thresholds shared by all operations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    /// Relative threshold for treating eigenvalues as zero.
    pub rel_eps: f64,
    /// Absolute threshold for matrix equalities.
    pub abs_eps: f64,
}

impl Tolerance {
    pub fn new(rel_eps: f64, abs_eps: f64) -> Result<Self> {
        if !(rel_eps > 0.0 && abs_eps > 0.0 && rel_eps.is_finite() && abs_eps.is_finite()) {
            return Err(Error::InvalidTolerance { rel_eps, abs_eps });
        }
        Ok(Self { rel_eps, abs_eps })
    }

    /// The cutoff below which an eigenvalue in `values` is considered zero.
    pub fn zero_threshold(&self, values: &[f64]) -> f64 {
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        self.rel_eps * scale
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel_eps: DEFAULT_REL_EPS,
            abs_eps: DEFAULT_ABS_EPS,
        }
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
///
/// Column `i` of `vectors` is the unit eigenvector for `values[i]`. Inside a
/// repeated eigenvalue only the spanned eigenspace is meaningful.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl SymmetricEigen {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.col(i)
    }

    /// `G diag(f(lambda)) G'`, skipping pairs for which `f` returns `None`.
    pub fn spectral_map(&self, f: impl Fn(f64) -> Option<f64>) -> DenseMatrix {
        let n = self.vectors.rows();
        let mut out = DenseMatrix::zeros(n, n);
        for (k, &lambda) in self.values.iter().enumerate() {
            let Some(w) = f(lambda) else { continue };
            if w == 0.0 {
                continue;
            }
            let g = self.vectors.col(k);
            for i in 0..n {
                let gi = w * g[i];
                if gi == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += gi * g[j];
                }
            }
        }
        out.symmetrized()
    }

    /// `G Lambda G'`.
    pub fn reconstruct(&self) -> DenseMatrix {
        self.spectral_map(Some)
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// The input is replaced by `(H + H')/2` when its asymmetry is within
/// `abs_eps`; larger asymmetry is an error.
pub fn eigh(h: &DenseMatrix, tol: Tolerance) -> Result<SymmetricEigen> {
    if !h.is_square() {
        return Err(Error::NonSquare {
            rows: h.rows(),
            cols: h.cols(),
        });
    }
    let deviation = h.asymmetry();
    if deviation > tol.abs_eps {
        return Err(Error::Asymmetric { deviation });
    }
    let n = h.rows();
    let mut a = h.symmetrized();
    let mut v = DenseMatrix::identity(n);
    let target = tol.rel_eps * a.frobenius();

    let mut converged_at = None;
    for sweep in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= target {
            converged_at = Some(sweep);
            break;
        }
        jacobi_sweep(&mut a, &mut v);
    }
    if converged_at.is_none() {
        if off_diagonal_norm(&a) > target {
            return Err(Error::NoConvergence { sweeps: MAX_SWEEPS });
        }
    } else if converged_at != Some(0) {
        // polishing sweep
        jacobi_sweep(&mut a, &mut v);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymmetricEigen { values, vectors })
}

fn off_diagonal_norm(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

fn jacobi_sweep(a: &mut DenseMatrix, v: &mut DenseMatrix) {
    let n = a.rows();
    for p in 0..n {
        for q in (p + 1)..n {
            let apq = a[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = if theta.abs() > 1e150 {
                0.5 / theta
            } else {
                theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
            };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..n {
                let akp = a[(k, p)];
                let akq = a[(k, q)];
                a[(k, p)] = c * akp - s * akq;
                a[(k, q)] = s * akp + c * akq;
            }
            for k in 0..n {
                let apk = a[(p, k)];
                let aqk = a[(q, k)];
                a[(p, k)] = c * apk - s * aqk;
                a[(q, k)] = s * apk + c * aqk;
            }
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
            for k in 0..n {
                let vkp = v[(k, p)];
                let vkq = v[(k, q)];
                v[(k, p)] = c * vkp - s * vkq;
                v[(k, q)] = s * vkp + c * vkq;
            }
        }
    }
}

/// Number of eigenvalues with `|lambda| > rel_eps * max(1, max |lambda|)`.
pub fn numeric_rank(eig: &SymmetricEigen, tol: Tolerance) -> usize {
    let cutoff = tol.zero_threshold(&eig.values);
    eig.values.iter().filter(|l| l.abs() > cutoff).count()
}

/// Moore-Penrose inverse assembled from an existing decomposition.
pub fn pseudo_inverse_from_eigen(eig: &SymmetricEigen, tol: Tolerance) -> DenseMatrix {
    let cutoff = tol.zero_threshold(&eig.values);
    eig.spectral_map(|l| (l.abs() > cutoff).then(|| 1.0 / l))
}

/// Moore-Penrose inverse `G Theta G'` of a symmetric matrix.
pub fn moore_penrose(h: &DenseMatrix, tol: Tolerance) -> Result<DenseMatrix> {
    let eig = eigh(h, tol)?;
    Ok(pseudo_inverse_from_eigen(&eig, tol))
}

/// A symmetric idempotent matrix together with its rank.
#[derive(Clone, Debug)]
pub struct Projector {
    matrix: DenseMatrix,
    rank: usize,
}

impl Projector {
    /// Validates `m` as an orthogonal projector: square, symmetric and
    /// idempotent within `abs_eps`, with a trace within
    /// [`TRACE_ROUNDING_TOL`] of an integer. The stored matrix is
    /// symmetrized.
    pub fn from_matrix(m: DenseMatrix, tol: Tolerance) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NonSquare {
                rows: m.rows(),
                cols: m.cols(),
            });
        }
        let asym = m.asymmetry();
        if asym > tol.abs_eps {
            return Err(Error::NotAProjector(format!("asymmetry {asym:e}")));
        }
        let matrix = m.symmetrized();
        let idem = matrix.matmul(&matrix).max_abs_diff(&matrix);
        if idem > tol.abs_eps {
            return Err(Error::NotAProjector(format!("|P^2 - P| = {idem:e}")));
        }
        let rank = rank_from_trace(matrix.trace())?;
        Ok(Self { matrix, rank })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            matrix: DenseMatrix::zeros(n, n),
            rank: 0,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DenseMatrix::identity(n),
            rank: n,
        }
    }

    pub(crate) fn from_parts_unchecked(matrix: DenseMatrix, rank: usize) -> Self {
        debug_assert!(matrix.is_square());
        Self { matrix, rank }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.matrix
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Order n of the n x n matrix.
    pub fn order(&self) -> usize {
        self.matrix.rows()
    }

    /// `P v`
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(v)
    }

    /// The sweep `(I - P) v`.
    pub fn sweep(&self, v: &[f64]) -> Vec<f64> {
        let pv = self.apply(v);
        v.iter().zip(pv).map(|(a, b)| a - b).collect()
    }

    /// `v' P v`
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.apply(v))
    }

    /// `I - P`
    pub fn complement(&self) -> Projector {
        let n = self.order();
        Projector {
            matrix: DenseMatrix::identity(n).sub(&self.matrix),
            rank: n - self.rank,
        }
    }

    /// Sum of two projectors onto orthogonal subspaces, validated.
    pub fn orthogonal_sum(&self, other: &Projector, tol: Tolerance) -> Result<Projector> {
        check_order("orthogonal_sum", self.order(), other.order())?;
        let cross = self.matrix.matmul(&other.matrix).max_abs();
        if cross > tol.abs_eps {
            return Err(Error::NotOrthogonalComponents { deviation: cross });
        }
        Projector::from_matrix(self.matrix.add(&other.matrix), tol)
    }

    /// `self - other` where `other` projects onto a subspace of `self`'s range.
    pub fn difference(&self, other: &Projector, tol: Tolerance) -> Result<Projector> {
        check_order("difference", self.order(), other.order())?;
        Projector::from_matrix(self.matrix.sub(&other.matrix), tol)
    }
}

pub(crate) fn check_order(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

/// Rounds a projector trace to its rank, rejecting non-integral traces.
pub fn rank_from_trace(trace: f64) -> Result<usize> {
    let rounded = trace.round();
    if (trace - rounded).abs() >= TRACE_ROUNDING_TOL || rounded < 0.0 {
        return Err(Error::NotAProjector(format!("trace {trace} is not integral")));
    }
    Ok(rounded as usize)
}

/// The Moore-Penrose inverse of `X'X`.
pub fn gram_pseudo_inverse(x: &DenseMatrix, tol: Tolerance) -> Result<DenseMatrix> {
    moore_penrose(&x.tr_matmul(x), tol)
}

/// `X G X'` for a caller-supplied generalized inverse `G` of `X'X`.
///
/// Any generalized inverse gives the same projector.
pub fn projector_from_ginverse(
    x: &DenseMatrix,
    g: &DenseMatrix,
    tol: Tolerance,
) -> Result<Projector> {
    check_order("projector_from_ginverse", x.cols(), g.rows())?;
    check_order("projector_from_ginverse", x.cols(), g.cols())?;
    let p = x.matmul(g).matmul_tr(x);
    Projector::from_matrix(p, tol)
}

/// Orthonormal basis `U` (n x r) of the column space of `X`, given the
/// eigendecomposition of `X'X`.
///
/// `X V_r diag(l_r)^(-1/2)` is orthonormalized once more through the
/// eigendecomposition of its own Gram matrix, so `U U'` is idempotent to
/// roundoff even when `X` is ill-conditioned.
pub fn column_basis(x: &DenseMatrix, eig: &SymmetricEigen, tol: Tolerance) -> Result<DenseMatrix> {
    check_order("column_basis", x.cols(), eig.vectors.rows())?;
    let cutoff = tol.zero_threshold(&eig.values);
    let kept: Vec<usize> = (0..eig.values.len())
        .filter(|&k| eig.values[k].abs() > cutoff)
        .collect();
    let mut scaled = DenseMatrix::zeros(x.cols(), kept.len());
    for (c, &k) in kept.iter().enumerate() {
        let w = 1.0 / eig.values[k].abs().sqrt();
        for i in 0..x.cols() {
            scaled[(i, c)] = w * eig.vectors[(i, k)];
        }
    }
    let u = x.matmul(&scaled);
    if kept.is_empty() {
        return Ok(u);
    }
    let inner = eigh(&u.tr_matmul(&u), tol)?;
    if inner.values.iter().any(|&m| m <= 0.5) {
        return Err(Error::NotAProjector(format!(
            "column basis lost orthogonality (smallest Gram eigenvalue {:e})",
            inner.values.last().copied().unwrap_or(0.0)
        )));
    }
    let r = kept.len();
    let fix = DenseMatrix::from_fn(r, r, |i, j| inner.vectors[(i, j)] / inner.values[j].sqrt());
    Ok(u.matmul(&fix))
}

/// `U U'` from an orthonormal basis, with its trace checked against `rank`.
fn projector_from_basis(u: &DenseMatrix, rank: usize) -> Result<Projector> {
    let p = u.matmul_tr(u).symmetrized();
    let trace_gap = (p.trace() - rank as f64).abs();
    if trace_gap >= TRACE_ROUNDING_TOL {
        return Err(Error::NotAProjector(format!(
            "trace differs from rank {rank} by {trace_gap:e}"
        )));
    }
    Ok(Projector::from_parts_unchecked(p, rank))
}

/// `X (X'X)^+ X'` from an existing decomposition of `X'X`.
pub fn projector_from_eigen(
    x: &DenseMatrix,
    eig: &SymmetricEigen,
    tol: Tolerance,
) -> Result<Projector> {
    let u = column_basis(x, eig, tol)?;
    projector_from_basis(&u, numeric_rank(eig, tol))
}

/// Orthogonal projector onto the column space of `X`.
pub fn projector_from_design(x: &DenseMatrix, tol: Tolerance) -> Result<Projector> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::InvalidShape {
            rows: x.rows(),
            cols: x.cols(),
            found: 0,
        });
    }
    let eig = eigh(&x.tr_matmul(x), tol)?;
    projector_from_eigen(x, &eig, tol)
}

/// Excess variance of an alternative unbiased linear estimator over least
/// squares.
///
/// With `G = (X'X)^+`, `P = X G X'` and `L = G X' + M (I - P)` (so
/// `X L X = X`), returns `gamma' (XL)(XL)' gamma - gamma' P gamma`. The result
/// is never meaningfully negative.
pub fn gauss_markov_excess(
    x: &DenseMatrix,
    m: &DenseMatrix,
    gamma: &[f64],
    tol: Tolerance,
) -> Result<f64> {
    let (n, p) = (x.rows(), x.cols());
    check_order("gauss_markov_excess: M rows", p, m.rows())?;
    check_order("gauss_markov_excess: M cols", n, m.cols())?;
    check_order("gauss_markov_excess: gamma", n, gamma.len())?;
    let proj = projector_from_design(x, tol)?.matrix().clone();
    let resid = DenseMatrix::identity(n).sub(&proj);
    // X G X' = P
    let xl = proj.add(&x.matmul(m).matmul(&resid));
    let w = xl.tr_mul_vec(gamma);
    Ok(dot(&w, &w) - dot(gamma, &proj.mul_vec(gamma)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn pairs_information() -> DenseMatrix {
        DenseMatrix::from_rows(&[
            [2.0, 0.0, -1.0, -1.0],
            [0.0, 2.0, -1.0, -1.0],
            [-1.0, -1.0, 2.0, 0.0],
            [-1.0, -1.0, 0.0, 2.0],
        ])
        .unwrap()
        .scale(0.25)
    }

    #[test]
    fn tolerance_must_be_positive() {
        assert!(Tolerance::new(0.0, 1e-9).is_err());
        assert!(Tolerance::new(1e-10, -1.0).is_err());
        assert!(Tolerance::new(1e-10, 1e-9).is_ok());
    }

    #[test]
    fn eigh_identity() {
        let e = eigh(&DenseMatrix::identity(3), tol()).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        let gtg = e.vectors.tr_matmul(&e.vectors);
        assert!(gtg.max_abs_diff(&DenseMatrix::identity(3)) < 1e-15);
    }

    #[test]
    fn eigh_all_ones() {
        let e = eigh(&DenseMatrix::ones(2, 2), tol()).unwrap();
        assert!((e.values[0] - 2.0).abs() < 1e-14);
        assert!(e.values[1].abs() < 1e-14);
        let g0 = e.vector(0);
        assert!((g0[0].abs() - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((g0[0] - g0[1]).abs() < 1e-14);
    }

    #[test]
    fn eigh_information_matrix() {
        let a = pairs_information();
        let e = eigh(&a, tol()).unwrap();
        for (got, want) in e.values.iter().zip([1.0, 0.5, 0.5, 0.0]) {
            assert!((got - want).abs() < 1e-13, "{:?}", e.values);
        }
        assert!(e.reconstruct().max_abs_diff(&a) < 1e-14);
        assert!((e.values.iter().sum::<f64>() - a.trace()).abs() < 1e-14);
        assert_eq!(numeric_rank(&e, tol()), 3);
    }

    #[test]
    fn eigh_errors() {
        let rect = DenseMatrix::zeros(2, 3);
        assert!(matches!(eigh(&rect, tol()), Err(Error::NonSquare { .. })));
        let asym = DenseMatrix::from_rows(&[[1.0, 0.0], [1e-3, 1.0]]).unwrap();
        assert!(matches!(eigh(&asym, tol()), Err(Error::Asymmetric { .. })));
        let tiny = DenseMatrix::from_rows(&[[1.0, 0.0], [1e-12, 1.0]]).unwrap();
        assert!(eigh(&tiny, tol()).is_ok());
    }

    #[test]
    fn eigh_zero_and_empty() {
        let e = eigh(&DenseMatrix::zeros(3, 3), tol()).unwrap();
        assert_eq!(numeric_rank(&e, tol()), 0);
        let e = eigh(&DenseMatrix::zeros(0, 0), tol()).unwrap();
        assert!(e.is_empty());
    }

    #[test]
    fn ranks() {
        let e = eigh(&DenseMatrix::identity(3), tol()).unwrap();
        assert_eq!(numeric_rank(&e, tol()), 3);
        let e = eigh(&DenseMatrix::ones(2, 2), tol()).unwrap();
        assert_eq!(numeric_rank(&e, tol()), 1);
    }

    #[test]
    fn moore_penrose_examples() {
        let i4 = DenseMatrix::identity(4);
        assert!(moore_penrose(&i4, tol()).unwrap().max_abs_diff(&i4) < 1e-15);
        let j2 = DenseMatrix::ones(2, 2);
        let mp = moore_penrose(&j2, tol()).unwrap();
        assert!(mp.max_abs_diff(&j2.scale(0.25)) < 1e-15);
    }

    #[test]
    fn moore_penrose_inverts_cefs() {
        let a = pairs_information();
        let ap = moore_penrose(&a, tol()).unwrap();
        let e = eigh(&ap, tol()).unwrap();
        for (got, want) in e.values.iter().zip([2.0, 2.0, 1.0, 0.0]) {
            assert!((got - want).abs() < 1e-12, "{:?}", e.values);
        }
        // A^+ 1 = 0
        assert!(ap.mul_vec(&[1.0; 4]).iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn grand_mean_projector_from_ones() {
        let x = DenseMatrix::ones(4, 1);
        let p = projector_from_design(&x, tol()).unwrap();
        assert_eq!(p.rank(), 1);
        assert!(p.matrix().max_abs_diff(&DenseMatrix::ones(4, 4).scale(0.25)) < 1e-15);
    }

    #[test]
    fn projector_rejects_non_idempotent() {
        let m = DenseMatrix::identity(2).scale(0.5);
        assert!(matches!(
            Projector::from_matrix(m, tol()),
            Err(Error::NotAProjector(_))
        ));
        assert_eq!(rank_from_trace(2.0000000001).unwrap(), 2);
        assert!(rank_from_trace(1.5).is_err());
    }

    #[test]
    fn projector_algebra() {
        let pg = projector_from_design(&DenseMatrix::ones(4, 1), tol()).unwrap();
        let comp = pg.complement();
        assert_eq!(comp.rank(), 3);
        let sum = pg.orthogonal_sum(&comp, tol()).unwrap();
        assert!(sum.matrix().max_abs_diff(&DenseMatrix::identity(4)) < 1e-15);
        assert!(matches!(
            pg.orthogonal_sum(&pg, tol()),
            Err(Error::NotOrthogonalComponents { .. })
        ));
        let v = [1.0, 2.0, 3.0, 6.0];
        assert_eq!(pg.sweep(&v), vec![-2.0, -1.0, 0.0, 3.0]);
        assert!((comp.quadratic_form(&v) - 14.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_markov_least_squares_choice_has_no_excess() {
        let x = DenseMatrix::from_rows(&[[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 4.0]]).unwrap();
        let m = DenseMatrix::zeros(2, 4);
        let ex = gauss_markov_excess(&x, &m, &[0.3, -1.0, 2.0, 0.5], tol()).unwrap();
        assert!(ex.abs() < 1e-12);
        assert!(matches!(
            gauss_markov_excess(&x, &DenseMatrix::zeros(3, 4), &[0.0; 4], tol()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
