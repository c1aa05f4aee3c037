//! Reduced designs, reduced normal equations and sweep factorizations of
//! the residual operator.
//!
//! A sweep `I - P` removes the component of a vector in the range of `P`.
//! Fitting terms in order, each term's indicator matrix is first reduced by
//! the projector of everything already fitted, `X~ = (I - P_prior) X`, and
//! the reduced normal equations `X~'X~ tau = X~'y*` are then solved with
//! a Moore-Penrose inverse.

use crate::design::{is_bib, BlockDesign};
use crate::error::{Error, Result};
use crate::matrix::{dot, max_abs_vec, sub_vec, DenseMatrix};
use crate::model::{grand_mean_projector, indicator_matrix, ModelTerm};
use crate::spectral::{
    check_order, eigh, numeric_rank, projector_from_design, projector_from_eigen,
    pseudo_inverse_from_eigen,
    Projector, Tolerance,
};

/// `X~ = (I - P_prior) X` for one model term.
#[derive(Clone, Debug)]
pub struct ReducedDesign {
    pub factor_name: String,
    pub labels: Vec<String>,
    pub matrix: DenseMatrix,
    pub prior: Projector,
}

/// Solution of one set of reduced normal equations.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub factor_name: String,
    pub labels: Vec<String>,
    /// Per-level effects, centered to sum to zero.
    pub effects: Vec<f64>,
    /// `P~ y*`
    pub fitted: Vec<f64>,
    /// `y*' P~ y*`
    pub ss_adjusted: f64,
    /// Rank of `X~'X~`.
    pub df: usize,
    /// The adjusted projector `P~ = X~ (X~'X~)^+ X~'`.
    pub projector: Projector,
    /// Set when `df < levels - 1`, e.g. treatments of a disconnected block design.
    pub rank_deficient: bool,
}

pub fn reduce(term: &ModelTerm, prior: &Projector) -> Result<ReducedDesign> {
    check_order("reduce", prior.order(), term.n())?;
    let absorbed = prior.matrix().matmul(&term.design);
    Ok(ReducedDesign {
        factor_name: term.factor_name.clone(),
        labels: term.labels.clone(),
        matrix: term.design.sub(&absorbed),
        prior: prior.clone(),
    })
}

/// Solves `X~'X~ tau = X~'y*` through the Moore-Penrose inverse of `X~'X~`.
pub fn solve_reduced(rd: &ReducedDesign, ystar: &[f64], tol: Tolerance) -> Result<FitResult> {
    let xt = &rd.matrix;
    check_order("solve_reduced", xt.rows(), ystar.len())?;
    let p = xt.cols();
    let gram = xt.tr_matmul(xt);
    let eig = eigh(&gram, tol)?;
    let df = numeric_rank(&eig, tol);
    let ginv = pseudo_inverse_from_eigen(&eig, tol);

    let mut effects = ginv.mul_vec(&xt.tr_mul_vec(ystar));
    center(&mut effects);

    let projector = projector_from_eigen(xt, &eig, tol)?;
    let fitted = projector.apply(ystar);
    let ss_adjusted = dot(ystar, &fitted);

    Ok(FitResult {
        factor_name: rd.factor_name.clone(),
        labels: rd.labels.clone(),
        effects,
        fitted,
        ss_adjusted,
        df,
        projector,
        rank_deficient: df + 1 < p,
    })
}

pub(crate) fn center(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Residual operator `I - P_B - P~_T`, checked against the two-stage
/// factorization `(I - P~_T)(I - P_B)`.
pub fn residual_operator(
    pb: &Projector,
    pt_adj: &Projector,
    tol: Tolerance,
) -> Result<DenseMatrix> {
    check_order("residual_operator", pb.order(), pt_adj.order())?;
    let n = pb.order();
    let cross = pt_adj.matrix().matmul(pb.matrix()).max_abs();
    if cross > tol.abs_eps {
        return Err(Error::NotOrthogonalComponents { deviation: cross });
    }
    let ident = DenseMatrix::identity(n);
    let direct = ident.sub(pb.matrix()).sub(pt_adj.matrix());
    let two_stage = ident
        .sub(pt_adj.matrix())
        .matmul(&ident.sub(pb.matrix()));
    let gap = direct.max_abs_diff(&two_stage);
    if gap > tol.abs_eps {
        return Err(Error::NotOrthogonalComponents { deviation: gap });
    }
    Ok(direct)
}

/// Three-stage sweep `(I - P_B)(I - (1/e) P_T)(I - P_B) y`.
///
/// For a balanced incomplete block design with efficiency factor `e` this
/// equals the two-stage residual `(I - P~_T)(I - P_B) y` while only ever
/// averaging within blocks and within treatments.
pub fn bib_three_stage(
    pb: &Projector,
    pt: &Projector,
    e: f64,
    y: &[f64],
    tol: Tolerance,
) -> Result<Vec<f64>> {
    if !(e > 0.0 && e <= 1.0 + tol.abs_eps) {
        return Err(Error::EfficiencyOutOfRange(e));
    }
    check_order("bib_three_stage", pb.order(), pt.order())?;
    check_order("bib_three_stage", pb.order(), y.len())?;
    let a = pb.sweep(y);
    let pta = pt.apply(&a);
    let b: Vec<f64> = a.iter().zip(&pta).map(|(ai, pi)| ai - pi / e).collect();
    Ok(pb.sweep(&b))
}

/// Projectors and residuals of a block design computed both ways.
#[derive(Clone, Debug)]
pub struct BibResidualCheck {
    pub efficiency: f64,
    pub three_stage: Vec<f64>,
    pub two_stage: Vec<f64>,
    pub max_deviation: f64,
}

/// Runs the three-stage sweep on a BIB design and compares it with the
/// general two-stage residual.
pub fn bib_residual_check(
    design: &BlockDesign,
    y: &[f64],
    tol: Tolerance,
) -> Result<BibResidualCheck> {
    check_order("bib_residual_check", design.n, y.len())?;
    let status = is_bib(design)?;
    let lambda = match (status.is_bib, status.lambda) {
        (true, Some(l)) => l,
        _ => return Err(Error::NotBib),
    };
    let e = (lambda * design.v) as f64 / (design.r * design.k) as f64;
    let zt = indicator_matrix(&design.block_factor(), design.n)?;
    let xt = indicator_matrix(&design.treatment_factor(), design.n)?;
    let pb = projector_from_design(&zt.design, tol)?;
    let pt = projector_from_design(&xt.design, tol)?;
    let three_stage = bib_three_stage(&pb, &pt, e, y, tol)?;

    let fit = solve_reduced(&reduce(&xt, &pb)?, y, tol)?;
    let two_stage = fit.projector.sweep(&pb.sweep(y));
    let max_deviation = max_abs_vec(&sub_vec(&three_stage, &two_stage));
    Ok(BibResidualCheck {
        efficiency: e,
        three_stage,
        two_stage,
        max_deviation,
    })
}

/// Result of fitting terms in order.
#[derive(Clone, Debug)]
pub struct SweepOutcome {
    /// One fit per term; each adjusted for the mean and all earlier terms.
    pub fits: Vec<FitResult>,
    pub residual: Vec<f64>,
    pub residual_df: usize,
    pub residual_ss: f64,
    /// `y*'y*`
    pub total_ss: f64,
    pub n: usize,
}

/// Sequential (ignoring / adjusted) sweep over ordered terms.
///
/// The first term is reduced by the grand mean only; each later term by the
/// accumulated projector of the mean and every earlier adjusted term.
pub fn sequential_sweep(
    terms: &[ModelTerm],
    ystar: &[f64],
    tol: Tolerance,
) -> Result<SweepOutcome> {
    let first = terms
        .first()
        .ok_or_else(|| Error::InvalidParameters("sequential_sweep needs at least one term".into()))?;
    let n = first.n();
    check_order("sequential_sweep", n, ystar.len())?;
    let norm = ystar.iter().map(|v| v.abs()).sum::<f64>();
    let sum = ystar.iter().sum::<f64>();
    if sum.abs() > tol.abs_eps * norm.max(1.0) {
        return Err(Error::InvalidParameters(format!(
            "response is not mean-centered (sum = {sum:e})"
        )));
    }

    let mut accumulated = grand_mean_projector(n)?;
    let mut fits = Vec::with_capacity(terms.len());
    let mut residual = ystar.to_vec();
    for term in terms {
        let rd = reduce(term, &accumulated)?;
        let fit = solve_reduced(&rd, ystar, tol).map_err(|e| e.context(format!("term '{}'", term.factor_name)))?;
        accumulated = accumulated.orthogonal_sum(&fit.projector, tol)?;
        residual
            .iter_mut()
            .zip(&fit.fitted)
            .for_each(|(r, f)| *r -= f);
        fits.push(fit);
    }
    Ok(SweepOutcome {
        fits,
        residual_ss: dot(&residual, &residual),
        residual,
        residual_df: n - accumulated.rank(),
        total_ss: dot(ystar, ystar),
        n,
    })
}
