//! Equireplicate, equal-block-size incomplete block designs: incidence and
//! concurrence matrices, connectivity, the information matrix and the
//! canonical efficiency factors, plus balanced incomplete block (BIB)
//! recognition.

use std::collections::VecDeque;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, DenseMatrix};
use crate::model::Factor;
use crate::spectral::{eigh, Tolerance};

/// A block design with `v` treatments in `b` blocks of `k` units each,
/// every treatment replicated `r` times.
///
/// `assignment[h] = (block, treatment)` for unit `h`, both zero-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDesign {
    pub v: usize,
    pub b: usize,
    pub k: usize,
    pub r: usize,
    pub n: usize,
    pub assignment: Vec<(usize, usize)>,
    pub block_labels: Vec<String>,
    pub treatment_labels: Vec<String>,
}

impl BlockDesign {
    /// Validates an assignment: every block has the same size and every
    /// treatment the same replication.
    pub fn new(
        assignment: Vec<(usize, usize)>,
        block_labels: Vec<String>,
        treatment_labels: Vec<String>,
    ) -> Result<Self> {
        let n = assignment.len();
        if n == 0 {
            return Err(Error::ZeroUnits);
        }
        let (b, v) = (block_labels.len(), treatment_labels.len());
        let mut block_sizes = vec![0usize; b];
        let mut reps = vec![0usize; v];
        for &(blk, trt) in &assignment {
            if blk >= b {
                return Err(Error::LevelOutOfRange {
                    factor: "block".into(),
                    level: blk,
                    num_levels: b,
                });
            }
            if trt >= v {
                return Err(Error::LevelOutOfRange {
                    factor: "treatment".into(),
                    level: trt,
                    num_levels: v,
                });
            }
            block_sizes[blk] += 1;
            reps[trt] += 1;
        }
        let k = block_sizes[0];
        if let Some(j) = block_sizes.iter().position(|&s| s != k) {
            return Err(Error::UnequalBlockSizes {
                block: block_labels[j].clone(),
                size: block_sizes[j],
                expected: k,
            });
        }
        let r = reps[0];
        if let Some(i) = reps.iter().position(|&c| c != r) {
            return Err(Error::UnequalReplication {
                treatment: treatment_labels[i].clone(),
                count: reps[i],
                expected: r,
            });
        }
        Ok(Self {
            v,
            b,
            k,
            r,
            n,
            assignment,
            block_labels,
            treatment_labels,
        })
    }

    /// Builds a design from block contents, listed block by block with
    /// zero-based treatment indices. Units are numbered block-major and
    /// labels are the one-based indices.
    pub fn from_block_contents(blocks: &[Vec<usize>]) -> Result<Self> {
        let v = blocks
            .iter()
            .flatten()
            .max()
            .map_or(0, |&m| m + 1);
        let assignment = blocks
            .iter()
            .enumerate()
            .flat_map(|(j, trts)| trts.iter().map(move |&t| (j, t)))
            .collect();
        Self::new(
            assignment,
            (1..=blocks.len()).map(|j| j.to_string()).collect(),
            (1..=v).map(|i| i.to_string()).collect(),
        )
    }

    /// Pairs a block factor with a treatment factor over the same units.
    pub fn from_factors(block: &Factor, treatment: &Factor) -> Result<Self> {
        if block.len() != treatment.len() {
            return Err(Error::DimensionMismatch {
                context: "BlockDesign::from_factors",
                expected: block.len(),
                found: treatment.len(),
            });
        }
        let assignment = block
            .levels
            .iter()
            .copied()
            .zip(treatment.levels.iter().copied())
            .collect();
        Self::new(assignment, block.labels.clone(), treatment.labels.clone())
    }

    pub fn block_factor(&self) -> Factor {
        Factor {
            name: "block".into(),
            levels: self.assignment.iter().map(|a| a.0).collect(),
            labels: self.block_labels.clone(),
        }
    }

    pub fn treatment_factor(&self) -> Factor {
        Factor {
            name: "treatment".into(),
            levels: self.assignment.iter().map(|a| a.1).collect(),
            labels: self.treatment_labels.clone(),
        }
    }

    /// Treatments of each block, in unit order.
    pub fn block_contents(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::with_capacity(self.k); self.b];
        for &(blk, trt) in &self.assignment {
            out[blk].push(trt);
        }
        out
    }
}

/// `v x b` incidence matrix `N = X'Z`.
pub fn incidence(d: &BlockDesign) -> DenseMatrix {
    let mut nmat = DenseMatrix::zeros(d.v, d.b);
    for &(blk, trt) in &d.assignment {
        nmat[(trt, blk)] += 1.0;
    }
    nmat
}

/// Concurrence matrix `NN'`.
pub fn concurrence(nmat: &DenseMatrix) -> DenseMatrix {
    nmat.matmul_tr(nmat)
}

/// Whether every pair of treatments is linked through blocks, by breadth
/// first search over the treatment-block incidence graph.
pub fn is_connected(nmat: &DenseMatrix) -> bool {
    let (v, b) = (nmat.rows(), nmat.cols());
    if v == 0 {
        return true;
    }
    let mut seen_trt = vec![false; v];
    let mut seen_blk = vec![false; b];
    let mut queue = VecDeque::from([0usize]);
    seen_trt[0] = true;
    while let Some(t) = queue.pop_front() {
        for j in 0..b {
            if nmat[(t, j)] > 0.0 && !seen_blk[j] {
                seen_blk[j] = true;
                for (i, seen) in seen_trt.iter_mut().enumerate() {
                    if nmat[(i, j)] > 0.0 && !*seen {
                        *seen = true;
                        queue.push_back(i);
                    }
                }
            }
        }
    }
    seen_trt.into_iter().all(|s| s)
}

/// `A = I - NN'/(rk)`, equal to `(1/r) X~'X~` with `X~ = (I - P_B) X`.
pub fn information_matrix(d: &BlockDesign) -> DenseMatrix {
    let nnt = concurrence(&incidence(d));
    let scale = 1.0 / (d.r * d.k) as f64;
    DenseMatrix::identity(d.v).sub(&nnt.scale(scale))
}

/// Spectral summary of the information matrix.
#[derive(Clone, Debug, Serialize)]
pub struct EfficiencyReport {
    /// The `v - 1` canonical efficiency factors, descending.
    pub cefs: Vec<f64>,
    /// Unit eigenvectors for `cefs`, each orthogonal to the all-ones vector.
    pub contrast_basis: Vec<Vec<f64>>,
    /// Average efficiency factor, the harmonic mean of the cefs.
    pub e_harmonic: f64,
    pub geometric_mean: f64,
    pub min_cef: f64,
    pub is_bib: bool,
    pub lambda: Option<usize>,
    pub e_bib: Option<f64>,
}

impl EfficiencyReport {
    pub fn arithmetic_mean(&self) -> f64 {
        self.cefs.iter().sum::<f64>() / self.cefs.len() as f64
    }
}

/// Canonical efficiency factors: the nonzero eigenvalues of `A`.
///
/// The zero root on `1_v / sqrt(v)` is dropped. More than one zero root
/// means the design is disconnected.
pub fn canonical_efficiency_factors(a: &DenseMatrix, tol: Tolerance) -> Result<EfficiencyReport> {
    let v = a.rows();
    if v < 2 {
        return Err(Error::InvalidParameters(
            "efficiency factors need at least two treatments".into(),
        ));
    }
    let row_sum = a.row_sums().iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if row_sum > tol.abs_eps {
        return Err(Error::InvalidParameters(format!(
            "information matrix rows must sum to zero (max |A 1| = {row_sum:e})"
        )));
    }
    let eig = eigh(a, tol)?;
    let cutoff = tol.zero_threshold(&eig.values);
    let zero_roots = eig.values.iter().filter(|l| l.abs() <= cutoff).count();
    if zero_roots > 1 {
        return Err(Error::Disconnected { zero_roots });
    }
    let cefs: Vec<f64> = eig.values[..v - 1].to_vec();
    let contrast_basis = (0..v - 1).map(|i| eig.vector(i)).collect();
    let m = cefs.len() as f64;
    let e_harmonic = m / cefs.iter().map(|e| 1.0 / e).sum::<f64>();
    let geometric_mean = (cefs.iter().map(|e| e.ln()).sum::<f64>() / m).exp();
    let min_cef = cefs.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(EfficiencyReport {
        cefs,
        contrast_basis,
        e_harmonic,
        geometric_mean,
        min_cef,
        is_bib: false,
        lambda: None,
        e_bib: None,
    })
}

/// Efficiency report for a design, with BIB fields filled when the design
/// is a BIB.
pub fn efficiency_report(d: &BlockDesign, tol: Tolerance) -> Result<EfficiencyReport> {
    let mut report = canonical_efficiency_factors(&information_matrix(d), tol)?;
    if d.k < d.v {
        let status = is_bib(d)?;
        if let (true, Some(lambda)) = (status.is_bib, status.lambda) {
            report.is_bib = true;
            report.lambda = Some(lambda);
            report.e_bib = Some((lambda * d.v) as f64 / (d.r * d.k) as f64);
        }
    }
    Ok(report)
}

/// Efficiency factor `c'Ac / c'c` of a treatment contrast.
pub fn contrast_efficiency(c: &[f64], a: &DenseMatrix, tol: Tolerance) -> Result<f64> {
    if c.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            context: "contrast_efficiency",
            expected: a.rows(),
            found: c.len(),
        });
    }
    let cc = dot(c, c);
    if cc == 0.0 {
        return Err(Error::ZeroVector);
    }
    let sum: f64 = c.iter().sum();
    if sum.abs() > tol.abs_eps * cc.sqrt().max(1.0) {
        return Err(Error::NotAContrast { sum });
    }
    Ok(dot(c, &a.mul_vec(c)) / cc)
}

/// Necessary conditions for a BIB design with parameters `(v, k, r)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BibFeasibility {
    pub v: u64,
    pub k: u64,
    pub r: u64,
    /// `r(k-1)/(v-1)`, exact.
    #[serde(serialize_with = "ser_ratio")]
    pub lambda: Ratio<u64>,
    /// `vr/k`, exact.
    #[serde(serialize_with = "ser_ratio")]
    pub blocks: Ratio<u64>,
    pub lambda_integral: bool,
    pub blocks_integral: bool,
    /// `b >= v` (Fisher's inequality).
    pub enough_blocks: bool,
    pub feasible: bool,
    /// `v(k-1) / (k(v-1))` when feasible.
    pub efficiency: Option<f64>,
}

fn ser_ratio<S: serde::Serializer>(r: &Ratio<u64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_ratio(r))
}

pub fn format_ratio(r: &Ratio<u64>) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Checks integrality of lambda and b and that `b >= v`. Passing these
/// does not guarantee that a design exists.
pub fn bib_check(v: u64, k: u64, r: u64) -> Result<BibFeasibility> {
    if v < 2 || k < 2 || k > v || r < 1 {
        return Err(Error::InvalidParameters(format!(
            "need v >= 2, 2 <= k <= v, r >= 1 (got v={v}, k={k}, r={r})"
        )));
    }
    let lambda = Ratio::new(r * (k - 1), v - 1);
    let blocks = Ratio::new(v * r, k);
    let lambda_integral = lambda.is_integer();
    let blocks_integral = blocks.is_integer();
    let enough_blocks = blocks >= Ratio::from_integer(v);
    let feasible = lambda_integral && blocks_integral && enough_blocks;
    let efficiency = feasible.then(|| (v * (k - 1)) as f64 / (k * (v - 1)) as f64);
    Ok(BibFeasibility {
        v,
        k,
        r,
        lambda,
        blocks,
        lambda_integral,
        blocks_integral,
        enough_blocks,
        feasible,
        efficiency,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BibStatus {
    pub is_bib: bool,
    pub lambda: Option<usize>,
    pub diagnostic: Option<String>,
}

/// Whether every pair of treatments shares the same number of blocks.
/// Requires an incomplete design (`k < v`).
pub fn is_bib(d: &BlockDesign) -> Result<BibStatus> {
    if d.k >= d.v {
        return Err(Error::InvalidParameters(format!(
            "BIB recognition needs k < v (k={}, v={})",
            d.k, d.v
        )));
    }
    let nmat = incidence(d);
    if nmat.as_slice().iter().any(|&c| c > 1.0) {
        return Ok(BibStatus {
            is_bib: false,
            lambda: None,
            diagnostic: Some("design is not binary: a treatment occurs twice in a block".into()),
        });
    }
    let nnt = concurrence(&nmat);
    let lambda = nnt[(0, 1)];
    let balanced = (0..d.v).all(|i| {
        (0..d.v).all(|j| {
            let want = if i == j { d.r as f64 } else { lambda };
            nnt[(i, j)] == want
        })
    });
    Ok(BibStatus {
        is_bib: balanced,
        lambda: balanced.then_some(lambda as usize),
        diagnostic: None,
    })
}

/// Variance matrix of intra-block treatment effects.
#[derive(Clone, Debug)]
pub struct EffectVariances {
    /// `(sigma^2 / r) sum_i (1/e_i) eta_i eta_i'`
    pub var_matrix: DenseMatrix,
    /// `2 sigma^2 / (r e)` for BIB designs.
    pub pairwise_bib: Option<f64>,
}

pub fn effect_variances(
    report: &EfficiencyReport,
    r: usize,
    sigma2: f64,
) -> Result<EffectVariances> {
    if r == 0 {
        return Err(Error::InvalidParameters("replication must be positive".into()));
    }
    if report.cefs.is_empty() || report.cefs.iter().any(|&e| e <= 0.0) {
        return Err(Error::Disconnected { zero_roots: 2 });
    }
    let v = report.cefs.len() + 1;
    let mut var = DenseMatrix::zeros(v, v);
    for (e, eta) in report.cefs.iter().zip(&report.contrast_basis) {
        let w = sigma2 / (r as f64 * e);
        for i in 0..v {
            for j in 0..v {
                var[(i, j)] += w * eta[i] * eta[j];
            }
        }
    }
    let pairwise_bib = report
        .e_bib
        .filter(|_| report.is_bib)
        .map(|e| 2.0 * sigma2 / (r as f64 * e));
    Ok(EffectVariances {
        var_matrix: var.symmetrized(),
        pairwise_bib,
    })
}

/// Mean of `Var(tau_i - tau_j)` over all pairs `i < j`.
pub fn mean_pairwise_variance(var: &DenseMatrix) -> f64 {
    let v = var.rows();
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..v {
        for j in (i + 1)..v {
            total += var[(i, i)] + var[(j, j)] - 2.0 * var[(i, j)];
            count += 1;
        }
    }
    total / count as f64
}
