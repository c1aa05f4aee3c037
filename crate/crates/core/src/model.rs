//! Factors, indicator design matrices, the grand mean, and the
//! marginality / orthogonality predicates between factors.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::spectral::{check_order, projector_from_design, Projector, Tolerance};

/// A factor assigning one level to every unit.
///
/// Levels are zero-based indices into `labels`; labels keep the
/// first-appearance order of the input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Factor {
    pub name: String,
    pub levels: Vec<usize>,
    pub labels: Vec<String>,
}

impl Factor {
    /// Builds a factor from per-unit level indices and an explicit level count.
    /// Labels default to the one-based level number.
    pub fn new(name: impl Into<String>, levels: Vec<usize>, num_levels: usize) -> Self {
        Self {
            name: name.into(),
            levels,
            labels: (1..=num_levels).map(|l| l.to_string()).collect(),
        }
    }

    /// Builds a factor from per-unit labels, numbering levels in order of
    /// first appearance.
    pub fn from_labels<S: AsRef<str>>(name: impl Into<String>, units: &[S]) -> Self {
        let mut labels: Vec<String> = Vec::new();
        let mut levels = Vec::with_capacity(units.len());
        for u in units {
            let u = u.as_ref();
            let idx = match labels.iter().position(|l| l == u) {
                Some(i) => i,
                None => {
                    labels.push(u.to_string());
                    labels.len() - 1
                }
            };
            levels.push(idx);
        }
        Self {
            name: name.into(),
            levels,
            labels,
        }
    }

    pub fn num_levels(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Units per level.
    pub fn replications(&self) -> Vec<usize> {
        let mut reps = vec![0; self.num_levels()];
        for &l in &self.levels {
            if l < reps.len() {
                reps[l] += 1;
            }
        }
        reps
    }
}

/// The experimental units: factors of equal length and an optional response.
#[derive(Clone, Debug)]
pub struct UnitTable {
    pub n: usize,
    pub factors: Vec<Factor>,
    pub response: Option<Vec<f64>>,
}

impl UnitTable {
    pub fn new(factors: Vec<Factor>, response: Option<Vec<f64>>) -> Result<Self> {
        let n = match (factors.first(), &response) {
            (Some(f), _) => f.len(),
            (None, Some(y)) => y.len(),
            (None, None) => 0,
        };
        if n == 0 {
            return Err(Error::ZeroUnits);
        }
        for f in &factors {
            check_order("UnitTable factor length", n, f.len())?;
        }
        if let Some(y) = &response {
            check_order("UnitTable response length", n, y.len())?;
            if let Some(row) = y.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonNumericResponse {
                    row: row + 1,
                    value: y[row].to_string(),
                });
            }
        }
        Ok(Self {
            n,
            factors,
            response,
        })
    }

    pub fn factor(&self, name: &str) -> Option<&Factor> {
        self.factors.iter().find(|f| f.name == name)
    }
}

/// A factor's n x p indicator matrix.
#[derive(Clone, Debug)]
pub struct ModelTerm {
    pub factor_name: String,
    pub labels: Vec<String>,
    pub design: DenseMatrix,
}

impl ModelTerm {
    pub fn n(&self) -> usize {
        self.design.rows()
    }

    pub fn num_levels(&self) -> usize {
        self.design.cols()
    }
}

/// Indicator matrix with a one in column `j` of row `h` iff unit `h` has level `j`.
pub fn indicator_matrix(f: &Factor, n: usize) -> Result<ModelTerm> {
    check_order("indicator_matrix", n, f.len())?;
    let p = f.num_levels();
    if let Some(&level) = f.levels.iter().find(|&&l| l >= p) {
        return Err(Error::LevelOutOfRange {
            factor: f.name.clone(),
            level,
            num_levels: p,
        });
    }
    let design = DenseMatrix::from_fn(n, p, |h, j| if f.levels[h] == j { 1.0 } else { 0.0 });
    Ok(ModelTerm {
        factor_name: f.name.clone(),
        labels: f.labels.clone(),
        design,
    })
}

/// `(1/n) J_n`
pub fn grand_mean_projector(n: usize) -> Result<Projector> {
    if n == 0 {
        return Err(Error::ZeroUnits);
    }
    let m = DenseMatrix::ones(n, n).scale(1.0 / n as f64);
    Ok(Projector::from_parts_unchecked(m, 1))
}

/// Mean-corrected observations `(I - P_G) y`.
pub fn sweep_mean(y: &[f64]) -> Result<Vec<f64>> {
    if y.is_empty() {
        return Err(Error::EmptyVector);
    }
    // constant data sweeps to exact zeros
    if y.iter().all(|&v| v == y[0]) {
        return Ok(vec![0.0; y.len()]);
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    Ok(y.iter().map(|v| v - mean).collect())
}

/// Whether the range of `x1` lies inside the range of `x2`, decided by
/// `max |P2 X1 - X1| <= abs_eps`.
pub fn is_marginal(x1: &ModelTerm, x2: &ModelTerm, tol: Tolerance) -> Result<bool> {
    check_order("is_marginal", x1.n(), x2.n())?;
    let p2 = projector_from_design(&x2.design, tol)?;
    let dev = p2.matrix().matmul(&x1.design).max_abs_diff(&x1.design);
    Ok(dev <= tol.abs_eps)
}

/// Whether two factors are orthogonal: `P1 P2 = P2 P1 = P_G`.
pub fn is_orthogonal(
    p1: &Projector,
    p2: &Projector,
    pg: &Projector,
    tol: Tolerance,
) -> Result<bool> {
    check_order("is_orthogonal", p1.order(), p2.order())?;
    check_order("is_orthogonal", p1.order(), pg.order())?;
    let a = p1.matrix().matmul(p2.matrix()).max_abs_diff(pg.matrix());
    let b = p2.matrix().matmul(p1.matrix()).max_abs_diff(pg.matrix());
    Ok(a <= tol.abs_eps && b <= tol.abs_eps)
}
