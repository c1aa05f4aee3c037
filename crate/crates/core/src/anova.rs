//! Analysis of variance tables built from sequential sweeps.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fdist::f_upper_tail;
use crate::matrix::{dot, DenseMatrix};
use crate::spectral::{check_order, Projector, Tolerance};
use crate::sweep::SweepOutcome;

/// Relative tolerance on `sum(SS) = total SS`.
pub const ADDITIVITY_REL_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnovaRow {
    pub source: String,
    pub df: usize,
    pub ss: f64,
    pub ms: Option<f64>,
    pub f: Option<f64>,
    pub p: Option<f64>,
}

impl AnovaRow {
    fn new(source: impl Into<String>, df: usize, ss: f64) -> Self {
        Self {
            source: source.into(),
            df,
            ss,
            ms: (df > 0).then(|| ss / df as f64),
            f: None,
            p: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stratum {
    pub name: String,
    pub rows: Vec<AnovaRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnovaTable {
    pub strata: Vec<Stratum>,
    /// Mean-corrected grand total.
    pub total: AnovaRow,
    pub diagnostics: Vec<String>,
}

impl AnovaTable {
    pub fn rows(&self) -> impl Iterator<Item = &AnovaRow> {
        self.strata.iter().flat_map(|s| s.rows.iter())
    }

    pub fn row(&self, source: &str) -> Option<&AnovaRow> {
        self.rows().find(|r| r.source == source)
    }
}

/// Table layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// A single units stratum: every term, then the residual.
    Units,
    /// The first term (blocks) forms its own stratum; the remaining terms
    /// and the residual sit in the within-blocks stratum.
    BlockStrata,
}

/// `s^2 = rss / df`
pub fn residual_mean_square(rss: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::ZeroDf);
    }
    Ok(rss / df as f64)
}

/// `(model_ss / model_df) / s^2`
pub fn variance_ratio(model_ss: f64, model_df: usize, s2: f64) -> Result<f64> {
    if model_df == 0 {
        return Err(Error::ZeroDf);
    }
    if s2.is_nan() || s2 <= 0.0 {
        return Err(Error::ZeroResidualVariance);
    }
    Ok(model_ss / model_df as f64 / s2)
}

/// `pi' X' P* X pi + rank(P*) sigma^2`, the expectation of `y' P* y` when
/// `y ~ (X pi, sigma^2 I)`.
pub fn expected_ss(p_star: &Projector, x: &DenseMatrix, pi: &[f64], sigma2: f64) -> Result<f64> {
    check_order("expected_ss: X rows", p_star.order(), x.rows())?;
    check_order("expected_ss: pi", x.cols(), pi.len())?;
    let mean = x.mul_vec(pi);
    Ok(p_star.quadratic_form(&mean) + p_star.rank() as f64 * sigma2)
}

fn term_label(index: usize, name: &str) -> String {
    if index == 0 {
        name.to_string()
    } else {
        format!("{name} (adj.)")
    }
}

/// Assembles the table for a sequential sweep.
///
/// Degrees of freedom come from projector ranks. F and p are attached to
/// every term row of the last stratum when the residual has positive df
/// and nonzero mean square. Disconnected designs are refused.
pub fn build_table(
    layout: Layout,
    sweep: &SweepOutcome,
    connected: bool,
    tol: Tolerance,
) -> Result<AnovaTable> {
    let abs_eps = tol.abs_eps;
    if !connected {
        return Err(Error::DisconnectedDesign);
    }
    let mut diagnostics = Vec::new();
    let clamp_floor = abs_eps * sweep.total_ss.max(1.0);
    let clamp = |label: &str, ss: f64, diags: &mut Vec<String>| -> Result<f64> {
        if ss < -clamp_floor {
            return Err(Error::NegativeSs {
                source_label: label.to_string(),
                ss,
            });
        }
        if ss < 0.0 {
            diags.push(format!("clamped sum of squares {ss:e} for '{label}' to 0"));
            return Ok(0.0);
        }
        Ok(ss)
    };

    let mut term_rows = Vec::with_capacity(sweep.fits.len());
    for (i, fit) in sweep.fits.iter().enumerate() {
        let label = term_label(i, &fit.factor_name);
        let ss = clamp(&label, fit.ss_adjusted, &mut diagnostics)?;
        if fit.rank_deficient {
            diagnostics.push(format!(
                "'{label}' has {} df for {} levels",
                fit.df,
                fit.labels.len()
            ));
        }
        term_rows.push(AnovaRow::new(label, fit.df, ss));
    }
    let residual_ss = clamp("Residual", sweep.residual_ss, &mut diagnostics)?;
    let residual = AnovaRow::new("Residual", sweep.residual_df, residual_ss);
    let total = AnovaRow::new("Total", sweep.n - 1, sweep.total_ss);

    let df_sum: usize = term_rows.iter().map(|r| r.df).sum::<usize>() + residual.df;
    if df_sum != total.df {
        return Err(Error::NotAProjector(format!(
            "degrees of freedom sum to {df_sum}, expected {}",
            total.df
        )));
    }
    let ss_sum: f64 = term_rows.iter().map(|r| r.ss).sum::<f64>() + residual.ss;
    if (ss_sum - total.ss).abs() > ADDITIVITY_REL_TOL * total.ss {
        return Err(Error::AdditivityViolated {
            components: ss_sum,
            total: total.ss,
        });
    }

    let mut strata = match layout {
        Layout::Units => vec![Stratum {
            name: "Units".into(),
            rows: term_rows,
        }],
        Layout::BlockStrata => {
            if term_rows.len() < 2 {
                return Err(Error::InvalidParameters(
                    "block strata layout needs a block term and at least one further term".into(),
                ));
            }
            let mut rest = term_rows;
            let mut block_row = rest.remove(0);
            let block_name = block_row.source.clone();
            block_row.source = "Total".into();
            vec![
                Stratum {
                    name: block_name.clone(),
                    rows: vec![block_row],
                },
                Stratum {
                    name: format!("{block_name}.plots"),
                    rows: rest,
                },
            ]
        }
    };

    let last = strata.last_mut().expect("at least one stratum");
    let s2 = if residual.df > 0 {
        residual_mean_square(residual.ss, residual.df).ok()
    } else {
        diagnostics.push("residual has zero degrees of freedom; F tests omitted".into());
        None
    };
    // Residual variance is treated as zero when it is at roundoff level
    // relative to the data.
    let s2 = s2.filter(|&s| {
        let zero = s <= abs_eps * abs_eps * sweep.total_ss.max(1.0);
        if zero {
            diagnostics.push("residual mean square is zero; F tests omitted".into());
        }
        !zero
    });
    if let Some(s2) = s2 {
        for row in last.rows.iter_mut().filter(|r| r.df > 0) {
            let f = variance_ratio(row.ss, row.df, s2)?;
            row.f = Some(f);
            row.p = Some(f_upper_tail(f, row.df, residual.df)?);
        }
    }
    last.rows.push(residual);

    Ok(AnovaTable {
        strata,
        total,
        diagnostics,
    })
}

/// `y*' P y*` for a projector.
pub fn projector_ss(p: &Projector, ystar: &[f64]) -> f64 {
    dot(ystar, &p.apply(ystar))
}
