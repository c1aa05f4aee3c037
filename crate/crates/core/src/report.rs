//! CSV ingestion, the analysis pipeline, and text / JSON rendering.
//!
//! Input is one row per experimental unit with a header, e.g.
//!
//! ```text
//! unit,block,treatment,y
//! 1,1,1,10.2
//! 2,1,3,11.9
//! ```
//!
//! The `unit` column is optional; row order is authoritative. Factor levels
//! are arbitrary strings numbered in order of first appearance.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::anova::{build_table, AnovaRow, AnovaTable, Layout};
use crate::design::{
    bib_check, efficiency_report, format_ratio, incidence, is_connected, BibFeasibility,
    BlockDesign, EfficiencyReport,
};
use crate::error::{Error, Result};
use crate::model::{indicator_matrix, sweep_mean, Factor, UnitTable};
use crate::spectral::Tolerance;
use crate::sweep::{bib_residual_check, sequential_sweep};

/// p-values below this are printed as `<1e-12`.
pub const P_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
}

#[derive(Clone, Debug)]
pub struct AnalysisConfig {
    pub design_path: PathBuf,
    pub response_column: String,
    pub block_column: String,
    pub treatment_column: String,
    /// Extra factors fitted after blocks and before treatments.
    pub extra_factor_columns: Vec<String>,
    pub tol: Tolerance,
    pub output_format: OutputFormat,
}

impl AnalysisConfig {
    pub fn new(design_path: impl Into<PathBuf>) -> Self {
        Self {
            design_path: design_path.into(),
            response_column: "y".into(),
            block_column: "block".into(),
            treatment_column: "treatment".into(),
            extra_factor_columns: Vec::new(),
            tol: Tolerance::default(),
            output_format: OutputFormat::Text,
        }
    }
}

/// Parsed input: the unit table and, when block and treatment columns are
/// both present, the validated block design.
#[derive(Clone, Debug)]
pub struct Ingested {
    pub table: UnitTable,
    pub design: Option<BlockDesign>,
}

pub fn ingest(path: &Path, config: &AnalysisConfig) -> Result<Ingested> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::from(e).context(format!("opening {}", path.display())))?;
    ingest_reader(file, config)
}

pub fn ingest_reader<R: std::io::Read>(reader: R, config: &AnalysisConfig) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);

    let records = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
    if records.is_empty() {
        return Err(Error::EmptyFile);
    }

    let read_factor = |name: &str| -> Result<Factor> {
        let idx = column(name).ok_or_else(|| Error::MissingColumn(name.to_string()))?;
        let labels: Vec<&str> = records.iter().map(|r| r.get(idx).unwrap_or("")).collect();
        Ok(Factor::from_labels(name, &labels))
    };

    let block = column(&config.block_column)
        .map(|_| read_factor(&config.block_column))
        .transpose()?;
    let treatment = column(&config.treatment_column)
        .map(|_| read_factor(&config.treatment_column))
        .transpose()?;
    let extras = config
        .extra_factor_columns
        .iter()
        .map(|c| read_factor(c))
        .collect::<Result<Vec<_>>>()?;

    let response = match column(&config.response_column) {
        None => None,
        Some(idx) => {
            let mut y = Vec::with_capacity(records.len());
            for (row, rec) in records.iter().enumerate() {
                let raw = rec.get(idx).unwrap_or("");
                match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => y.push(v),
                    _ => {
                        return Err(Error::NonNumericResponse {
                            row: row + 1,
                            value: raw.to_string(),
                        })
                    }
                }
            }
            Some(y)
        }
    };

    let design = match (&block, &treatment) {
        (Some(b), Some(t)) => Some(BlockDesign::from_factors(b, t)?),
        _ => None,
    };
    let mut factors = Vec::new();
    factors.extend(block);
    factors.extend(extras);
    factors.extend(treatment);
    let table = UnitTable::new(factors, response)?;
    Ok(Ingested { table, design })
}

/// Everything `analyze` reports.
#[derive(Clone, Debug)]
pub struct AnalysisReport {
    pub design: BlockDesign,
    pub anova: AnovaTable,
    /// Centered treatment effects with their level labels.
    pub effects: Vec<(String, f64)>,
    pub efficiency: EfficiencyReport,
    /// Max |three-stage - two-stage| residual, for BIB designs.
    pub bib_deviation: Option<f64>,
    pub diagnostics: Vec<String>,
}

pub fn analyze(config: &AnalysisConfig) -> Result<AnalysisReport> {
    let ingested = ingest(&config.design_path, config)?;
    analyze_ingested(&ingested, config)
}

pub fn analyze_ingested(ingested: &Ingested, config: &AnalysisConfig) -> Result<AnalysisReport> {
    let tol = config.tol;
    let table = &ingested.table;
    let design = ingested.design.clone().ok_or_else(|| {
        let missing = if table.factor(&config.block_column).is_none() {
            &config.block_column
        } else {
            &config.treatment_column
        };
        Error::MissingColumn(missing.clone())
    })?;
    let y = table
        .response
        .as_ref()
        .ok_or_else(|| Error::MissingColumn(config.response_column.clone()))?;

    let connected = is_connected(&incidence(&design));
    if !connected {
        return Err(Error::DisconnectedDesign);
    }

    let ystar = sweep_mean(y)?;
    let terms = table
        .factors
        .iter()
        .map(|f| indicator_matrix(f, table.n))
        .collect::<Result<Vec<_>>>()?;
    let sweep = sequential_sweep(&terms, &ystar, tol).map_err(|e| e.context("sweep"))?;
    let anova = build_table(Layout::BlockStrata, &sweep, connected, tol)
        .map_err(|e| e.context("analysis of variance"))?;

    let treatment_fit = sweep.fits.last().expect("treatment term present");
    let effects = treatment_fit
        .labels
        .iter()
        .cloned()
        .zip(treatment_fit.effects.iter().copied())
        .collect();

    let efficiency = efficiency_report(&design, tol).map_err(|e| e.context("efficiency"))?;
    let mut diagnostics = anova.diagnostics.clone();
    let bib_deviation = if efficiency.is_bib {
        let check = bib_residual_check(&design, y, tol).map_err(|e| e.context("BIB sweep"))?;
        if check.max_deviation > 1e-9 {
            diagnostics.push(format!(
                "three-stage and two-stage residuals differ by {:e}",
                check.max_deviation
            ));
        }
        Some(check.max_deviation)
    } else {
        None
    };
    if design.k == design.v {
        diagnostics.push("complete blocks: treatments are orthogonal to blocks".into());
    }

    Ok(AnalysisReport {
        design,
        anova,
        effects,
        efficiency,
        bib_deviation,
        diagnostics,
    })
}

/// Efficiency analysis of the design alone; no response is needed.
pub fn efficiency_only(config: &AnalysisConfig) -> Result<(BlockDesign, EfficiencyReport)> {
    let ingested = ingest(&config.design_path, config)?;
    let design = ingested.design.ok_or_else(|| {
        Error::MissingColumn(format!(
            "{} / {}",
            config.block_column, config.treatment_column
        ))
    })?;
    let report = efficiency_report(&design, config.tol)?;
    Ok((design, report))
}

/// Formats like C's `%.6g`.
pub fn fmt_sig(x: f64) -> String {
    const DIGITS: i32 = 6;
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..DIGITS).contains(&exp) {
        let s = format!("{:.*e}", (DIGITS - 1) as usize, x);
        let (mantissa, e) = s.split_once('e').expect("exponent");
        return format!("{}e{}", trim_zeros(mantissa), e);
    }
    let decimals = (DIGITS - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn fmt_p(p: f64) -> String {
    if p < P_FLOOR {
        "<1e-12".into()
    } else {
        fmt_sig(p)
    }
}

fn fmt_opt(x: Option<f64>, f: fn(f64) -> String) -> String {
    x.map(f).unwrap_or_default()
}

fn render_row(out: &mut String, indent: &str, row: &AnovaRow) {
    let w = 26 - indent.len();
    let _ = writeln!(
        out,
        "{indent}{:<w$} {:>4} {:>12} {:>12} {:>10} {:>10}",
        row.source,
        row.df,
        fmt_sig(row.ss),
        fmt_opt(row.ms, fmt_sig),
        fmt_opt(row.f, fmt_sig),
        fmt_opt(row.p, fmt_p),
    );
}

pub fn render_anova_text(table: &AnovaTable) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<26} {:>4} {:>12} {:>12} {:>10} {:>10}",
        "Source", "df", "SS", "MS", "F", "p"
    );
    for stratum in &table.strata {
        let _ = writeln!(out, "{} stratum", stratum.name);
        for row in &stratum.rows {
            render_row(&mut out, "  ", row);
        }
    }
    render_row(&mut out, "", &AnovaRow {
        source: "Grand total".into(),
        ..table.total.clone()
    });
    out
}

pub fn render_efficiency_text(report: &EfficiencyReport) -> String {
    let mut out = String::new();
    let cefs: Vec<String> = report.cefs.iter().map(|&e| fmt_sig(e)).collect();
    let _ = writeln!(out, "Canonical efficiency factors: {}", cefs.join(" "));
    let _ = writeln!(out, "Average efficiency factor E:  {}", fmt_sig(report.e_harmonic));
    let _ = writeln!(out, "Geometric mean:               {}", fmt_sig(report.geometric_mean));
    let _ = writeln!(out, "Smallest cef:                 {}", fmt_sig(report.min_cef));
    if let (true, Some(lambda), Some(e)) = (report.is_bib, report.lambda, report.e_bib) {
        let _ = writeln!(out, "Balanced incomplete block design: lambda = {lambda}, e = {}", fmt_sig(e));
    }
    out
}

pub fn render_text(report: &AnalysisReport) -> String {
    let d = &report.design;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Block design: v = {}, b = {}, k = {}, r = {}, n = {}\n",
        d.v, d.b, d.k, d.r, d.n
    );
    let _ = writeln!(out, "Analysis of variance");
    out.push_str(&render_anova_text(&report.anova));
    let _ = writeln!(out, "\nTreatment effects (adjusted for blocks)");
    for (label, value) in &report.effects {
        let _ = writeln!(out, "  {label:<12} {:>12}", fmt_sig(*value));
    }
    let _ = writeln!(out, "\nEfficiency");
    out.push_str(&render_efficiency_text(&report.efficiency));
    if let Some(dev) = report.bib_deviation {
        let _ = writeln!(
            out,
            "\nThree-stage sweep check: max |three-stage - two-stage residual| = {dev:.3e}"
        );
    }
    if !report.diagnostics.is_empty() {
        let _ = writeln!(out, "\nDiagnostics");
        for d in &report.diagnostics {
            let _ = writeln!(out, "  {d}");
        }
    }
    out
}

fn row_json(stratum: &str, row: &AnovaRow) -> Value {
    json!({
        "stratum": stratum,
        "source": row.source,
        "df": row.df,
        "ss": row.ss,
        "ms": row.ms,
        "f": row.f,
        "p": row.p,
    })
}

pub fn anova_json(table: &AnovaTable) -> Value {
    let mut rows: Vec<Value> = table
        .strata
        .iter()
        .flat_map(|s| s.rows.iter().map(move |r| row_json(&s.name, r)))
        .collect();
    rows.push(row_json("", &table.total));
    Value::Array(rows)
}

pub fn efficiency_json(report: &EfficiencyReport) -> Value {
    let mut obj = json!({
        "cefs": report.cefs,
        "E": report.e_harmonic,
        "geometric": report.geometric_mean,
        "min": report.min_cef,
    });
    if let (true, Some(lambda), Some(e)) = (report.is_bib, report.lambda, report.e_bib) {
        obj["bib"] = json!({ "lambda": lambda, "e": e });
    }
    obj
}

pub fn to_json(report: &AnalysisReport) -> Result<Value> {
    let effects: Map<String, Value> = report
        .effects
        .iter()
        .map(|(l, v)| (l.clone(), json!(v)))
        .collect();
    let mut obj = json!({
        "design": serde_json::to_value(&report.design)?,
        "anova": anova_json(&report.anova),
        "effects": effects,
        "efficiency": efficiency_json(&report.efficiency),
        "diagnostics": report.diagnostics,
    });
    if let Some(dev) = report.bib_deviation {
        obj["bib_sweep_check"] = json!({ "max_deviation": dev });
    }
    Ok(obj)
}

/// Recovers the block design echoed in a JSON report.
pub fn design_from_json(value: &Value) -> Result<BlockDesign> {
    let echoed: BlockDesign = serde_json::from_value(value["design"].clone())?;
    BlockDesign::new(
        echoed.assignment,
        echoed.block_labels,
        echoed.treatment_labels,
    )
}

pub fn render(report: &AnalysisReport, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Text => Ok(render_text(report)),
        OutputFormat::Json => Ok(serde_json::to_string_pretty(&to_json(report)?)? + "\n"),
    }
}

pub fn render_efficiency(
    design: &BlockDesign,
    report: &EfficiencyReport,
    format: OutputFormat,
) -> Result<String> {
    match format {
        OutputFormat::Text => Ok(format!(
            "Block design: v = {}, b = {}, k = {}, r = {}, n = {}\n\n{}",
            design.v,
            design.b,
            design.k,
            design.r,
            design.n,
            render_efficiency_text(report)
        )),
        OutputFormat::Json => {
            let obj = json!({
                "design": serde_json::to_value(design)?,
                "efficiency": efficiency_json(report),
            });
            Ok(serde_json::to_string_pretty(&obj)? + "\n")
        }
    }
}

pub const EXISTENCE_CAVEAT: &str =
    "These conditions are necessary only; some feasible parameter sets have no BIB design.";

/// Feasibility report for BIB parameters.
pub fn check_bib_cmd(v: u64, k: u64, r: u64, format: OutputFormat) -> Result<String> {
    let c = bib_check(v, k, r)?;
    match format {
        OutputFormat::Text => Ok(render_bib_text(&c)),
        OutputFormat::Json => {
            let mut value = serde_json::to_value(&c)?;
            value["caveat"] = json!(EXISTENCE_CAVEAT);
            Ok(serde_json::to_string_pretty(&value)? + "\n")
        }
    }
}

fn render_bib_text(c: &BibFeasibility) -> String {
    let mut out = String::new();
    let yes_no = |b: bool| if b { "yes" } else { "no" };
    let _ = writeln!(out, "v = {}, k = {}, r = {}", c.v, c.k, c.r);
    let _ = writeln!(
        out,
        "lambda = r(k-1)/(v-1) = {}  (integer: {})",
        format_ratio(&c.lambda),
        yes_no(c.lambda_integral)
    );
    let _ = writeln!(
        out,
        "b = vr/k = {}  (integer: {}, b >= v: {})",
        format_ratio(&c.blocks),
        yes_no(c.blocks_integral),
        yes_no(c.enough_blocks)
    );
    if c.feasible {
        let _ = writeln!(out, "feasible: yes");
        if let Some(e) = c.efficiency {
            let _ = writeln!(out, "efficiency factor e = v(k-1)/(k(v-1)) = {}", fmt_sig(e));
        }
        let _ = writeln!(out, "note: {EXISTENCE_CAVEAT}");
    } else {
        let _ = writeln!(out, "feasible: no");
    }
    out
}
