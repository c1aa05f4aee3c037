//! Python bindings for `blocksweep`.
//!
//! Matrices cross the boundary as lists of rows. Structured results
//! (analysis reports, efficiency summaries, BIB checks) are returned as
//! plain dicts built from the same JSON the command line tool prints.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use blocksweep::design::{self, BlockDesign};
use blocksweep::model::{Factor, UnitTable};
use blocksweep::report::{self, AnalysisConfig, Ingested};
use blocksweep::spectral::{self, Tolerance, DEFAULT_ABS_EPS, DEFAULT_REL_EPS};
use blocksweep::{fdist, model, DenseMatrix, Error};

fn to_py(err: Error) -> PyErr {
    if err.is_numerical() {
        PyArithmeticError::new_err(err.to_string())
    } else {
        PyValueError::new_err(err.to_string())
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DenseMatrix> {
    DenseMatrix::from_rows(&rows).map_err(to_py)
}

fn tolerance(rel_eps: f64, abs_eps: f64) -> PyResult<Tolerance> {
    Tolerance::new(rel_eps, abs_eps).map_err(to_py)
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Eigenvalues (descending) and eigenvectors (as columns) of a symmetric matrix.
#[pyfunction]
#[pyo3(signature = (h, rel_eps = DEFAULT_REL_EPS, abs_eps = DEFAULT_ABS_EPS))]
fn eigh(h: Vec<Vec<f64>>, rel_eps: f64, abs_eps: f64) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let eig = spectral::eigh(&matrix(h)?, tolerance(rel_eps, abs_eps)?).map_err(to_py)?;
    Ok((eig.values.clone(), eig.vectors.to_rows()))
}

/// Moore-Penrose inverse of a symmetric matrix.
#[pyfunction]
#[pyo3(signature = (h, rel_eps = DEFAULT_REL_EPS, abs_eps = DEFAULT_ABS_EPS))]
fn moore_penrose(h: Vec<Vec<f64>>, rel_eps: f64, abs_eps: f64) -> PyResult<Vec<Vec<f64>>> {
    let m = spectral::moore_penrose(&matrix(h)?, tolerance(rel_eps, abs_eps)?).map_err(to_py)?;
    Ok(m.to_rows())
}

/// Projector onto the column space of `x` and its rank.
#[pyfunction]
#[pyo3(signature = (x, rel_eps = DEFAULT_REL_EPS, abs_eps = DEFAULT_ABS_EPS))]
fn projector(x: Vec<Vec<f64>>, rel_eps: f64, abs_eps: f64) -> PyResult<(Vec<Vec<f64>>, usize)> {
    let p = spectral::projector_from_design(&matrix(x)?, tolerance(rel_eps, abs_eps)?)
        .map_err(to_py)?;
    Ok((p.matrix().to_rows(), p.rank()))
}

/// Deviations from the mean.
#[pyfunction]
fn sweep_mean(y: Vec<f64>) -> PyResult<Vec<f64>> {
    model::sweep_mean(&y).map_err(to_py)
}

/// `P(F > f)` for an F distribution with `d1` and `d2` degrees of freedom.
#[pyfunction]
fn f_upper_tail(f: f64, d1: usize, d2: usize) -> PyResult<f64> {
    fdist::f_upper_tail(f, d1, d2).map_err(to_py)
}

/// Necessary conditions for a BIB design with parameters `(v, k, r)`.
#[pyfunction]
fn bib_check(py: Python<'_>, v: u64, k: u64, r: u64) -> PyResult<Bound<'_, PyAny>> {
    let out = report::check_bib_cmd(v, k, r, report::OutputFormat::Json).map_err(to_py)?;
    py.import("json")?.call_method1("loads", (out,))
}

/// Full analysis of a CSV file, as a dict.
#[pyfunction]
#[pyo3(signature = (
    path,
    response_col = "y",
    block_col = "block",
    treatment_col = "treatment",
    factors = None,
    rel_eps = DEFAULT_REL_EPS,
    abs_eps = DEFAULT_ABS_EPS,
))]
#[allow(clippy::too_many_arguments)]
fn analyze<'py>(
    py: Python<'py>,
    path: std::path::PathBuf,
    response_col: &str,
    block_col: &str,
    treatment_col: &str,
    factors: Option<Vec<String>>,
    rel_eps: f64,
    abs_eps: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let config = AnalysisConfig {
        response_column: response_col.to_string(),
        block_column: block_col.to_string(),
        treatment_column: treatment_col.to_string(),
        extra_factor_columns: factors.unwrap_or_default(),
        tol: tolerance(rel_eps, abs_eps)?,
        ..AnalysisConfig::new(path)
    };
    let result = report::analyze(&config).map_err(to_py)?;
    json_to_py(py, &report::to_json(&result).map_err(to_py)?)
}

/// An equireplicate block design with equal block sizes.
#[pyclass(name = "BlockDesign", module = "pyblocksweep")]
struct PyBlockDesign {
    inner: BlockDesign,
}

#[pymethods]
impl PyBlockDesign {
    /// `blocks` lists the zero-based treatments of each block.
    #[new]
    fn new(blocks: Vec<Vec<usize>>) -> PyResult<Self> {
        let inner = BlockDesign::from_block_contents(&blocks).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Builds a design from per-unit block and treatment labels.
    #[staticmethod]
    fn from_labels(blocks: Vec<String>, treatments: Vec<String>) -> PyResult<Self> {
        let b = Factor::from_labels("block", &blocks);
        let t = Factor::from_labels("treatment", &treatments);
        let inner = BlockDesign::from_factors(&b, &t).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn v(&self) -> usize {
        self.inner.v
    }

    #[getter]
    fn b(&self) -> usize {
        self.inner.b
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn r(&self) -> usize {
        self.inner.r
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    fn blocks(&self) -> Vec<Vec<usize>> {
        self.inner.block_contents()
    }

    fn incidence(&self) -> Vec<Vec<f64>> {
        design::incidence(&self.inner).to_rows()
    }

    fn concurrence(&self) -> Vec<Vec<f64>> {
        design::concurrence(&design::incidence(&self.inner)).to_rows()
    }

    fn information_matrix(&self) -> Vec<Vec<f64>> {
        design::information_matrix(&self.inner).to_rows()
    }

    fn is_connected(&self) -> bool {
        design::is_connected(&design::incidence(&self.inner))
    }

    /// `(is_bib, lambda)`.
    fn is_bib(&self) -> PyResult<(bool, Option<usize>)> {
        let s = design::is_bib(&self.inner).map_err(to_py)?;
        Ok((s.is_bib, s.lambda))
    }

    /// Canonical efficiency factors and their means, as a dict.
    #[pyo3(signature = (rel_eps = DEFAULT_REL_EPS, abs_eps = DEFAULT_ABS_EPS))]
    fn efficiency<'py>(
        &self,
        py: Python<'py>,
        rel_eps: f64,
        abs_eps: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let eff = design::efficiency_report(&self.inner, tolerance(rel_eps, abs_eps)?)
            .map_err(to_py)?;
        let out = json_to_py(py, &report::efficiency_json(&eff))?;
        let dict = out.cast::<PyDict>()?;
        dict.set_item("contrast_basis", eff.contrast_basis.clone())?;
        Ok(out)
    }

    /// Efficiency factor `c'Ac / c'c` of a treatment contrast.
    #[pyo3(signature = (c, rel_eps = DEFAULT_REL_EPS, abs_eps = DEFAULT_ABS_EPS))]
    fn contrast_efficiency(&self, c: Vec<f64>, rel_eps: f64, abs_eps: f64) -> PyResult<f64> {
        let a = design::information_matrix(&self.inner);
        design::contrast_efficiency(&c, &a, tolerance(rel_eps, abs_eps)?).map_err(to_py)
    }

    /// Intra-block analysis of a response given in unit order.
    #[pyo3(signature = (y, rel_eps = DEFAULT_REL_EPS, abs_eps = DEFAULT_ABS_EPS))]
    fn analyze<'py>(
        &self,
        py: Python<'py>,
        y: Vec<f64>,
        rel_eps: f64,
        abs_eps: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let table = UnitTable::new(
            vec![self.inner.block_factor(), self.inner.treatment_factor()],
            Some(y),
        )
        .map_err(to_py)?;
        let ingested = Ingested {
            table,
            design: Some(self.inner.clone()),
        };
        let config = AnalysisConfig {
            tol: tolerance(rel_eps, abs_eps)?,
            ..AnalysisConfig::new("-")
        };
        let result = report::analyze_ingested(&ingested, &config).map_err(to_py)?;
        json_to_py(py, &report::to_json(&result).map_err(to_py)?)
    }

    fn __repr__(&self) -> String {
        let d = &self.inner;
        format!(
            "BlockDesign(v={}, b={}, k={}, r={}, n={})",
            d.v, d.b, d.k, d.r, d.n
        )
    }
}

#[pymodule]
fn pyblocksweep(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(eigh, m)?)?;
    m.add_function(wrap_pyfunction!(moore_penrose, m)?)?;
    m.add_function(wrap_pyfunction!(projector, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_mean, m)?)?;
    m.add_function(wrap_pyfunction!(f_upper_tail, m)?)?;
    m.add_function(wrap_pyfunction!(bib_check, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_class::<PyBlockDesign>()?;
    Ok(())
}
