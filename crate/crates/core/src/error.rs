use thiserror::Error;

/// Errors raised anywhere in the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix data has {found} entries, expected {rows}x{cols}")]
    InvalidShape { rows: usize, cols: usize, found: usize },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max |H - H'| = {deviation:e})")]
    Asymmetric { deviation: f64 },

    #[error("Jacobi eigensolver did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("tolerances must be strictly positive (rel_eps = {rel_eps}, abs_eps = {abs_eps})")]
    InvalidTolerance { rel_eps: f64, abs_eps: f64 },

    #[error("matrix is not a projector: {0}")]
    NotAProjector(String),

    #[error("factor '{factor}': level index {level} outside 0..{num_levels}")]
    LevelOutOfRange {
        factor: String,
        level: usize,
        num_levels: usize,
    },

    #[error("a design needs at least one unit")]
    ZeroUnits,

    #[error("vector is empty")]
    EmptyVector,

    #[error("adjusted projector is not orthogonal to the swept projector (max deviation {deviation:e})")]
    NotOrthogonalComponents { deviation: f64 },

    #[error("design is not a balanced incomplete block design")]
    NotBib,

    #[error("efficiency factor {0} outside (0, 1]")]
    EfficiencyOutOfRange(f64),

    #[error("residual mean square needs at least one degree of freedom")]
    ZeroDf,

    #[error("variance ratio undefined: residual mean square is zero")]
    ZeroResidualVariance,

    #[error("invalid degrees of freedom (d1 = {d1}, d2 = {d2})")]
    InvalidDf { d1: f64, d2: f64 },

    #[error("design is disconnected; p-values are not reported")]
    DisconnectedDesign,

    #[error("negative sum of squares {ss:e} for '{source_label}'")]
    NegativeSs { source_label: String, ss: f64 },

    #[error("sums of squares do not add up: components {components:e}, total {total:e}")]
    AdditivityViolated { components: f64, total: f64 },

    #[error("information matrix has {zero_roots} zero roots; design is disconnected")]
    Disconnected { zero_roots: usize },

    #[error("vector is not a contrast (sum = {sum:e})")]
    NotAContrast { sum: f64 },

    #[error("contrast vector is zero")]
    ZeroVector,

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error("row {row}: response '{value}' is not a finite number")]
    NonNumericResponse { row: usize, value: String },

    #[error("unequal block sizes: block '{block}' has {size} units, expected {expected}")]
    UnequalBlockSizes {
        block: String,
        size: usize,
        expected: usize,
    },

    #[error("unequal replication: treatment '{treatment}' appears {count} times, expected {expected}")]
    UnequalReplication {
        treatment: String,
        count: usize,
        expected: usize,
    },

    #[error("input has no data rows")]
    EmptyFile,

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerical machinery rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Context { source, .. } => source.is_numerical(),
            Error::NoConvergence { .. }
            | Error::NotAProjector(_)
            | Error::NotOrthogonalComponents { .. }
            | Error::NegativeSs { .. }
            | Error::AdditivityViolated { .. }
            | Error::Asymmetric { .. } => true,
            _ => false,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
