use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("line {line}: expected {expected} counts, found {found}")]
    InconsistentLength { line: usize, expected: usize, found: usize },

    #[error("line {line}: negative count {value}")]
    NegativeCount { line: usize, value: i64 },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("singular local design at x = {x0}")]
    SingularDesign { x0: f64 },

    #[error("all bandwidth candidates give a singular local fit")]
    NoValidBandwidth,

    #[error("Silverman bandwidth undefined for zero-variance samples; use a fixed bandwidth")]
    ZeroVariance,

    #[error("matrix is not symmetric (|a_ij - a_ji| = {0:e})")]
    NotSymmetric(f64),

    #[error("Jacobi eigensolver did not converge in {0} sweeps")]
    NoConvergence(usize),

    #[error("requested {requested} eigenfunctions but only {available} positive eigenvalues")]
    TooManyComponents { requested: usize, available: usize },

    #[error("linear predictor overflow (eta = {0}); divergence guard tripped")]
    Overflow(f64),

    #[error("grid mismatch: expected length {expected}, found {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("id mismatch; symmetric difference: {0:?}")]
    IdMismatch(Vec<String>),

    #[error("need at least {needed} items, have {have}")]
    TooFewItems { needed: usize, have: usize },

    #[error("clustering needs at least one score dimension (zero-dimensional scores)")]
    ZeroDimensionalScores,

    #[error("model is missing stage `{0}`")]
    MissingStage(&'static str),

    #[error("schema version mismatch: file has {found}, expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("corrupt model file (checksum): {0}")]
    Checksum(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::ZeroDimensionalScores | Error::TooManyComponents { .. } => ErrorKind::Config,
            Error::SingularDesign { .. }
            | Error::NoValidBandwidth
            | Error::ZeroVariance
            | Error::NotSymmetric(_)
            | Error::NoConvergence(_)
            | Error::Overflow(_) => ErrorKind::Numerical,
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    /// Attach `path` to a bare I/O error.
    pub fn at_path(self, path: &std::path::Path) -> Error {
        match self {
            Error::Io(source) => Error::File {
                path: path.display().to_string(),
                source,
            },
            e => e,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}
