use thiserror::Error;

#[derive(Debug, Error)]
pub enum SsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("shifted system is numerically singular at z = {re} + {im}i (pivot {pivot:e})")]
    SingularShift { re: f64, im: f64, pivot: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("Gram matrix of order {n} exceeds the configured cap {cap}")]
    GramTooLarge { n: usize, cap: usize },

    #[error("{0} did not converge after {1} sweeps")]
    NonConvergence(&'static str, usize),

    #[error("cannot calibrate residual estimate: {0}")]
    Calibration(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported Matrix Market field: {0}")]
    UnsupportedField(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{step}: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<SsError>,
    },
}

impl SsError {
    pub(crate) fn at(step: &'static str) -> impl FnOnce(SsError) -> SsError {
        move |source| SsError::Step {
            step,
            source: Box::new(source),
        }
    }

    /// Strips step labels.
    pub fn root(&self) -> &SsError {
        match self {
            SsError::Step { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self.root(),
            SsError::InvalidArgument(_)
                | SsError::Domain(_)
                | SsError::DimensionMismatch { .. }
                | SsError::GramTooLarge { .. }
                | SsError::Parse { .. }
                | SsError::UnsupportedField(_)
                | SsError::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, SsError>;
