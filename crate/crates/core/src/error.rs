use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
        expected: Vec<String>,
    },
    #[error("invalid model: {0}")]
    Validation(String),
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("outside the model domain{}: {detail}", .t.map(|t| format!(" at t = {t}")).unwrap_or_default())]
    DomainEscape { t: Option<f64>, detail: String },
    #[error("singular metric: |det g| = {det:e} below threshold {threshold:e}")]
    SingularMetric { det: f64, threshold: f64 },
    #[error("outside the changed-metric domain: F - Phi = {gap:e}")]
    OutsideHatDomain { gap: f64 },
    #[error("degenerate margin F(1+2p^2) - 3 Phi = {margin:e}")]
    DegenerateMargin { margin: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(detail: impl Into<String>) -> Self {
        Error::DomainEscape {
            t: None,
            detail: detail.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
