use thiserror::Error;

/// Errors raised by the simulator, the accountant and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("graph is not connected: {unreachable} of {agents} agents unreachable from agent 0")]
    DisconnectedGraph { agents: usize, unreachable: usize },

    #[error("invalid edge ({0}, {1}): {2}")]
    InvalidEdge(usize, usize, &'static str),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("column {0} of the design matrix is identically zero")]
    ZeroColumn(usize),

    #[error("inner loop produced a non-finite iterate at t = {t}")]
    NonFiniteIterate { t: usize },

    #[error("oracle evaluation failed: {0}")]
    OracleFailure(String),

    #[error("agent {agent} inbox is missing neighbor {missing}")]
    IncompleteInbox { agent: usize, missing: usize },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("parameter out of domain: {0}")]
    DomainError(String),

    #[error("variance bound is non-positive ({0:e}); parameters are inconsistent")]
    NegativeBound(f64),

    #[error("empirical privacy check failed: exceedance {exceedance:e} > allowed {allowed:e}")]
    CheckFailed { exceedance: f64, allowed: f64 },

    #[error("reference solution is zero; normalized error undefined")]
    ZeroReference,

    #[error("infeasible calibration: {0}")]
    Infeasible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("run {run}: {source}")]
    Run {
        run: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DisconnectedGraph { .. } => "DisconnectedGraph",
            Error::InvalidEdge(..) => "InvalidEdge",
            Error::NumericalFailure(_) => "NumericalFailure",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::ZeroColumn(_) => "ZeroColumn",
            Error::NonFiniteIterate { .. } => "NonFiniteIterate",
            Error::OracleFailure(_) => "OracleFailure",
            Error::IncompleteInbox { .. } => "IncompleteInbox",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::DomainError(_) => "DomainError",
            Error::NegativeBound(_) => "NegativeBound",
            Error::CheckFailed { .. } => "CheckFailed",
            Error::ZeroReference => "ZeroReference",
            Error::Infeasible(_) => "Infeasible",
            Error::Config(_) => "Config",
            Error::Run { source, .. } => source.kind(),
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
            Error::Toml(_) => "Toml",
        }
    }

    pub(crate) fn in_run(self, run: impl Into<String>) -> Error {
        Error::Run {
            run: run.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
