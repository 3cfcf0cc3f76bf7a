use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad input: parameters outside their domain, malformed files, bad configuration.
    Validation,
    /// The inputs are valid but the requested quantity does not exist or cannot be computed.
    Numerical,
    /// An optimizer could not produce an acceptable fit.
    Fit,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("divergent quantity: {0}")]
    Divergent(String),

    #[error("no stationary state exists without resetting (r = 0)")]
    NoStationaryState,

    #[error("stationary density is not normalizable: {0}")]
    NonNormalizable(String),

    #[error("censored fraction {fraction:.4} exceeds the threshold {threshold:.4}")]
    Censored { fraction: f64, threshold: f64 },

    #[error("ensemble is not stationary: KS distance {distance:.4} above {threshold:.4}")]
    NotStationary { distance: f64, threshold: f64 },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("degenerate row {row}: {reason}")]
    DegenerateRow { row: usize, reason: String },

    #[error("state {state} is absorbing (zero total exit rate)")]
    AbsorbingState { state: usize },

    #[error("chain is reducible; closed classes {classes:?}")]
    Reducible { classes: Vec<Vec<usize>> },

    #[error("ill-conditioned linear system: {0}")]
    Conditioning(String),

    #[error(
        "fit failed after {evaluations} evaluations: {reason} \
         (best objective {best_objective:.6e} at {best_point:?})"
    )]
    FitFailure {
        reason: String,
        evaluations: usize,
        best_objective: f64,
        best_point: Vec<f64>,
    },

    #[error(
        "initialization failed: residual {residual:.3e} above tolerance {tolerance:.3e} \
         (best mu = {best_mu}, sigma2 = {best_sigma2}); {surface}"
    )]
    Initialization {
        residual: f64,
        tolerance: f64,
        best_mu: f64,
        best_sigma2: f64,
        surface: String,
    },

    #[error("parse error at line {line}, column `{column}`: {message}")]
    Parse {
        line: usize,
        column: String,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidParameter { .. }
            | Error::Domain(_)
            | Error::Config(_)
            | Error::InvalidMatrix(_)
            | Error::Parse { .. }
            | Error::Io(_) => ErrorCategory::Validation,
            Error::Divergent(_)
            | Error::NoStationaryState
            | Error::NonNormalizable(_)
            | Error::Censored { .. }
            | Error::NotStationary { .. }
            | Error::DegenerateRow { .. }
            | Error::AbsorbingState { .. }
            | Error::Reducible { .. }
            | Error::Conditioning(_) => ErrorCategory::Numerical,
            Error::FitFailure { .. } | Error::Initialization { .. } => ErrorCategory::Fit,
        }
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Divergent(_) => "divergent",
            Error::NoStationaryState => "no_stationary_state",
            Error::NonNormalizable(_) => "non_normalizable",
            Error::Censored { .. } => "censored",
            Error::NotStationary { .. } => "not_stationary",
            Error::InvalidMatrix(_) => "invalid_matrix",
            Error::DegenerateRow { .. } => "degenerate_row",
            Error::AbsorbingState { .. } => "absorbing_state",
            Error::Reducible { .. } => "reducible",
            Error::Conditioning(_) => "conditioning",
            Error::FitFailure { .. } => "fit_failure",
            Error::Initialization { .. } => "initialization",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Parse {
            line,
            column: String::new(),
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: String::new(),
            message: e.to_string(),
        }
    }
}
