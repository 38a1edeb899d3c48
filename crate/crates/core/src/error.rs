use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("config parse error at line {line}, key `{key}`: {message}")]
    Parse {
        key: String,
        line: usize,
        message: String,
    },

    #[error("quadrature did not converge for {what}: last two estimates differ by {diff:.3e} at {nodes} nodes")]
    Quadrature {
        what: String,
        nodes: usize,
        diff: f64,
    },

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("norm drift {drift:.3e} exceeds bound {bound:.1e} at t = {t}")]
    NormDrift { t: f64, drift: f64, bound: f64 },

    #[error("SU(2) chart singular at t = {t} (|g1| = {g1_abs:.3e})")]
    ChartBlowup { t: f64, g1_abs: f64 },

    #[error("states are orthogonal (|overlap| = {overlap:.3e}); Pancharatnam phase undefined between t1 = {t1} and t = {t}")]
    Orthogonal { t1: f64, t: f64, overlap: f64 },

    #[error("bad input series: {0}")]
    Input(String),

    #[error("forbidden transition {k} -> {n}: coupling vanishes")]
    ForbiddenTransition { k: usize, n: usize },

    #[error("unsupported resonance order N = {0} (only 1, 2, 3)")]
    UnsupportedOrder(u32),

    #[error("insufficient span: {0}")]
    InsufficientSpan(String),

    #[error("Lorentzian fit failed after {iterations} iterations (residual {residual:.3e})")]
    FitFailed {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } => 2,
            _ => 3,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Quadrature { .. } => "quadrature",
            Error::Integration { .. } => "integration",
            Error::NormDrift { .. } => "norm_drift",
            Error::ChartBlowup { .. } => "chart_blowup",
            Error::Orthogonal { .. } => "orthogonal_states",
            Error::Input(_) => "input",
            Error::ForbiddenTransition { .. } => "forbidden_transition",
            Error::UnsupportedOrder(_) => "unsupported_order",
            Error::InsufficientSpan(_) => "insufficient_span",
            Error::FitFailed { .. } => "fit_failed",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
