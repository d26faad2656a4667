use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field is incompatible: {0}")]
    FieldMismatch(String),

    #[error("non-finite value in field at index {index}")]
    NonFiniteField { index: usize },

    #[error("multiplier is not finite at wavenumber {wavenumber}")]
    InvalidMultiplier { wavenumber: f64 },

    #[error("field mean {mean:e} exceeds the zero-mean tolerance {tolerance:e}")]
    ZeroMeanViolation { mean: f64, tolerance: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("interface is not compactly supported: edge value {edge_value:e} exceeds {threshold:e}")]
    SupportViolation { edge_value: f64, threshold: f64 },

    #[error("interface amplitude {amplitude} must stay below {limit}")]
    AmplitudeViolation { amplitude: f64, limit: f64 },

    #[error("vorticity fixed point did not contract after {iterations} iterations (residual {residual:e})")]
    ContractionFailure { iterations: usize, residual: f64 },

    #[error("degenerate map: min J = {min_j:e}")]
    DegenerateMap { min_j: f64 },

    #[error("interface touches the bottom: min h = {min_h}, c_b = {c_b}")]
    InterfaceTouchesBottom { min_h: f64, c_b: f64 },

    #[error("map is not a diffeomorphism: min J = {min_j:e} at node ({i}, {j})")]
    NonDiffeomorphism { min_j: f64, i: usize, j: usize },

    #[error("elliptic coefficient is not positive definite at node ({i}, {j})")]
    CoefficientDegeneracy { i: usize, j: usize },

    #[error("conjugate gradient did not converge in {iterations} iterations (last residual {:e})", .residual_history.last().copied().unwrap_or(f64::NAN))]
    CgNonConvergence {
        iterations: usize,
        residual_history: Vec<f64>,
    },

    #[error("non-finite state at t = {time}")]
    BlowUp { time: f64 },

    #[error("model `{0}` exposes no dissipation functional")]
    MissingDissipation(String),

    #[error("invalid fit window: {0}")]
    InvalidWindow(String),

    #[error("malformed series: {0}")]
    MalformedSeries(String),

    #[error("{}", format_issues(.0))]
    Config(Vec<crate::io::config::ConfigIssue>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),

    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

fn format_issues(issues: &[crate::io::config::ConfigIssue]) -> String {
    let lines: Vec<String> = issues.iter().map(|i| i.to_string()).collect();
    lines.join("\n")
}
