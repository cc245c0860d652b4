use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite {what} at x = {x:?}, control = {control:?}")]
    NonFinite {
        what: &'static str,
        x: Vec<f64>,
        control: Vec<f64>,
    },

    #[error("no admissible control at x = {x:?} (smallest |σᵀp| found: {min_residual:e})")]
    NoAdmissibleControl { x: Vec<f64>, min_residual: f64 },

    #[error("positive-definiteness violated: V({x:?}) = {value}")]
    NotPositiveDefinite { x: Vec<f64>, value: f64 },

    #[error("rate function must be positive here: l({x:?}) = {value}")]
    RateNotPositive { x: Vec<f64>, value: f64 },

    #[error("φ(a, b) is undefined at a = {a}, b = {b}")]
    PhiDomain { a: f64, b: f64 },

    #[error("strict CLF premise violated at {x:?}: control gain vanishes while γ = {gamma} ≥ 0")]
    ClfPremise { x: Vec<f64>, gamma: f64 },

    #[error("σ·DV = {sigma_dv:e} cannot be cancelled at {x:?}: τ·DV = {tau_dv:e}")]
    NoDiffusionCancellation {
        x: Vec<f64>,
        sigma_dv: f64,
        tau_dv: f64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{context}: parse error at line {line}, column {column}: {message}")]
    Parse {
        context: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown built-in `{id}`; valid ids: {valid}")]
    UnknownBuiltin { id: String, valid: String },

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
