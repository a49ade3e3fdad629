use thiserror::Error;

/// Errors raised anywhere in the recourse pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: String, expected: usize, got: usize },
    #[error("covariance of component {component} is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { component: usize, min_eigenvalue: f64 },
    #[error("covariance of component {component} is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { component: usize, asymmetry: f64 },
    #[error("invalid mixture weights: {0}")]
    InvalidWeights(String),
    #[error("invalid budget: {0}")]
    BadBudget(String),
    #[error("invalid feature vector: {0}")]
    InvalidFeatureVector(String),
    #[error("invalid classifier: {0}")]
    InvalidClassifier(String),
    #[error("invalid actionability constraints: {0}")]
    InvalidActionability(String),
    #[error("beta {beta} outside the admissible range {range}")]
    BetaOutOfRange { beta: f64, range: &'static str },
    #[error("action vector is zero")]
    ZeroAction,
    #[error("component {component} violates the robust margin (a + c = {slack:e} >= 0)")]
    InfeasibleMargin { component: usize, slack: f64 },
    #[error("inner dual solve did not converge: {0}")]
    DualSolveFailed(String),
    #[error("degenerate cone direction: {0}")]
    DegenerateDirection(String),
    #[error("feasible set appears empty (max violation {violation:e})")]
    EmptyFeasibleSet { violation: f64 },
    #[error("projection did not converge in {iterations} iterations (max violation {violation:e})")]
    MaxIterExceeded { iterations: usize, violation: f64 },
    #[error("margin constraints cannot be met under the actionability constraints within cost {cap}")]
    Unattainable { cap: f64 },
    #[error("cost budget {delta} is below the minimal feasible budget {delta_min}")]
    BudgetTooSmall { delta: f64, delta_min: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("empty cluster persisted after {restarts} re-initialisations")]
    EmptyCluster { restarts: usize },
    #[error("black-box model returned a constant score on every perturbation")]
    DegenerateScores,
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("label column `{0}` not found")]
    MissingLabel(String),
    #[error("non-numeric value `{value}` at line {line}, column `{column}`")]
    NonNumeric { line: usize, column: String, value: String },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
