use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("finite-difference stencil leaves the field domain at {point:?}")]
    StencilOutsideDomain { point: Vec<f64> },
    #[error("point lies on the reference set (distance {distance:e} within covering radius)")]
    OnTargetSet { distance: f64 },
    #[error("point set is empty")]
    EmptySet,
    #[error("negative Lipschitz constant {0}")]
    NegativeLipschitz(f64),
    #[error("sample grid is empty")]
    EmptyGrid,
    #[error("stratification has no strata")]
    EmptyStratification,
    #[error("certificate lacks the sup bound required by the product rule")]
    MissingSupBound,
    #[error("certificate lacks the lower bound required by the reciprocal rule")]
    MissingLowerBound,
    #[error("certificates disagree: {0}")]
    CertificateMismatch(String),
    #[error("|f| = {observed:e} below claimed lower bound {claimed:e} at {point:?}")]
    ZeroDenominatorDetected { point: Vec<f64>, observed: f64, claimed: f64 },
    #[error("inner function has no bounded (k = 0) sup bound")]
    UnboundedInner,
    #[error("bump centre lies on W")]
    OnW,
    #[error("eta = {eta} must be below L = {lip_l} for stratum {stratum}")]
    EtaTooLarge { stratum: String, eta: f64, lip_l: f64 },
    #[error("boundary of stratum {stratum} is not resolved by lower-dimensional strata: {detail}")]
    RecursionBase { stratum: String, detail: String },
    #[error("bumps do not share reference set, order, and eta")]
    MixedReference,
    #[error("coverage gap: {0}")]
    CoverageGap(String),
    #[error("infeasible constant schedule: {0}")]
    InfeasibleSchedule(String),
    #[error("containment violated for stratum {stratum} at {point:?}")]
    ContainmentViolation { stratum: String, point: Vec<f64> },
    #[error("partition function {index} is positive outside its local domain at {point:?}")]
    SupportLeak { index: usize, point: Vec<f64> },
    #[error("Lipschitz bound of g violated: {0}")]
    LipschitzViolation(String),
    #[error("f = {value:e} is not positive off W at {point:?}")]
    NonPositiveF { point: Vec<f64>, value: f64 },
    #[error("no level crossing found for t = {0}")]
    EmptyLevelSet(f64),
    #[error("no contour found at level {0}")]
    EmptyContour(f64),
    #[error("operation supports ambient dimension {supported}, got {got}")]
    UnsupportedDimension { supported: &'static str, got: usize },
    #[error("line {line}, column {column}: {message}")]
    SyntaxError { line: usize, column: usize, message: String },
    #[error("{0}")]
    SemanticError(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status reported by the command-line tool for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::SyntaxError { .. } | Error::SemanticError(_) => 3,
            Error::CoverageGap(_) => 4,
            Error::InfeasibleSchedule(_) => 5,
            Error::ContainmentViolation { .. } | Error::SupportLeak { .. } => 6,
            Error::LipschitzViolation(_) | Error::NonPositiveF { .. } => 7,
            Error::EmptyLevelSet(_) | Error::EmptyContour(_) => 8,
            Error::Io(_) => 10,
            _ => 9,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
