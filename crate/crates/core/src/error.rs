use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid spectrum configuration: {0}")]
    InvalidConfig(String),
    #[error("level {level} out of range (valid: {min}..={max})")]
    LevelOutOfRange { level: usize, min: usize, max: usize },
    #[error("block structure mismatch: {0}")]
    ShapeMismatch(String),
    #[error("normal equations are singular (lambda = 0 requires full column rank)")]
    SingularSystem,
    #[error("regularization must be non-negative and finite, got {0}")]
    NonPositiveLambda(f64),
    #[error("no sign change bracketing lambda* for n = {n}, m = {m}, lambda = {lambda}")]
    BracketFailure { n: f64, m: usize, lambda: f64 },
    #[error("degrees of freedom {dof} not below n = {n}; deterministic equivalent undefined")]
    DegenerateDof { n: f64, dof: f64 },
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("grid too small: {rows} rows, {distinct_n} distinct n, {distinct_l} distinct L (need >= 5, >= 2, >= 2)")]
    InsufficientGrid { rows: usize, distinct_n: usize, distinct_l: usize },
    #[error("all observed errors are equal; nothing to fit")]
    DegenerateFit,
    #[error("duplicate grid cell n = {n}, L = {l}")]
    DuplicateCell { n: u64, l: f64 },
    #[error("budget {budget} is smaller than one item of size {item}")]
    BudgetTooSmall { budget: f64, item: f64 },
    #[error("budget {budget} infeasible: all items at the maximum level still take {minimum} bytes")]
    BudgetInfeasible { budget: f64, minimum: f64 },
    #[error("randomized plans need at least 2 items, got {0}")]
    DegenerateSubset(usize),
    #[error("item `{0}` has no class label")]
    MissingLabels(String),
    #[error("unknown item id `{0}`")]
    UnknownItem(String),
    #[error("level search did not reach the 1% budget band (total {total}, target {target})")]
    PlanNotConverged { total: f64, target: f64 },
}

impl Error {
    /// Variant name, for diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::LevelOutOfRange { .. } => "LevelOutOfRange",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::SingularSystem => "SingularSystem",
            Error::NonPositiveLambda(_) => "NonPositiveLambda",
            Error::BracketFailure { .. } => "BracketFailure",
            Error::DegenerateDof { .. } => "DegenerateDof",
            Error::DomainError(_) => "DomainError",
            Error::InsufficientGrid { .. } => "InsufficientGrid",
            Error::DegenerateFit => "DegenerateFit",
            Error::DuplicateCell { .. } => "DuplicateCell",
            Error::BudgetTooSmall { .. } => "BudgetTooSmall",
            Error::BudgetInfeasible { .. } => "BudgetInfeasible",
            Error::DegenerateSubset(_) => "DegenerateSubset",
            Error::MissingLabels(_) => "MissingLabels",
            Error::UnknownItem(_) => "UnknownItem",
            Error::PlanNotConverged { .. } => "PlanNotConverged",
        }
    }
}
