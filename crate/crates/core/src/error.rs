use thiserror::Error;

use crate::solver::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("value v[{agent}][{item}] = {value} is negative or not finite")]
    NegativeValue { agent: usize, item: usize, value: f64 },
    #[error("budget of agent {agent} is {budget}; budgets must be positive and finite")]
    NonPositiveBudget { agent: usize, budget: f64 },
    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("proportionality shares sum to {sum}, which exceeds 1")]
    SharesExceedOne { sum: f64 },
    #[error("invalid proportionality spec: {0}")]
    InvalidProportionality(String),
    #[error("agent {agent} has no item with positive value")]
    NoPositiveValueItems { agent: usize },
    #[error("relation {relation} of agent {agent} excludes the zero allocation")]
    ZeroInfeasibleConstraint { agent: usize, relation: usize },
    #[error("constraint set mixes agents {0} and {1}")]
    MixedAgents(usize, usize),
    #[error("welfare terms need a positive argument, got {0}")]
    NonPositiveArgument(f64),
    #[error("invalid welfare rule: {0}")]
    InvalidRule(String),
    #[error("linear program is infeasible")]
    InfeasibleRegion,
    #[error("linear program is unbounded")]
    UnboundedRegion,
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("Frank-Wolfe gap {gap:.3e} above tolerance {tol:.3e} after {iterations} iterations", iterations = .report.iterations, gap = .report.fw_gap)]
    ToleranceNotReached { tol: f64, report: Box<SolveReport> },
    #[error("brute-force oracle supports at most 6 free dimensions, instance has {0}")]
    TooLargeForOracle(usize),
    #[error("every unconstrained agent has zero baseline value")]
    DegenerateBaseline,
    #[error("no agent is eligible for an equal-split constraint")]
    NoEligibleAgents,
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
    #[error("negative count {count} for ({agent}, {item})")]
    NegativeCount { agent: String, item: String, count: f64 },
    #[error("negative bid {bid} for ({advertiser}, {ad})")]
    NegativeBid { advertiser: String, ad: String, bid: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NegativeValue { .. } => "NegativeValue",
            Error::NonPositiveBudget { .. } => "NonPositiveBudget",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::SharesExceedOne { .. } => "SharesExceedOne",
            Error::InvalidProportionality(_) => "InvalidProportionality",
            Error::NoPositiveValueItems { .. } => "NoPositiveValueItems",
            Error::ZeroInfeasibleConstraint { .. } => "ZeroInfeasibleConstraint",
            Error::MixedAgents(..) => "MixedAgents",
            Error::NonPositiveArgument(_) => "NonPositiveArgument",
            Error::InvalidRule(_) => "InvalidRule",
            Error::InfeasibleRegion => "InfeasibleRegion",
            Error::UnboundedRegion => "UnboundedRegion",
            Error::InvalidTolerance(_) => "InvalidTolerance",
            Error::ToleranceNotReached { .. } => "ToleranceNotReached",
            Error::TooLargeForOracle(_) => "TooLargeForOracle",
            Error::DegenerateBaseline => "DegenerateBaseline",
            Error::NoEligibleAgents => "NoEligibleAgents",
            Error::BadParams(_) => "BadParams",
            Error::MalformedCsv(_) => "MalformedCSV",
            Error::NegativeCount { .. } => "NegativeCount",
            Error::NegativeBid { .. } => "NegativeBid",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }

    /// Process exit code used by the CLI: 2 validation, 3 non-convergence, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ToleranceNotReached { .. } => 3,
            Error::Io(_) => 4,
            Error::InfeasibleRegion | Error::UnboundedRegion => 1,
            _ => 2,
        }
    }
}
