use thiserror::Error;

/// Errors raised by the numerical core.
///
/// Every variant maps to a stable machine-readable code via [`Error::code`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("radius {r} outside the tabulated range [{lo}, {hi}]")]
    OutOfRange { r: f64, lo: f64, hi: f64 },
    #[error("tail integral of 1/q does not converge: {0}")]
    TailDivergent(String),
    #[error("quadrature did not reach the requested accuracy on [{a}, {b}]")]
    QuadratureFailed { a: f64, b: f64 },
    #[error("no sign change found: {0}")]
    NotBracketed(String),
    #[error("solution left the domain (-c, c) at r = {r}")]
    DomainEscape { r: f64 },
    #[error("step size underflow at r = {r}")]
    StepUnderflow { r: f64 },
    #[error("energy increased by {increase:e} at r = {r} (allowed {allowed:e})")]
    EnergyIncrease { r: f64, increase: f64, allowed: f64 },
    #[error("series start radius too large: frozen-coefficient error {err:e}")]
    StartTooLarge { err: f64 },
    #[error("step budget exhausted at r = {r}")]
    TooManySteps { r: f64 },
    #[error("value {s} outside branch range [{lo}, {hi}]")]
    OutsideBranch { s: f64, lo: f64, hi: f64 },
    #[error("evaluation refused inside singular window around {center} (s = {s})")]
    SingularWindow { s: f64, center: f64 },
    #[error("negative radicand {radicand:e} at s = {s}")]
    NegativeRadicand { s: f64, radicand: f64 },
    #[error("undefined value: {0}")]
    Undefined(String),
    #[error("no bracket: {0}")]
    NoBracket(String),
    #[error("undecided at horizon r_max = {r_max} for alpha = {alpha}")]
    Undecided { alpha: f64, r_max: f64 },
    #[error("precondition not met: {0}")]
    Precondition(String),
}

impl Error {
    /// Stable identifier for scripting.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::OutOfRange { .. } => "out_of_range",
            Error::TailDivergent(_) => "tail_divergent",
            Error::QuadratureFailed { .. } => "quadrature_failed",
            Error::NotBracketed(_) => "not_bracketed",
            Error::DomainEscape { .. } => "domain_escape",
            Error::StepUnderflow { .. } => "step_underflow",
            Error::EnergyIncrease { .. } => "energy_increase",
            Error::StartTooLarge { .. } => "start_too_large",
            Error::TooManySteps { .. } => "too_many_steps",
            Error::OutsideBranch { .. } => "outside_branch",
            Error::SingularWindow { .. } => "singular_window",
            Error::NegativeRadicand { .. } => "negative_radicand",
            Error::Undefined(_) => "undefined",
            Error::NoBracket(_) => "no_bracket",
            Error::Undecided { .. } => "undecided",
            Error::Precondition(_) => "precondition",
        }
    }

    /// True for outcomes that are not numerical failures but undecided results.
    pub fn is_undecided(&self) -> bool {
        matches!(self, Error::Undecided { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
