use thiserror::Error;

/// Failure modes of the meta-analysis routines.
///
/// Input errors (bad records, too few studies) are separated from numerical
/// failures so callers can map them onto different exit codes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("study `{0}`: standard error must be positive and finite")]
    NonPositiveStdErr(String),
    #[error("study `{0}`: effect estimate is not finite")]
    NonFiniteEffect(String),
    #[error("duplicate study id `{0}`")]
    DuplicateId(String),
    #[error("too few studies: need at least {needed}, got {got}")]
    TooFewStudies { needed: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("f(q) undefined: radicand {0} is negative")]
    DomainError(f64),
    #[error("conditional mean of Q is not positive ({0})")]
    DegenerateMoments(f64),
    #[error("quadrature did not converge: estimated error {abs_err:e} on result {value}")]
    QuadratureFailure { value: f64, abs_err: f64 },
    #[error("no sign change found while bracketing the pivot quantile for level {0}")]
    BracketFailure(f64),
    #[error("penalized likelihood has no interior maximum in the search bracket")]
    OptimizerNoBracket,
    #[error("generator stalled: no study accepted after {0} attempts")]
    GeneratorStall(u64),
    #[error("no methods requested")]
    EmptyMethodSelection,
    #[error("csv line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by the caller's input rather than by numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveStdErr(_)
                | Error::NonFiniteEffect(_)
                | Error::DuplicateId(_)
                | Error::TooFewStudies { .. }
                | Error::InvalidArgument(_)
                | Error::EmptyMethodSelection
                | Error::Parse { .. }
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
