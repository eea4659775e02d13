use crate::epsilon::Epsilon;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot compose an empty list of privacy losses")]
    EmptyComposition,

    #[error("malformed query plan: {0}")]
    MalformedPlan(String),

    #[error("privacy budget exceeded: requested {requested}, remaining {remaining}")]
    BudgetExceeded {
        requested: Epsilon,
        remaining: Epsilon,
    },

    #[error("degenerate denominator: services device count is zero")]
    DegenerateDenominator,

    #[error("duplicate zone {zone}")]
    DuplicateZone { zone: String },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn parse(line: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}
