use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or model combination is invalid before anything runs.
    #[error("invalid {field}: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },

    #[error("index {index} out of range for {n} agents")]
    IndexOutOfRange { index: usize, n: usize },

    /// Interaction-probability selection found no agent to pick.
    #[error("agent {agent} has zero total interaction probability; selection is undefined")]
    ZeroInteractionMass { agent: usize },

    #[error("no derived limit: {0}")]
    NoDerivedLimit(String),

    #[error("opinion of agent {agent} became non-finite at t = {t}")]
    NonFinite { agent: usize, t: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            message: message.into(),
        }
    }
}
