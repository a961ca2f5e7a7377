use thiserror::Error;

/// Errors raised by the game, controller, integration and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("agent index {index} out of range for a game with {n_agents} agents")]
    AgentIndex { index: usize, n_agents: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("game `{0}` has no analytic pseudogradient (cost-only game)")]
    MissingPseudogradient(String),

    #[error("game `{0}` has no known Nash equilibrium")]
    MissingEquilibrium(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("constraint set is empty")]
    EmptySet,

    #[error("integration failure: {0}")]
    Integration(String),

    #[error("config error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config {
            line: None,
            msg: msg.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
