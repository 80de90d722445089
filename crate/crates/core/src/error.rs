use thiserror::Error;

/// Errors raised anywhere in the arena.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid deal: {0}")]
    InvalidDeal(String),

    #[error("deal space too large to enumerate: {cardinality} deals (limit {limit})")]
    EnumerationRefused { cardinality: u128, limit: u128 },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("round {round} is outside the episode (total budget {total})")]
    OutOfEpisode { round: usize, total: usize },

    #[error("protocol closed: episode already terminated")]
    ProtocolClosed,

    #[error("protocol violation: agent {agent} sent {tag} during {phase}: {reason}")]
    ProtocolViolation {
        agent: usize,
        phase: String,
        tag: String,
        reason: String,
    },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("numeric fault: non-finite value produced by {0}")]
    NumericFault(&'static str),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("oracle refused: {0}")]
    OracleRefused(String),

    #[error("unknown ablation flag `{0}`")]
    UnknownFlag(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericFault(_) => 3,
            Error::EnumerationRefused { .. } | Error::OracleRefused(_) => 4,
            _ => 2,
        }
    }
}
