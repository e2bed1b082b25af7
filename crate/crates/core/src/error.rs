//! Crate-wide error type.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("rating {0} outside 1..=5")]
    InvalidRating(i64),
    #[error("provider failure after {retries} retries: {detail}")]
    Provider { detail: String, retries: u32 },
    #[error("provider returned an empty reply")]
    EmptyReply,
    #[error("script exhausted for key {key}")]
    ScriptExhausted { key: String },
    #[error("malformed payload in block at line {position} ({kind}): {detail}")]
    MalformedPayload {
        kind: String,
        position: usize,
        detail: String,
    },
    #[error("protocol breakdown for {role}: {detail}")]
    ProtocolBreakdown { role: String, detail: String },
    #[error("exploration stage failed: {0}")]
    ExplorationFailed(String),
    #[error("ballot for commit {commit_id} is incomplete")]
    IncompleteBallot { commit_id: String },
    #[error("unknown action {action_id}")]
    UnknownAction { action_id: String },
    #[error("plan cost {cost} exceeds budget {budget}")]
    OverBudget { cost: u32, budget: u32 },
    #[error("nothing to do: empty work source")]
    NothingToDo,
    #[error("implementation stage failed: {0}")]
    ImplementationFailed(String),
    #[error("EDA tool failure: {0}")]
    Tool(String),
    #[error("report section unavailable: {section}")]
    SectionUnavailable { section: String },
    #[error("verification stage failed: {0}")]
    VerificationStageFailed(String),
    #[error("normalizer components must be strictly positive")]
    InvalidNormalizer,
    #[error("no passed version to select from")]
    NoCandidate,
    #[error("simulation verdict indeterminate: {0}")]
    IndeterminateResult(String),
    #[error("parse error at line {line}: {detail}")]
    ParseError { line: usize, detail: String },
    #[error("decision document I/O failure: {0}")]
    Doc(String),
    #[error("cannot resume session: {0}")]
    Resume(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization failure: {0}")]
    Json(#[from] serde_json::Error),
}
