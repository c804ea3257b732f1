//! Web service for forced-choice recognition studies.
//!
//! Subjects get a session token and the category examples, then classify
//! one stimulus per image, each shown under a single randomly drawn
//! condition. Answers go to an append-only log that is the only source of
//! truth for results.

mod http;
pub mod records;
pub mod state;

pub use http::{router, serve};
pub use records::{aggregate_results, rate_std_error, ConditionResult, StudyResults, TrialRecord};
pub use state::{replay, AnswerAck, SessionView, Study, StudyConfig, TrialView};

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("unknown session")]
    UnknownSession,
    #[error("'{0}' is not one of the study classes")]
    InvalidClass(String),
    #[error("{0}")]
    Conflict(String),
    #[error("service unavailable: {0}")]
    Unavailable(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("storage error: {0}")]
    Storage(String),
}
