use std::io;

use crate::vocab::TokenId;

/// Errors produced by tokenizers, samplers and the analysis pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid token sequence: unknown token id {id}")]
    InvalidSequence { id: TokenId },

    #[error("cannot encode character {ch:?} at position {position}")]
    Encoding { ch: char, position: usize },

    #[error("segment {index}: {source}")]
    Segment {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed tokenizer spec: field `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("dead end: no canonical continuation{}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    DeadEnd { step: Option<usize> },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("input of {len} characters exceeds the enumeration limit of {limit} ({estimate} tokenizations)")]
    TooLong {
        len: usize,
        limit: usize,
        estimate: u128,
    },

    #[error("no distribution for context {0:?}")]
    MissingContext(Vec<TokenId>),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(field: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn in_segment(self, index: usize) -> Self {
        Error::Segment {
            index,
            source: Box::new(self),
        }
    }

    /// Attaches a generation step index to a dead-end error.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            Error::DeadEnd { .. } => Error::DeadEnd { step: Some(step) },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
