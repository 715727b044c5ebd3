//! Canonical tokenization toolkit.
//!
//! Trains and runs BPE, WordPiece and Unigram tokenizers, decides whether a token
//! sequence is the canonical tokenization of its string, samples from language
//! models under a canonicity constraint, and measures how often identical output
//! strings arrive with different token counts (and therefore different prices).

pub mod analysis;
pub mod bpe;
pub mod canonicity;
mod corpus;
pub mod error;
pub mod generation;
pub mod pretok;
pub mod records;
pub mod spec;
pub mod unigram;
pub mod vocab;
pub mod wordpiece;

pub use canonicity::{enumerate_tokenizations, extension_is_canonical, is_canonical};
pub use error::{Error, Result};
pub use spec::{load_spec, save_spec, Merge, TokenizerKind, TokenizerSpec};
pub use vocab::{Alphabet, Token, TokenId, TokenSequence, Vocabulary};
