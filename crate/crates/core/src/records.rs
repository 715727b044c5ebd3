//! JSON-lines generation records.
//!
//! The sampler writes [`GenerationOutput`] lines. The analyzer reads the looser
//! [`GenerationRecord`], which also accepts records that only disclose a token count.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::canonicity::is_canonical;
use crate::error::{Error, Result};
use crate::generation::{Generation, SamplingMode};
use crate::spec::TokenizerSpec;
use crate::vocab::TokenSequence;

/// One sampled output, as written by the sampler.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub prompt_id: String,
    pub seed: u64,
    pub mode: SamplingMode,
    pub tokens: TokenSequence,
    pub text: String,
    pub canonical: bool,
    pub evals: Vec<usize>,
}

impl GenerationOutput {
    pub fn new(
        spec: &TokenizerSpec,
        prompt_id: impl Into<String>,
        seed: u64,
        mode: SamplingMode,
        generation: &Generation,
    ) -> Result<Self> {
        Ok(Self {
            prompt_id: prompt_id.into(),
            seed,
            mode,
            text: spec.decode(&generation.tokens)?,
            canonical: is_canonical(spec, &generation.tokens)?,
            tokens: generation.tokens.clone(),
            evals: generation.traces.iter().map(|t| t.evaluations).collect(),
        })
    }

    pub fn to_json_line(&self) -> Result<String> {
        let mut line = serde_json::to_string(self)?;
        line.push('\n');
        Ok(line)
    }
}

/// Appends records to `path`, creating it if needed.
pub fn append_outputs(path: impl AsRef<Path>, outputs: &[GenerationOutput]) -> Result<()> {
    let mut text = String::new();
    for o in outputs {
        text.push_str(&o.to_json_line()?);
    }
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

/// An observed output: its string, its length in tokens and, when disclosed, the
/// tokens themselves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GenerationRecord {
    pub prompt_id: String,
    pub seed: u64,
    pub text: String,
    pub tokens: Option<TokenSequence>,
    pub token_count: usize,
}

#[derive(Deserialize)]
struct RawRecord {
    prompt_id: String,
    #[serde(default)]
    seed: u64,
    text: String,
    #[serde(default)]
    tokens: Option<TokenSequence>,
    #[serde(default)]
    token_count: Option<usize>,
}

impl GenerationRecord {
    /// A record with disclosed tokens.
    pub fn with_tokens(prompt_id: impl Into<String>, seed: u64, text: impl Into<String>, tokens: TokenSequence) -> Self {
        Self {
            prompt_id: prompt_id.into(),
            seed,
            text: text.into(),
            token_count: tokens.len(),
            tokens: Some(tokens),
        }
    }

    /// A record that only discloses its length.
    pub fn with_count(prompt_id: impl Into<String>, seed: u64, text: impl Into<String>, token_count: usize) -> Self {
        Self {
            prompt_id: prompt_id.into(),
            seed,
            text: text.into(),
            tokens: None,
            token_count,
        }
    }

    /// Parses one JSON line. `token_count` may be omitted when `tokens` is given.
    pub fn from_json_line(line: &str) -> Result<Self> {
        let raw: RawRecord = serde_json::from_str(line)?;
        let token_count = match (&raw.tokens, raw.token_count) {
            (Some(t), Some(c)) if t.len() != c => {
                return Err(Error::Validation(format!(
                    "token_count {c} disagrees with {} tokens",
                    t.len()
                )))
            }
            (Some(t), _) => t.len(),
            (None, Some(c)) => c,
            (None, None) => return Err(Error::parse("token_count", "missing and no tokens given")),
        };
        Ok(Self {
            prompt_id: raw.prompt_id,
            seed: raw.seed,
            text: raw.text,
            tokens: raw.tokens,
            token_count,
        })
    }

    /// Checks that disclosed tokens decode to the recorded text.
    pub fn validate(&self, spec: &TokenizerSpec) -> Result<()> {
        if let Some(tokens) = &self.tokens {
            let decoded = spec.decode(tokens)?;
            if decoded != self.text {
                return Err(Error::Validation(format!(
                    "tokens decode to {decoded:?}, not {:?}",
                    self.text
                )));
            }
        }
        Ok(())
    }
}

impl From<GenerationOutput> for GenerationRecord {
    fn from(o: GenerationOutput) -> Self {
        Self::with_tokens(o.prompt_id, o.seed, o.text, o.tokens)
    }
}

/// Reads a JSON-lines record file, skipping blank lines. Errors name the line.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<GenerationRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_records(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

pub fn parse_records(text: &str) -> Result<Vec<GenerationRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| GenerationRecord::from_json_line(l).map_err(|e| Error::Validation(format!("line {}: {e}", n + 1))))
        .collect()
}
