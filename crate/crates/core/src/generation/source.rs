//! Next-token distribution sources standing in for a language model.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::distribution::{allowed_after, NextTokenDistribution};
use crate::canonicity::is_canonical;
use crate::error::{Error, Result};
use crate::spec::TokenizerSpec;
use crate::vocab::TokenId;

/// Add-k smoothing constant for [`BigramLm`].
pub const DEFAULT_SMOOTHING: f64 = 0.01;

/// Produces the next-token distribution for a context.
pub trait DistributionSource: Send + Sync {
    /// Number of real tokens; distributions carry one extra end-of-sequence entry.
    fn vocab_size(&self) -> usize;

    fn next_distribution(&self, context: &[TokenId]) -> Result<NextTokenDistribution>;
}

impl<S: DistributionSource + ?Sized> DistributionSource for &S {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<NextTokenDistribution> {
        (**self).next_distribution(context)
    }
}

impl<S: DistributionSource + ?Sized> DistributionSource for Box<S> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<NextTokenDistribution> {
        (**self).next_distribution(context)
    }
}

/// Add-k smoothed bigram model over token ids, trained on canonical encodings.
///
/// Row `vocab_size` is the start-of-sequence state and column `vocab_size` is
/// end-of-sequence. Every token has positive probability in every context.
#[derive(Debug, Clone, PartialEq)]
pub struct BigramLm {
    vocab_size: usize,
    k: f64,
    counts: Vec<u64>,
    row_totals: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct BigramFile {
    kind: String,
    vocab_size: usize,
    k: f64,
    /// `[previous, next, count]`; `previous == vocab_size` is the sequence start and
    /// `next == vocab_size` the sequence end.
    counts: Vec<[u64; 3]>,
}

impl BigramLm {
    /// Counts transitions in the canonical encodings of each non-empty line.
    pub fn train<S: AsRef<str>>(spec: &TokenizerSpec, corpus: &[S], k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Validation(format!("smoothing constant must be positive, got {k}")));
        }
        let v = spec.vocab_size();
        let mut lm = Self {
            vocab_size: v,
            k,
            counts: vec![0; (v + 1) * (v + 1)],
            row_totals: vec![0; v + 1],
        };
        for line in corpus {
            let line = line.as_ref();
            if line.is_empty() {
                continue;
            }
            let ids = spec.encode(line)?;
            let mut prev = v;
            for &id in ids.iter().chain(std::iter::once(&(v as TokenId))) {
                lm.counts[prev * (v + 1) + id as usize] += 1;
                lm.row_totals[prev] += 1;
                prev = id as usize;
            }
        }
        Ok(lm)
    }

    pub fn smoothing(&self) -> f64 {
        self.k
    }

    pub fn to_json(&self) -> Result<String> {
        let width = self.vocab_size + 1;
        let counts = self
            .counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| [(i / width) as u64, (i % width) as u64, c])
            .collect();
        let file = BigramFile {
            kind: "bigram".into(),
            vocab_size: self.vocab_size,
            k: self.k,
            counts,
        };
        let mut out = serde_json::to_string(&file)?;
        out.push('\n');
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: BigramFile = serde_json::from_str(text)?;
        if file.kind != "bigram" {
            return Err(Error::Validation(format!("expected a bigram model, found {:?}", file.kind)));
        }
        if !(file.k > 0.0 && file.k.is_finite()) {
            return Err(Error::Validation(format!("smoothing constant must be positive, got {}", file.k)));
        }
        let v = file.vocab_size;
        let mut counts = vec![0; (v + 1) * (v + 1)];
        let mut row_totals = vec![0; v + 1];
        for [prev, next, c] in file.counts {
            if prev as usize > v || next as usize > v {
                return Err(Error::Validation(format!("transition ({prev}, {next}) outside the vocabulary")));
            }
            counts[prev as usize * (v + 1) + next as usize] += c;
            row_totals[prev as usize] += c;
        }
        Ok(Self {
            vocab_size: v,
            k: file.k,
            counts,
            row_totals,
        })
    }
}

impl DistributionSource for BigramLm {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<NextTokenDistribution> {
        let v = self.vocab_size;
        let prev = match context.last() {
            None => v,
            Some(&id) if (id as usize) < v => id as usize,
            Some(&id) => return Err(Error::InvalidSequence { id }),
        };
        let row = &self.counts[prev * (v + 1)..(prev + 1) * (v + 1)];
        let denom = self.row_totals[prev] as f64 + self.k * (v + 1) as f64;
        let probs = row.iter().map(|&c| (c as f64 + self.k) / denom).collect();
        NextTokenDistribution::new(probs, context.to_vec())
    }
}

/// Explicit distributions keyed by exact context.
#[derive(Debug, Clone, Default)]
pub struct TableSource {
    vocab_size: usize,
    table: HashMap<Vec<TokenId>, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct TableLine {
    context: Vec<TokenId>,
    probs: Vec<f64>,
}

impl TableSource {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            table: HashMap::new(),
        }
    }

    /// Adds or replaces the row for `context`; `probs` includes the end-of-sequence entry.
    pub fn insert(&mut self, context: Vec<TokenId>, probs: Vec<f64>) -> Result<()> {
        if probs.len() != self.vocab_size + 1 {
            return Err(Error::Validation(format!(
                "row for {context:?} has {} entries, expected {}",
                probs.len(),
                self.vocab_size + 1
            )));
        }
        NextTokenDistribution::new(probs.clone(), context.clone())?;
        self.table.insert(context, probs);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Parses JSON lines of `{"context": [ids], "probs": [floats]}`.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut source: Option<Self> = None;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: TableLine = serde_json::from_str(line)
                .map_err(|e| Error::Validation(format!("line {}: {e}", n + 1)))?;
            let s = source.get_or_insert_with(|| Self::new(row.probs.len().saturating_sub(1)));
            s.insert(row.context, row.probs)
                .map_err(|e| Error::Validation(format!("line {}: {e}", n + 1)))?;
        }
        source.ok_or_else(|| Error::Validation("distribution table is empty".into()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = fs::File::open(path)?;
        let mut text = String::new();
        for line in BufReader::new(file).lines() {
            text.push_str(&line?);
            text.push('\n');
        }
        Self::from_jsonl(&text)
    }

    /// Rows sorted by context.
    pub fn to_jsonl(&self) -> Result<String> {
        let sorted: BTreeMap<&Vec<TokenId>, &Vec<f64>> = self.table.iter().collect();
        let mut out = String::new();
        for (context, probs) in sorted {
            out.push_str(&serde_json::to_string(&TableLine {
                context: context.clone(),
                probs: probs.clone(),
            })?);
            out.push('\n');
        }
        Ok(out)
    }
}

impl DistributionSource for TableSource {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<NextTokenDistribution> {
        let probs = self
            .table
            .get(context)
            .ok_or_else(|| Error::MissingContext(context.to_vec()))?;
        NextTokenDistribution::new(probs.clone(), context.to_vec())
    }
}

/// Moves a share `epsilon` of the wrapped source's mass, uniformly, onto tokens that
/// would make a canonical context non-canonical.
///
/// Non-canonical contexts are passed through unchanged: no continuation of them can
/// be canonical anyway.
#[derive(Debug, Clone)]
pub struct PerturbedSource<S> {
    inner: S,
    spec: TokenizerSpec,
    epsilon: f64,
}

impl<S: DistributionSource> PerturbedSource<S> {
    pub fn new(inner: S, spec: TokenizerSpec, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Validation(format!("epsilon must lie in [0, 1], got {epsilon}")));
        }
        if inner.vocab_size() != spec.vocab_size() {
            return Err(Error::Validation("source and spec vocabularies differ".into()));
        }
        Ok(Self { inner, spec, epsilon })
    }
}

impl<S: DistributionSource> DistributionSource for PerturbedSource<S> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<NextTokenDistribution> {
        let d = self.inner.next_distribution(context)?;
        if self.epsilon == 0.0 || !is_canonical(&self.spec, context)? {
            return Ok(d);
        }
        let mut targets = Vec::new();
        for id in 0..self.spec.vocab_size() as TokenId {
            if !allowed_after(&self.spec, context, id)? {
                targets.push(id as usize);
            }
        }
        if targets.is_empty() {
            return Ok(d);
        }
        let share = self.epsilon / targets.len() as f64;
        let mut probs: Vec<f64> = d.probs().iter().map(|p| p * (1.0 - self.epsilon)).collect();
        for t in targets {
            probs[t] += share;
        }
        NextTokenDistribution::new(probs, context.to_vec())
    }
}

/// Reads either a bigram model (a JSON object with `"kind": "bigram"`) or a JSON-lines
/// distribution table.
pub fn load_source(path: impl AsRef<Path>) -> Result<Box<dyn DistributionSource>> {
    let text = fs::read_to_string(path)?;
    if let Ok(value) = serde_json::from_str::<serde_json::Value>(&text) {
        if value.get("kind").and_then(|k| k.as_str()) == Some("bigram") {
            return Ok(Box::new(BigramLm::from_json(&text)?));
        }
    }
    Ok(Box::new(TableSource::from_jsonl(&text)?))
}
