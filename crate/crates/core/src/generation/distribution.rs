use crate::canonicity::extension_is_canonical;
use crate::error::{Error, Result};
use crate::spec::TokenizerSpec;
use crate::vocab::{TokenId, TokenSequence};

/// Allowed deviation of a distribution's total mass from 1.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Probabilities over the vocabulary plus a trailing end-of-sequence entry, for the
/// next token after `context`.
#[derive(Debug, Clone, PartialEq)]
pub struct NextTokenDistribution {
    probs: Vec<f64>,
    context: TokenSequence,
}

impl NextTokenDistribution {
    /// `probs` holds one entry per token id followed by the end-of-sequence entry.
    pub fn new(probs: Vec<f64>, context: TokenSequence) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Validation(
                "a distribution needs at least one token and the end-of-sequence entry".into(),
            ));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::Validation(format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Validation(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs, context })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, id: TokenId) -> f64 {
        self.probs.get(id as usize).copied().unwrap_or(0.0)
    }

    pub fn context(&self) -> &[TokenId] {
        &self.context
    }

    /// Id of the end-of-sequence outcome, equal to the vocabulary size.
    pub fn eos(&self) -> TokenId {
        (self.probs.len() - 1) as TokenId
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.len() - 1
    }

    pub(crate) fn check_vocab(&self, spec: &TokenizerSpec) -> Result<()> {
        if self.vocab_size() != spec.vocab_size() {
            return Err(Error::Validation(format!(
                "distribution covers {} tokens but the vocabulary has {}",
                self.vocab_size(),
                spec.vocab_size()
            )));
        }
        Ok(())
    }
}

/// Whether emitting `token` after the canonical `seq` keeps the output canonical.
/// Ending the sequence always does.
pub fn allowed_after(spec: &TokenizerSpec, seq: &[TokenId], token: TokenId) -> Result<bool> {
    if token as usize == spec.vocab_size() {
        return Ok(true);
    }
    extension_is_canonical(spec, seq, token)
}

/// Zeroes the mass of tokens that would make `seq` non-canonical and rescales the
/// rest proportionally.
pub fn canonicalize_distribution(
    spec: &TokenizerSpec,
    seq: &[TokenId],
    d: &NextTokenDistribution,
) -> Result<NextTokenDistribution> {
    d.check_vocab(spec)?;
    let mut probs = vec![0.0; d.probs.len()];
    let mut z = 0.0;
    for (id, &p) in d.probs.iter().enumerate() {
        if p > 0.0 && allowed_after(spec, seq, id as TokenId)? {
            probs[id] = p;
            z += p;
        }
    }
    if z <= 0.0 {
        return Err(Error::DeadEnd { step: None });
    }
    for p in &mut probs {
        *p /= z;
    }
    NextTokenDistribution::new(probs, d.context.clone())
}

/// Total mass `d` puts on canonical continuations of `seq` (including ending).
pub fn canonical_mass(spec: &TokenizerSpec, seq: &[TokenId], d: &NextTokenDistribution) -> Result<f64> {
    let mut z = 0.0;
    for (id, &p) in d.probs.iter().enumerate() {
        if p > 0.0 && allowed_after(spec, seq, id as TokenId)? {
            z += p;
        }
    }
    Ok(z)
}
