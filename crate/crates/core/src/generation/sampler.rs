//! Gumbel-Max sampling, rejection sampling and the autoregressive generation loop.

use std::cmp::Ordering;

use rand::distributions::Open01;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::distribution::{allowed_after, NextTokenDistribution};
use super::source::DistributionSource;
use crate::canonicity::is_canonical;
use crate::error::{Error, Result};
use crate::spec::TokenizerSpec;
use crate::vocab::{TokenId, TokenSequence};

/// Draw limit used by [`generate`] in rejection mode.
pub const DEFAULT_MAX_DRAWS: usize = 100_000;

/// What happened at one generation step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub token: TokenId,
    /// Canonicity checks performed before accepting `token`; at least 1.
    pub evaluations: usize,
    pub step_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Gumbel-Max over the unconstrained distribution.
    Standard,
    /// Gumbel-Max restricted to canonical extensions.
    Canonical,
    /// Independent draws from the unconstrained distribution until one is canonical.
    Rejection,
}

impl SamplingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Standard => "standard",
            Self::Canonical => "canonical",
            Self::Rejection => "rejection",
        }
    }
}

impl std::fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "canonical" => Ok(Self::Canonical),
            "rejection" => Ok(Self::Rejection),
            other => Err(Error::parse("mode", format!("unknown sampling mode {other:?}"))),
        }
    }
}

/// Seed for step `step` of a run, from a counter-based split of `run_seed`.
pub fn step_seed(run_seed: u64, step: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(step as u64);
    rng.next_u64()
}

/// `n` independent standard Gumbel draws.
pub fn gumbel_noise(step_seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(step_seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            -(-u.ln()).ln()
        })
        .collect()
}

/// Visits outcomes with positive probability in decreasing `ln p + noise` and returns
/// the first one `allowed` accepts, with the number of calls made.
///
/// Ties in the perturbed score go to the smaller id.
pub fn constrained_argmax<F>(probs: &[f64], noise: &[f64], mut allowed: F) -> Result<(TokenId, usize)>
where
    F: FnMut(TokenId) -> Result<bool>,
{
    if noise.len() != probs.len() {
        return Err(Error::Validation(format!(
            "{} noise values for {} outcomes",
            noise.len(),
            probs.len()
        )));
    }
    let mut order: Vec<(f64, TokenId)> = probs
        .iter()
        .zip(noise)
        .enumerate()
        .filter(|(_, (p, _))| **p > 0.0)
        .map(|(id, (p, u))| (p.ln() + u, id as TokenId))
        .collect();
    order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
    let mut evaluations = 0;
    for (_, id) in order {
        evaluations += 1;
        if allowed(id)? {
            return Ok((id, evaluations));
        }
    }
    Err(Error::DeadEnd { step: None })
}

/// One canonical sampling step by constrained Gumbel-Max.
pub fn gumbel_max_step(
    spec: &TokenizerSpec,
    seq: &[TokenId],
    d: &NextTokenDistribution,
    step_seed: u64,
) -> Result<(TokenId, SampleTrace)> {
    d.check_vocab(spec)?;
    let noise = gumbel_noise(step_seed, d.probs().len());
    let (token, evaluations) = constrained_argmax(d.probs(), &noise, |t| allowed_after(spec, seq, t))?;
    Ok((
        token,
        SampleTrace {
            token,
            evaluations,
            step_seed,
        },
    ))
}

/// One unconstrained Gumbel-Max step. No canonicity check is made; the trace
/// records a single evaluation.
pub fn standard_step(d: &NextTokenDistribution, step_seed: u64) -> Result<(TokenId, SampleTrace)> {
    let noise = gumbel_noise(step_seed, d.probs().len());
    let (token, _) = constrained_argmax(d.probs(), &noise, |_| Ok(true))?;
    Ok((
        token,
        SampleTrace {
            token,
            evaluations: 1,
            step_seed,
        },
    ))
}

/// One canonical sampling step by drawing from `d` until the extension is canonical.
pub fn rejection_step(
    spec: &TokenizerSpec,
    seq: &[TokenId],
    d: &NextTokenDistribution,
    step_seed: u64,
    max_draws: usize,
) -> Result<(TokenId, SampleTrace)> {
    d.check_vocab(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(step_seed);
    let cumulative: Vec<f64> = d
        .probs()
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().unwrap_or(&0.0);
    let last_positive = d.probs().iter().rposition(|&p| p > 0.0).unwrap_or(0);
    for draw in 1..=max_draws {
        let x = rng.gen::<f64>() * total;
        let token = cumulative.partition_point(|&c| c <= x).min(last_positive) as TokenId;
        if allowed_after(spec, seq, token)? {
            return Ok((
                token,
                SampleTrace {
                    token,
                    evaluations: draw,
                    step_seed,
                },
            ));
        }
    }
    Err(Error::DeadEnd { step: None })
}

/// Generated continuation of a prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub tokens: TokenSequence,
    pub traces: Vec<SampleTrace>,
    /// Whether the run stopped at end-of-sequence rather than at `max_len`.
    pub finished: bool,
}

/// Samples up to `max_len` tokens after `prompt`, stopping at end-of-sequence.
///
/// The source sees `prompt` followed by the output so far. In the constrained modes
/// the output itself is kept canonical, and the prompt must be canonical. Step `i`
/// uses [`step_seed`]`(seed, i)` in every mode, so standard and canonical runs with
/// the same seed agree until standard picks a non-canonical extension.
pub fn generate<S: DistributionSource + ?Sized>(
    spec: &TokenizerSpec,
    source: &S,
    mode: SamplingMode,
    prompt: &[TokenId],
    max_len: usize,
    seed: u64,
) -> Result<Generation> {
    if source.vocab_size() != spec.vocab_size() {
        return Err(Error::Validation(format!(
            "source covers {} tokens but the vocabulary has {}",
            source.vocab_size(),
            spec.vocab_size()
        )));
    }
    if mode != SamplingMode::Standard && !is_canonical(spec, prompt)? {
        return Err(Error::Validation(format!("prompt {prompt:?} is not canonical")));
    }
    let eos = spec.vocab_size() as TokenId;
    let mut context = prompt.to_vec();
    let mut tokens = Vec::new();
    let mut traces = Vec::new();
    for step in 0..max_len {
        let d = source.next_distribution(&context).map_err(|e| e.at_step(step))?;
        let s = step_seed(seed, step);
        let (token, trace) = match mode {
            SamplingMode::Standard => standard_step(&d, s),
            SamplingMode::Canonical => gumbel_max_step(spec, &tokens, &d, s),
            SamplingMode::Rejection => rejection_step(spec, &tokens, &d, s, DEFAULT_MAX_DRAWS),
        }
        .map_err(|e| e.at_step(step))?;
        traces.push(trace);
        if token == eos {
            return Ok(Generation {
                tokens,
                traces,
                finished: true,
            });
        }
        tokens.push(token);
        context.push(token);
    }
    Ok(Generation {
        tokens,
        traces,
        finished: false,
    })
}
