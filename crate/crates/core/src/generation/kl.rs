//! Sequence-level distributions and KL divergence between explicit tables.

use std::collections::BTreeMap;

use super::distribution::{allowed_after, canonicalize_distribution};
use super::source::DistributionSource;
use crate::error::{Error, Result};
use crate::spec::TokenizerSpec;
use crate::vocab::{TokenId, TokenSequence};

/// `sum p(s) ln(p(s) / q(s))` with `0 ln 0 = 0`. Fails when `p` has mass where `q`
/// has none.
pub fn kl_divergence<K: Ord + std::fmt::Debug>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> Result<f64> {
    let mut total = 0.0;
    for (key, &ps) in p {
        if ps <= 0.0 {
            continue;
        }
        let qs = q.get(key).copied().unwrap_or(0.0);
        if qs <= 0.0 {
            return Err(Error::Domain(format!("{key:?} has mass {ps} under p but none under q")));
        }
        total += ps * (ps / qs).ln();
    }
    Ok(total)
}

/// Distribution over complete outputs of the autoregressive process, with sequences
/// reaching `max_len` tokens ending there. With `canonical`, each step uses the
/// canonicalized next-token distribution.
///
/// Only outcomes with positive probability are listed.
pub fn sequence_distribution<S: DistributionSource + ?Sized>(
    spec: &TokenizerSpec,
    source: &S,
    max_len: usize,
    canonical: bool,
) -> Result<BTreeMap<TokenSequence, f64>> {
    let eos = spec.vocab_size() as TokenId;
    let mut out = BTreeMap::new();
    let mut stack: Vec<(TokenSequence, f64)> = vec![(Vec::new(), 1.0)];
    while let Some((seq, mass)) = stack.pop() {
        if seq.len() == max_len {
            *out.entry(seq).or_insert(0.0) += mass;
            continue;
        }
        let mut d = source.next_distribution(&seq)?;
        if canonical {
            d = canonicalize_distribution(spec, &seq, &d)?;
        }
        for (id, &p) in d.probs().iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let id = id as TokenId;
            if id == eos {
                *out.entry(seq.clone()).or_insert(0.0) += mass * p;
            } else {
                let mut next = seq.clone();
                next.push(id);
                stack.push((next, mass * p));
            }
        }
    }
    Ok(out)
}

/// Whether some prefix reachable under `d` with positive `p`-mass below it has a
/// non-canonical extension that `d` can emit, which is the situation where
/// canonicalization strictly helps.
pub fn canonicalization_matters<S: DistributionSource + ?Sized>(
    spec: &TokenizerSpec,
    source: &S,
    p: &BTreeMap<TokenSequence, f64>,
    max_len: usize,
) -> Result<bool> {
    for (seq, &mass) in p {
        if mass <= 0.0 {
            continue;
        }
        // The final forced stop at `max_len` is not a sampling step.
        let steps = if seq.len() < max_len { seq.len() + 1 } else { seq.len() };
        for i in 0..steps {
            let prefix = &seq[..i];
            let d = source.next_distribution(prefix)?;
            for (id, &q) in d.probs().iter().enumerate() {
                if q > 0.0 && !allowed_after(spec, prefix, id as TokenId)? {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

/// Pushes a sequence distribution forward to decoded strings.
pub fn decode_pushforward(spec: &TokenizerSpec, table: &BTreeMap<TokenSequence, f64>) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (seq, &mass) in table {
        *out.entry(spec.decode(seq)?).or_insert(0.0) += mass;
    }
    Ok(out)
}
