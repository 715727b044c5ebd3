use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::canonicity::is_canonical;
use crate::error::{Error, Result};
use crate::pretok::segment_spans;
use crate::records::GenerationRecord;
use crate::spec::TokenizerSpec;
use crate::vocab::TokenId;

/// Two-sided 95% normal quantile.
const Z_95: f64 = 1.959_963_984_540_054;

/// Subsequent occurrences of a word examined after its first one.
pub const MAX_FOLLOWING_OCCURRENCES: usize = 10;

/// First 16 hex digits of the SHA-256 of `text`.
pub fn string_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptMultiplicity {
    pub prompt_id: String,
    pub same_string_pairs: u64,
    pub differing_length_pairs: u64,
    /// `None` when the prompt has no pair of identical outputs.
    pub multiplicity_prob: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplicityEstimate {
    /// Every prompt, sorted by id.
    pub per_prompt: Vec<PromptMultiplicity>,
    /// Unweighted mean over prompts with at least one same-string pair.
    pub mean: Option<f64>,
    /// Normal-approximation 95% interval over those prompts; needs two of them.
    pub ci95: Option<(f64, f64)>,
    pub prompts_counted: usize,
    pub prompts_with_multiplicity: usize,
}

/// Among pairs of records sharing a prompt and an output string, the fraction whose
/// token counts differ, per prompt and averaged over prompts.
pub fn multiplicity_probability(records: &[GenerationRecord]) -> MultiplicityEstimate {
    let mut by_prompt: BTreeMap<&str, HashMap<&str, HashMap<usize, u64>>> = BTreeMap::new();
    for r in records {
        *by_prompt
            .entry(&r.prompt_id)
            .or_default()
            .entry(&r.text)
            .or_default()
            .entry(r.token_count)
            .or_default() += 1;
    }
    let pairs = |n: u64| n * n.saturating_sub(1) / 2;
    let per_prompt: Vec<PromptMultiplicity> = by_prompt
        .into_iter()
        .map(|(prompt_id, strings)| {
            let mut same = 0;
            let mut equal_length = 0;
            for counts in strings.values() {
                same += pairs(counts.values().sum());
                equal_length += counts.values().map(|&n| pairs(n)).sum::<u64>();
            }
            let differing = same - equal_length;
            PromptMultiplicity {
                prompt_id: prompt_id.to_owned(),
                same_string_pairs: same,
                differing_length_pairs: differing,
                multiplicity_prob: (same > 0).then(|| differing as f64 / same as f64),
            }
        })
        .collect();
    let values: Vec<f64> = per_prompt.iter().filter_map(|p| p.multiplicity_prob).collect();
    let (mean, ci95) = mean_with_ci(&values);
    MultiplicityEstimate {
        prompts_counted: values.len(),
        prompts_with_multiplicity: per_prompt.iter().filter(|p| p.differing_length_pairs > 0).count(),
        per_prompt,
        mean,
        ci95,
    }
}

fn mean_with_ci(values: &[f64]) -> (Option<f64>, Option<(f64, f64)>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half = Z_95 * (var / n as f64).sqrt();
    (Some(mean), Some((mean - half, mean + half)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StringVariation {
    pub string_hash: String,
    pub min_len: usize,
    pub max_len: usize,
    pub rel_diff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    /// Linear interpolation between order statistics. `None` for no values.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let pos = q * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Self {
            min: v[0],
            q1: at(0.25),
            median: at(0.5),
            q3: at(0.75),
            max: v[v.len() - 1],
        })
    }
}

/// `(max - min) / min` token count for every output string seen with more than one
/// length, sorted by string hash.
pub fn relative_price_variation(records: &[GenerationRecord]) -> Vec<StringVariation> {
    let mut lengths: HashMap<&str, (usize, usize)> = HashMap::new();
    for r in records {
        let e = lengths.entry(&r.text).or_insert((r.token_count, r.token_count));
        e.0 = e.0.min(r.token_count);
        e.1 = e.1.max(r.token_count);
    }
    let mut out: Vec<StringVariation> = lengths
        .into_iter()
        .filter(|&(_, (lo, hi))| lo > 0 && hi > lo)
        .map(|(text, (lo, hi))| StringVariation {
            string_hash: string_hash(text),
            min_len: lo,
            max_len: hi,
            rel_diff: (hi - lo) as f64 / lo as f64,
        })
        .collect();
    out.sort_by(|a, b| a.string_hash.cmp(&b.string_hash).then(a.min_len.cmp(&b.min_len)));
    out
}

/// A record left out of a metric, identified by its position in the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExcludedRecord {
    pub index: usize,
    pub prompt_id: String,
    pub reason: String,
}

impl ExcludedRecord {
    fn new(index: usize, r: &GenerationRecord, e: &Error) -> Self {
        Self {
            index,
            prompt_id: r.prompt_id.clone(),
            reason: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonCanonicity {
    pub checked: usize,
    pub non_canonical: usize,
    /// `None` when no record could be checked.
    pub rate: Option<f64>,
    pub excluded: Vec<ExcludedRecord>,
}

/// Fraction of records with disclosed tokens whose tokens are not canonical.
/// Records without tokens are skipped; records whose tokens do not decode to their
/// text are excluded and listed.
pub fn non_canonicity_rate(records: &[GenerationRecord], spec: &TokenizerSpec) -> NonCanonicity {
    let mut checked = 0;
    let mut non_canonical = 0;
    let mut excluded = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let Some(tokens) = &r.tokens else { continue };
        match r.validate(spec).and_then(|_| is_canonical(spec, tokens)) {
            Ok(canonical) => {
                checked += 1;
                non_canonical += usize::from(!canonical);
            }
            Err(e) => excluded.push(ExcludedRecord::new(i, r, &e)),
        }
    }
    NonCanonicity {
        checked,
        non_canonical,
        rate: (checked > 0).then(|| non_canonical as f64 / checked as f64),
        excluded,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyClass {
    /// Every later occurrence repeats the first occurrence's non-canonical split.
    AllSameNoncanonical,
    /// Every later occurrence is canonical.
    AllCanonicalAfter,
    /// Anything else.
    Mixed,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WordConsistency {
    pub all_same_noncanonical: usize,
    pub all_canonical_after: usize,
    pub mixed: usize,
    pub excluded: Vec<ExcludedRecord>,
}

impl WordConsistency {
    pub fn total(&self) -> usize {
        self.all_same_noncanonical + self.all_canonical_after + self.mixed
    }

    /// Fractions in the order same / canonical / mixed, or `None` with no words.
    pub fn fractions(&self) -> Option<[f64; 3]> {
        let n = self.total();
        (n > 0).then(|| {
            [self.all_same_noncanonical, self.all_canonical_after, self.mixed].map(|c| c as f64 / n as f64)
        })
    }
}

/// How a single occurrence of a word was tokenized.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Occurrence {
    canonical: bool,
    /// Token boundaries strictly inside the word, relative to its first character.
    splits: Vec<usize>,
}

/// Within each record, follows every word whose first occurrence is tokenized
/// non-canonically and classifies its next occurrences (up to
/// [`MAX_FOLLOWING_OCCURRENCES`]). Words are pretokenizer segments without their
/// leading space; occurrences whose segment does not start and end on token
/// boundaries are skipped.
pub fn word_consistency(records: &[GenerationRecord], spec: &TokenizerSpec) -> WordConsistency {
    let mut out = WordConsistency::default();
    for (i, r) in records.iter().enumerate() {
        let Some(tokens) = &r.tokens else { continue };
        match record_word_classes(spec, &r.text, tokens) {
            Ok(classes) => {
                for c in classes {
                    match c {
                        ConsistencyClass::AllSameNoncanonical => out.all_same_noncanonical += 1,
                        ConsistencyClass::AllCanonicalAfter => out.all_canonical_after += 1,
                        ConsistencyClass::Mixed => out.mixed += 1,
                    }
                }
            }
            Err(e) => out.excluded.push(ExcludedRecord::new(i, r, &e)),
        }
    }
    out
}

/// Classes of the followed words of one record, in order of first occurrence.
pub fn record_word_classes(spec: &TokenizerSpec, text: &str, tokens: &[TokenId]) -> Result<Vec<ConsistencyClass>> {
    let (decoded, offsets) = spec.decode_with_offsets(tokens)?;
    if decoded != text {
        return Err(Error::Validation(format!("tokens decode to {decoded:?}, not {text:?}")));
    }
    let chars: Vec<char> = text.chars().collect();
    let token_at_start: HashMap<usize, usize> = offsets.iter().enumerate().map(|(i, o)| (o.0, i)).collect();
    let token_at_end: HashMap<usize, usize> = offsets.iter().enumerate().map(|(i, o)| (o.1, i)).collect();

    let mut order: Vec<String> = Vec::new();
    let mut seen: HashMap<String, Vec<Occurrence>> = HashMap::new();
    for (start, end) in segment_spans(text) {
        let (Some(&first), Some(&last)) = (token_at_start.get(&start), token_at_end.get(&end)) else {
            continue;
        };
        let segment: String = chars[start..end].iter().collect();
        let word_start = start + usize::from(chars[start] == ' ' && end - start > 1);
        let word: String = chars[word_start..end].iter().collect();
        if word.trim().is_empty() {
            continue;
        }
        let slice = &tokens[first..=last];
        let canonical = spec.encode(&segment)? == slice;
        let splits = offsets[first..=last]
            .iter()
            .map(|o| o.0)
            .filter(|&s| s > word_start)
            .map(|s| s - word_start)
            .collect();
        let entry = seen.entry(word.clone()).or_insert_with(|| {
            order.push(word);
            Vec::new()
        });
        if entry.len() <= MAX_FOLLOWING_OCCURRENCES {
            entry.push(Occurrence { canonical, splits });
        }
    }

    let mut classes = Vec::new();
    for word in order {
        let occurrences = &seen[&word];
        let (first, rest) = occurrences.split_first().expect("words are recorded with an occurrence");
        if first.canonical || rest.is_empty() {
            continue;
        }
        let class = if rest.iter().all(|o| o == first) {
            ConsistencyClass::AllSameNoncanonical
        } else if rest.iter().all(|o| o.canonical) {
            ConsistencyClass::AllCanonicalAfter
        } else {
            ConsistencyClass::Mixed
        };
        classes.push(class);
    }
    Ok(classes)
}
