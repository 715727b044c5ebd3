use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::metrics::{
    multiplicity_probability, non_canonicity_rate, relative_price_variation, word_consistency, MultiplicityEstimate,
    NonCanonicity, PromptMultiplicity, Quartiles, StringVariation, WordConsistency,
};
use crate::error::{Error, Result};
use crate::records::GenerationRecord;
use crate::spec::TokenizerSpec;

/// Every metric computed over one set of records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplicityReport {
    pub records: usize,
    pub multiplicity: MultiplicityEstimate,
    pub strings: Vec<StringVariation>,
    pub rel_diff_summary: Option<Quartiles>,
    /// Present when a spec was supplied.
    pub non_canonicity: Option<NonCanonicity>,
    pub word_consistency: Option<WordConsistency>,
}

impl MultiplicityReport {
    /// The tokenizer-dependent metrics need `spec`; without it they are left out.
    pub fn build(records: &[GenerationRecord], spec: Option<&TokenizerSpec>) -> Self {
        let strings = relative_price_variation(records);
        let rel_diffs: Vec<f64> = strings.iter().map(|s| s.rel_diff).collect();
        Self {
            records: records.len(),
            multiplicity: multiplicity_probability(records),
            rel_diff_summary: Quartiles::of(&rel_diffs),
            strings,
            non_canonicity: spec.map(|s| non_canonicity_rate(records, s)),
            word_consistency: spec.map(|s| word_consistency(records, s)),
        }
    }

    /// Aggregate values as `(metric, value)` rows; missing values are `None`.
    pub fn summary_rows(&self) -> Vec<(&'static str, Option<f64>)> {
        let m = &self.multiplicity;
        let q = self.rel_diff_summary;
        let nc = self.non_canonicity.as_ref();
        let wc = self.word_consistency.as_ref();
        let count = |n: usize| Some(n as f64);
        vec![
            ("records", count(self.records)),
            ("prompts", count(m.per_prompt.len())),
            ("prompts_counted", count(m.prompts_counted)),
            ("prompts_with_multiplicity", count(m.prompts_with_multiplicity)),
            ("multiplicity_prob_mean", m.mean),
            ("multiplicity_prob_ci_low", m.ci95.map(|c| c.0)),
            ("multiplicity_prob_ci_high", m.ci95.map(|c| c.1)),
            ("strings_with_variation", count(self.strings.len())),
            ("rel_diff_min", q.map(|q| q.min)),
            ("rel_diff_q1", q.map(|q| q.q1)),
            ("rel_diff_median", q.map(|q| q.median)),
            ("rel_diff_q3", q.map(|q| q.q3)),
            ("rel_diff_max", q.map(|q| q.max)),
            ("records_checked", nc.map(|n| n.checked as f64)),
            ("non_canonical_records", nc.map(|n| n.non_canonical as f64)),
            ("non_canonicity_rate", nc.and_then(|n| n.rate)),
            ("words_followed", wc.map(|w| w.total() as f64)),
            ("all_same_noncanonical", wc.map(|w| w.all_same_noncanonical as f64)),
            ("all_canonical_after", wc.map(|w| w.all_canonical_after as f64)),
            ("mixed", wc.map(|w| w.mixed as f64)),
            (
                "excluded_records",
                nc.map(|n| n.excluded.len() as f64),
            ),
        ]
    }

    /// JSON mirror of the CSV tables, with the same field names.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary {
            metric: &'static str,
            value: Option<f64>,
        }
        #[derive(Serialize)]
        struct JsonReport<'a> {
            prompts: &'a [PromptMultiplicity],
            strings: &'a [StringVariation],
            summary: Vec<Summary>,
            excluded: Vec<&'a super::metrics::ExcludedRecord>,
        }
        let mut excluded: Vec<_> = self.non_canonicity.iter().flat_map(|n| &n.excluded).collect();
        excluded.extend(self.word_consistency.iter().flat_map(|w| &w.excluded));
        excluded.sort_by_key(|e| e.index);
        excluded.dedup_by_key(|e| e.index);
        let report = JsonReport {
            prompts: &self.multiplicity.per_prompt,
            strings: &self.strings,
            summary: self
                .summary_rows()
                .into_iter()
                .map(|(metric, value)| Summary { metric, value })
                .collect(),
            excluded,
        };
        let mut out = serde_json::to_string_pretty(&report)?;
        out.push('\n');
        Ok(out)
    }

    pub fn prompts_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["prompt_id", "same_string_pairs", "differing_length_pairs", "multiplicity_prob"])?;
        for p in &self.multiplicity.per_prompt {
            w.write_record([
                p.prompt_id.clone(),
                p.same_string_pairs.to_string(),
                p.differing_length_pairs.to_string(),
                fmt_opt(p.multiplicity_prob),
            ])?;
        }
        finish(w)
    }

    pub fn strings_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["string_hash", "min_len", "max_len", "rel_diff"])?;
        for s in &self.strings {
            w.write_record([
                s.string_hash.clone(),
                s.min_len.to_string(),
                s.max_len.to_string(),
                s.rel_diff.to_string(),
            ])?;
        }
        finish(w)
    }

    pub fn summary_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "value"])?;
        for (metric, value) in self.summary_rows() {
            w.write_record([metric.to_string(), fmt_opt(value)])?;
        }
        finish(w)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Validation(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::parse("format", format!("unknown report format {other:?}"))),
        }
    }
}

/// Files written for a CSV report at `path`: the per-prompt table at `path` itself,
/// then the per-string and summary tables next to it.
pub fn csv_report_paths(path: &Path) -> [PathBuf; 3] {
    let sibling = |suffix: &str| {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        path.with_file_name(format!("{stem}.{suffix}.csv"))
    };
    [path.to_path_buf(), sibling("strings"), sibling("summary")]
}

/// Writes the report; see [`csv_report_paths`] for the CSV layout. Returns the
/// files written.
pub fn emit_report(report: &MultiplicityReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    match format {
        ReportFormat::Json => {
            fs::write(path, report.to_json()?)?;
            Ok(vec![path.to_path_buf()])
        }
        ReportFormat::Csv => {
            let paths = csv_report_paths(path);
            let bodies = [report.prompts_csv()?, report.strings_csv()?, report.summary_csv()?];
            for (p, body) in paths.iter().zip(bodies) {
                fs::write(p, body)?;
            }
            Ok(paths.to_vec())
        }
    }
}
