//! Multiplicity and price metrics over generation records.

mod metrics;
mod report;

pub use metrics::{
    multiplicity_probability, non_canonicity_rate, record_word_classes, relative_price_variation, string_hash,
    word_consistency, ConsistencyClass, ExcludedRecord, MultiplicityEstimate, NonCanonicity, PromptMultiplicity,
    Quartiles, StringVariation, WordConsistency, MAX_FOLLOWING_OCCURRENCES,
};
pub use report::{csv_report_paths, emit_report, MultiplicityReport, ReportFormat};
