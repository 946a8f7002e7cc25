//! Feature schema, synthetic cohort, dataset I/O and data-quality checks.

mod cohort;
mod dataset;
mod quality;
mod schema;

pub use cohort::{generate_cohort, latent_label, latent_score, CohortConfig, FAILURE_READY_SHARE, SPLIT_SEED_MIX};
pub use dataset::{Dataset, Instance, Split};
pub use quality::{
    check_accuracy, check_balance, check_completeness, check_conformance, check_relevance,
    default_accuracy_rules, quality_report, Comparison, Criterion, CrossFieldRule, Finding,
    Measurement, QualityConfig, QualityFindings, QualityReport, Severity,
};
pub use schema::{
    default_weaning_schema, CohortFlags, DataSchema, FeatureKind, FeatureSpec, IdColumns,
    PlausibleRange, LABEL_SEMANTICS,
};
