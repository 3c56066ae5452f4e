//! The evaluation protocol: training-set construction, stratified
//! cross-validation, attack-size sweeps averaged over seeded runs, and the
//! before/after-filter impact reports.

pub mod config;
pub mod cv;
pub mod experiment;
pub mod report;

pub use config::{CorpusSource, EmbeddingSource, ExperimentConfig, FallbackEmbeddings};
pub use cv::{
    cross_validate, cross_validate_with, fscore, overall_fscore, stratified_folds, ClassMetrics, ClassificationReport,
    Confusion,
};
pub use experiment::{
    build_training_set, measure_impact, run_experiment, run_experiment_with, ExperimentOptions, FilterFactory,
    FittedFilter,
};
pub use report::{emit_report, ExperimentReport, ImpactCell, ImpactSummary, Stat, TableFormat};
