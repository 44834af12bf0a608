//! Stratified cross-validation, confusion matrices and metrics.

mod cv;
mod folds;
mod metrics;
pub mod report;

pub use cv::{
    audit_leakage, cross_validate, cross_validate_ensemble, fold_seed, BaseModelReport, CvOptions, CvReport, EnsembleCvReport, FoldOutcome, FoldVotes, Strategy,
    ThresholdReport,
};
pub use folds::{make_grouped_folds, make_stratified_folds, FoldPlan};
pub use metrics::{f1_score, mean_std, metrics_from_confusion, summarize, ConfusionMatrix, Count, MetricSet, MetricSummary, Scope, METRIC_NAMES};

use crate::models::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("need at least 2 folds, got {0}")]
    InvalidFolds(usize),
    #[error("class {class} has {count} items, fewer than the {k} folds")]
    Stratification { class: String, count: usize, k: usize },
    #[error("source {0} holds patches of more than one class")]
    MixedGroup(String),
    #[error("no patches to evaluate")]
    Empty,
    #[error("no patches of class {0}")]
    MissingClass(String),
    #[error("{source_id}: patch is {bands}x{frames}, which does not match the feature configuration")]
    PatchShape { source_id: String, bands: usize, frames: usize },
    #[error("{0}")]
    Strategy(String),
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: ModelError,
    },
    #[error("fold {fold}: training set of base model {model} contains test item {index}")]
    Leakage { fold: usize, model: String, index: usize },
}
