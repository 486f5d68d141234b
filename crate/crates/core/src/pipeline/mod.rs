//! Experiment orchestration: configuration, stratified folds, nested
//! cross-validation, fold-ensemble external validation, CAPRA-S comparison
//! and reports.

mod capra;
mod config;
mod cv;
mod data;
mod external;
mod folds;
mod report;

pub use capra::{capra_lrt, compare_with_capra, CapraComparison, NestedCoxTest};
pub use config::{CohortSource, ExperimentConfig};
pub use cv::{fold_plan, nested_cv, CvOutcome, FoldMetrics, MetricSummary, METRIC_AUC, METRIC_C_INDEX};
pub use data::{Cohort, CohortRole};
pub use external::{
    ensemble_scores, evaluate_all, evaluate_external, final_train_and_validate, stratify, train_final_models,
    ExternalEvaluation, FinalModels, FinalRun, KmSeries, QuartileRow, RocRow, StratificationTable,
};
pub use folds::{make_folds, FoldPlan, NestedSplit};
pub use report::{
    cv_folds_csv, km_csv, render_stratification, roc_csv, violin_csv, FileDigest, OutputSet, ReportHeader, RunManifest, RunReport,
    run_manifest_name, SelectedModel, SkippedEvaluation, TOOL_NAME, TOOL_VERSION,
};
