use std::collections::HashSet;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::Cohort;
use super::folds::{make_folds, FoldPlan};
use crate::error::{Error, Result};
use crate::model::{train, Modality, RiskModel, TrainConfig};
use crate::rng::{derive_seed, name_hash};
use crate::survstats::{concordance, td_auc_from};

pub(crate) const SEED_FOLDS: u64 = 11;
pub(crate) const SEED_CV_TRAIN: u64 = 12;
pub(crate) const SEED_FINAL_TRAIN: u64 = 13;
pub(crate) const SEED_EVAL_BAGS: u64 = 14;

pub const METRIC_C_INDEX: &str = "c_index";
pub const METRIC_AUC: &str = "auc";

/// Held-out results of one outer fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub modality: Modality,
    pub fold: usize,
    pub val_fold: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub test_events: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub val_c_index: f64,
    pub test_c_index: f64,
    pub test_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub modality: Modality,
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation across folds.
    pub std: f64,
    pub n_folds: usize,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub modality: Modality,
    pub plan: FoldPlan,
    pub folds: Vec<FoldMetrics>,
    pub models: Vec<RiskModel<f64>>,
}

impl CvOutcome {
    pub fn summary(&self) -> Vec<MetricSummary> {
        [METRIC_C_INDEX, METRIC_AUC]
            .iter()
            .map(|&metric| {
                let v: Vec<f64> = self
                    .folds
                    .iter()
                    .map(|f| if metric == METRIC_C_INDEX { f.test_c_index } else { f.test_auc })
                    .collect();
                let (mean, std) = mean_std(&v);
                MetricSummary {
                    modality: self.modality,
                    metric: metric.to_string(),
                    mean,
                    std,
                    n_folds: v.len(),
                }
            })
            .collect()
    }

    /// Fold whose model has the best held-out 5-year AUC (earliest on ties).
    pub fn best_fold(&self) -> usize {
        self.folds
            .iter()
            .fold((0, f64::NEG_INFINITY), |best, f| if f.test_auc > best.1 { (f.fold, f.test_auc) } else { best })
            .0
    }
}

pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub(crate) fn modality_code(m: Modality) -> u64 {
    name_hash(m.name())
}

pub(crate) fn train_config(config: &ExperimentConfig, modality: Modality, seed: u64) -> TrainConfig {
    TrainConfig {
        modality,
        seed,
        ..config.train.clone()
    }
}

pub fn fold_plan(cohort: &Cohort, config: &ExperimentConfig) -> Result<FoldPlan> {
    make_folds(
        &cohort.records,
        config.folds,
        config.followup_bins,
        derive_seed(config.seed, &[SEED_FOLDS]),
    )
}

fn require_events(cohort: &Cohort, idx: &[usize], fold: usize, what: &str) -> Result<()> {
    if idx.iter().any(|&i| cohort.records[i].outcome.event) {
        Ok(())
    } else {
        Err(Error::FoldDegenerate {
            fold,
            message: format!("{what} split has no events"),
        })
    }
}

fn disjoint(cohort: &Cohort, a: &[usize], b: &[usize]) -> bool {
    let ids: HashSet<&str> = a.iter().map(|&i| cohort.records[i].patient_id.as_str()).collect();
    b.iter().all(|&i| !ids.contains(cohort.records[i].patient_id.as_str()))
}

/// Nested k-fold CV: for outer fold f, test on f, early-stop on f+1 and
/// train on the rest. Folds run in parallel; each is seeded independently.
pub fn nested_cv(cohort: &Cohort, modality: Modality, config: &ExperimentConfig) -> Result<CvOutcome> {
    if !cohort.supports(modality) {
        return Err(Error::Precondition(format!("cohort {} lacks {modality} inputs", cohort.name)));
    }
    let plan = fold_plan(cohort, config)?;
    let results = (0..plan.k)
        .into_par_iter()
        .map(|f| run_fold(cohort, modality, config, &plan, f))
        .collect::<Result<Vec<_>>>()?;
    let (folds, models) = results.into_iter().unzip();
    let out = CvOutcome {
        modality,
        plan,
        folds,
        models,
    };
    for s in out.summary() {
        info!("{modality} {}: {:.4} +/- {:.4}", s.metric, s.mean, s.std);
    }
    Ok(out)
}

fn run_fold(
    cohort: &Cohort,
    modality: Modality,
    config: &ExperimentConfig,
    plan: &FoldPlan,
    f: usize,
) -> Result<(FoldMetrics, RiskModel<f64>)> {
    let split = plan.nested_split(f);
    require_events(cohort, &split.train, f, "training")?;
    require_events(cohort, &split.val, f, "validation")?;
    require_events(cohort, &split.test, f, "test")?;
    if !(disjoint(cohort, &split.train, &split.test)
        && disjoint(cohort, &split.val, &split.test)
        && disjoint(cohort, &split.train, &split.val))
    {
        return Err(Error::Contract(format!("fold {f}: patient ids overlap between splits")));
    }

    let stats = cohort.normalization(&split.train, modality)?;
    let train_set = cohort.samples(&split.train, stats.as_ref());
    let val_set = cohort.samples(&split.val, stats.as_ref());
    let seed = derive_seed(config.seed, &[SEED_CV_TRAIN, modality_code(modality), f as u64]);
    let tc = train_config(config, modality, seed);
    let (model, history) = train(&train_set, &val_set, stats, &tc)?;

    let eval_seed = derive_seed(config.seed, &[SEED_EVAL_BAGS]);
    let test_set = cohort.samples(&split.test, model.normalization());
    let inputs = test_set
        .iter()
        .map(|s| s.input(modality, tc.max_tiles, derive_seed(eval_seed, &[name_hash(s.id)])))
        .collect::<Result<Vec<_>>>()?;
    let scores = model.predict_all(&inputs)?;
    let times: Vec<f64> = test_set.iter().map(|s| s.time).collect();
    let events: Vec<bool> = test_set.iter().map(|s| s.event).collect();
    let degenerate = |e: Error| Error::FoldDegenerate {
        fold: f,
        message: e.to_string(),
    };
    let test_c_index = concordance(&times, &events, &scores)?
        .index()
        .ok_or_else(|| degenerate(Error::Estimation("no comparable pairs in test split".into())))?;
    let test_auc = td_auc_from(&times, &events, &scores, config.horizon_years).map_err(degenerate)?;
    Ok((
        FoldMetrics {
            modality,
            fold: f,
            val_fold: split.val_fold,
            n_train: split.train.len(),
            n_val: split.val.len(),
            n_test: split.test.len(),
            test_events: events.iter().filter(|e| **e).count(),
            epochs_run: history.epochs.len(),
            best_epoch: history.best_epoch,
            val_c_index: history.best_c_index,
            test_c_index,
            test_auc,
        },
        model,
    ))
}
