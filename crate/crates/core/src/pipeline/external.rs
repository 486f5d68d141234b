use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::cv::{fold_plan, modality_code, train_config, SEED_EVAL_BAGS, SEED_FINAL_TRAIN};
use super::data::{Cohort, CohortRole};
use crate::error::{Error, Result};
use crate::model::{train, History, Modality, RiskModel};
use crate::rng::{derive_seed, name_hash};
use crate::survstats::{
    bootstrap, c_index, km_estimate, logrank_test, quartile_stratify, time_dependent_auc, time_dependent_roc,
    BootstrapConfig, MetricReport, Quartile, SurvivalDataset,
};

const SEED_BOOTSTRAP: u64 = 21;

/// The fold-ensemble of one modality: member `f` was early-stopped on fold `f`
/// and trained on the remaining folds.
#[derive(Debug, Clone)]
pub struct FinalModels {
    pub modality: Modality,
    pub models: Vec<RiskModel<f64>>,
    pub histories: Vec<History>,
}

pub fn train_final_models(dev: &Cohort, modality: Modality, config: &ExperimentConfig) -> Result<FinalModels> {
    if dev.role != CohortRole::Development {
        return Err(Error::Contract(format!("cohort {} is not a development cohort", dev.name)));
    }
    if !dev.supports(modality) {
        return Err(Error::Precondition(format!("cohort {} lacks {modality} inputs", dev.name)));
    }
    let plan = fold_plan(dev, config)?;
    let trained = (0..plan.k)
        .into_par_iter()
        .map(|f| {
            let (train_idx, val_idx) = plan.holdout_split(f);
            let stats = dev.normalization(&train_idx, modality)?;
            let train_set = dev.samples(&train_idx, stats.as_ref());
            let val_set = dev.samples(&val_idx, stats.as_ref());
            let seed = derive_seed(config.seed, &[SEED_FINAL_TRAIN, modality_code(modality), f as u64]);
            train(&train_set, &val_set, stats, &train_config(config, modality, seed)).map_err(|e| match e {
                Error::Precondition(m) => Error::FoldDegenerate { fold: f, message: m },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (models, histories) = trained.into_iter().unzip();
    Ok(FinalModels {
        modality,
        models,
        histories,
    })
}

/// Mean of member scores per patient, summed in sorted order.
pub(crate) fn mean_sorted(per_model: &[Vec<f64>]) -> Vec<f64> {
    let n = per_model.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            let mut v: Vec<f64> = per_model.iter().map(|p| p[i]).collect();
            v.sort_by(f64::total_cmp);
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect()
}

/// Per-member and ensemble scores on a cohort. Each member standardizes the
/// clinical inputs with its own training-split statistics.
pub fn ensemble_scores(models: &[RiskModel<f64>], cohort: &Cohort, config: &ExperimentConfig) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let first = models
        .first()
        .ok_or_else(|| Error::Precondition("ensemble needs at least one model".into()))?;
    if models.iter().any(|m| m.modality() != first.modality()) {
        return Err(Error::Contract("ensemble members have different modalities".into()));
    }
    let eval_seed = derive_seed(config.seed, &[SEED_EVAL_BAGS]);
    let per_model = models
        .iter()
        .map(|m| {
            let inputs = cohort.inputs(m.modality(), m.normalization(), config.train.max_tiles, eval_seed)?;
            m.predict_all(&inputs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((mean_sorted(&per_model), per_model))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileRow {
    pub quartile: Quartile,
    pub n: usize,
    pub events: usize,
    /// Inclusive upper score bound (none for Q4).
    pub upper_cut: Option<f64>,
    pub survival_at_horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmSeries {
    pub quartile: Quartile,
    /// Step-function vertices `(time, survival)` from `(0, 1)`.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratificationTable {
    pub rows: Vec<QuartileRow>,
    pub degenerate: bool,
    pub logrank_chi_square: f64,
    pub logrank_df: usize,
    pub logrank_p: f64,
    pub q1_vs_q4_chi_square: f64,
    pub q1_vs_q4_p: f64,
    pub km: Vec<KmSeries>,
}

/// Risk quartiles with Kaplan-Meier curves, a K-group log-rank test over the
/// non-empty quartiles and a Q1-vs-Q4 log-rank test.
pub fn stratify(times: &[f64], events: &[bool], scores: &[f64], horizon: f64) -> Result<StratificationTable> {
    let strat = quartile_stratify(scores)?;
    let group = |q: Quartile| -> Result<SurvivalDataset<f64>> {
        let m = strat.members(q);
        SurvivalDataset::new(m.iter().map(|&i| times[i]).collect(), m.iter().map(|&i| events[i]).collect())
    };
    let mut rows = Vec::with_capacity(4);
    let mut km = Vec::with_capacity(4);
    let mut groups = Vec::new();
    for q in Quartile::ALL {
        let members = strat.members(q);
        let n_events = members.iter().filter(|&&i| events[i]).count();
        let (s_h, points) = if members.is_empty() || n_events == 0 {
            (1.0, vec![(0.0, 1.0)])
        } else {
            let curve = km_estimate(&group(q)?)?;
            (curve.survival_at(horizon), curve.step_coordinates())
        };
        if !members.is_empty() {
            groups.push(group(q)?);
        }
        rows.push(QuartileRow {
            quartile: q,
            n: members.len(),
            events: n_events,
            upper_cut: (q != Quartile::Q4).then(|| strat.cuts[q.index()]),
            survival_at_horizon: s_h,
        });
        km.push(KmSeries { quartile: q, points });
    }
    let overall = logrank_test(&groups)?;
    let extremes = if strat.degenerate {
        None
    } else {
        Some(logrank_test(&[group(Quartile::Q1)?, group(Quartile::Q4)?])?)
    };
    Ok(StratificationTable {
        rows,
        degenerate: strat.degenerate,
        logrank_chi_square: overall.chi_square,
        logrank_df: overall.df,
        logrank_p: overall.p_value,
        q1_vs_q4_chi_square: extremes.as_ref().map_or(0.0, |l| l.chi_square),
        q1_vs_q4_p: extremes.as_ref().map_or(1.0, |l| l.p_value),
        km,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocRow {
    /// `None` for the all-negative starting point.
    pub threshold: Option<f64>,
    pub false_positive_rate: f64,
    pub true_positive_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalEvaluation {
    pub cohort: String,
    pub modality: Modality,
    pub n_patients: usize,
    pub n_events: usize,
    pub c_index: MetricReport,
    pub auc: MetricReport,
    pub single_model_auc: Vec<f64>,
    pub single_model_auc_mean: f64,
    pub stratification: StratificationTable,
    pub roc: Vec<RocRow>,
    /// Bootstrap AUC replicates of the ensemble score, in resample order.
    pub auc_bootstrap: Vec<f64>,
}

fn bootstrap_config(config: &ExperimentConfig, cohort: &str, modality: Modality, metric: &str) -> BootstrapConfig {
    BootstrapConfig {
        n_resamples: config.n_bootstrap,
        level: config.ci_level,
        seed: derive_seed(
            config.seed,
            &[SEED_BOOTSTRAP, name_hash(cohort), modality_code(modality), name_hash(metric)],
        ),
    }
}

/// Ensemble evaluation on one external cohort: C-index and horizon AUC with
/// bootstrap CIs, member AUCs, ROC points and quartile stratification.
pub fn evaluate_external(fm: &FinalModels, cohort: &Cohort, config: &ExperimentConfig) -> Result<ExternalEvaluation> {
    if cohort.role != CohortRole::External {
        return Err(Error::Contract(format!(
            "cohort {} is not tagged external; refusing to report it as external validation",
            cohort.name
        )));
    }
    let (scores, per_model) = ensemble_scores(&fm.models, cohort, config)?;
    let times = cohort.times();
    let events = cohort.events();
    let h = config.horizon_years;
    let ds = SurvivalDataset::new(times.clone(), events.clone())?.with_scores(scores.clone())?;
    let c = bootstrap(
        "c_index",
        &ds,
        c_index,
        bootstrap_config(config, &cohort.name, fm.modality, "c_index"),
        None,
    )?;
    let auc = bootstrap(
        "auc",
        &ds,
        |d: &SurvivalDataset<f64>| time_dependent_auc(d, h),
        bootstrap_config(config, &cohort.name, fm.modality, "auc"),
        Some(h),
    )?;
    let single_model_auc = per_model
        .iter()
        .map(|s| crate::survstats::td_auc_from(&times, &events, s, h))
        .collect::<Result<Vec<_>>>()?;
    let single_model_auc_mean = single_model_auc.iter().sum::<f64>() / single_model_auc.len() as f64;
    let roc = time_dependent_roc(&ds, h)?
        .into_iter()
        .map(|p| RocRow {
            threshold: p.threshold.is_finite().then_some(p.threshold),
            false_positive_rate: p.false_positive_rate,
            true_positive_rate: p.true_positive_rate,
        })
        .collect();
    let stratification = stratify(&times, &events, &scores, h)?;
    info!(
        "{} / {}: C-index {:.3}, AUC({h}y) {:.3} [{:.3}, {:.3}]",
        cohort.name, fm.modality, c.report.estimate, auc.report.estimate, auc.report.ci_low, auc.report.ci_high
    );
    Ok(ExternalEvaluation {
        cohort: cohort.name.clone(),
        modality: fm.modality,
        n_patients: cohort.len(),
        n_events: cohort.n_events(),
        c_index: c.report,
        auc: auc.report,
        single_model_auc,
        single_model_auc_mean,
        stratification,
        roc,
        auc_bootstrap: auc.replicates,
    })
}

#[derive(Debug, Clone)]
pub struct FinalRun {
    pub models: Vec<FinalModels>,
    pub evaluations: Vec<ExternalEvaluation>,
    /// `(cohort, modality)` pairs skipped for missing inputs.
    pub skipped: Vec<(String, Modality)>,
}

/// Trains the fold-ensemble for each configured modality on the development
/// cohort and evaluates it on every external cohort that has the inputs.
pub fn final_train_and_validate(dev: &Cohort, externals: &[Cohort], config: &ExperimentConfig) -> Result<FinalRun> {
    if externals.is_empty() {
        return Err(Error::Precondition("at least one external cohort is required".into()));
    }
    let models = config
        .modalities
        .iter()
        .map(|&m| train_final_models(dev, m, config))
        .collect::<Result<Vec<_>>>()?;
    let (evaluations, skipped) = evaluate_all(&models, externals, config)?;
    Ok(FinalRun {
        models,
        evaluations,
        skipped,
    })
}

/// Evaluates each ensemble on each external cohort, skipping (with a warning)
/// cohorts that lack a modality's inputs.
pub fn evaluate_all(
    models: &[FinalModels],
    externals: &[Cohort],
    config: &ExperimentConfig,
) -> Result<(Vec<ExternalEvaluation>, Vec<(String, Modality)>)> {
    let mut evaluations = Vec::new();
    let mut skipped = Vec::new();
    for cohort in externals {
        for fm in models {
            if !cohort.supports(fm.modality) {
                warn!("cohort {} lacks {} inputs; skipping", cohort.name, fm.modality);
                skipped.push((cohort.name.clone(), fm.modality));
                continue;
            }
            evaluations.push(evaluate_external(fm, cohort, config)?);
        }
    }
    Ok((evaluations, skipped))
}
