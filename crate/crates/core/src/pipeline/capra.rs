use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::cohort::{capra_s_score, CohortRecord};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::survstats::{
    bootstrap, cox_fit, likelihood_ratio_test, td_auc_from, BootstrapConfig, MetricReport, SurvivalDataset,
};

const CAPRA: usize = 0;
const AI: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedCoxTest {
    pub chi_square: f64,
    pub df: usize,
    pub p_value: f64,
    /// Coefficients of the combined model, CAPRA-S first (0 when aliased).
    pub combined_coefficients: [f64; 2],
    pub ai_aliased: bool,
}

/// One row group of the AI-vs-CAPRA-S comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapraComparison {
    pub n_input: usize,
    /// Patients dropped for incomplete CAPRA-S inputs.
    pub n_excluded: usize,
    pub n_patients: usize,
    pub n_events: usize,
    pub ai_auc: MetricReport,
    pub capra_auc: MetricReport,
    pub combined_auc: MetricReport,
    /// AUC(AI) - AUC(CAPRA-S), bootstrapped jointly.
    pub delta_auc: MetricReport,
    pub lrt: NestedCoxTest,
}

fn combined_scores(ds: &SurvivalDataset<f64>) -> Result<Vec<f64>> {
    let fit = cox_fit(ds)?;
    Ok(ds.covariates()?.iter().map(|r| fit.linear_predictor(r)).collect())
}

fn auc_of(ds: &SurvivalDataset<f64>, column: usize, horizon: f64) -> Result<f64> {
    td_auc_from(ds.times(), ds.events(), &ds.column(column)?, horizon)
}

/// Likelihood-ratio test of a Cox model on the CAPRA-S score against one on
/// CAPRA-S plus the AI score. An AI score collinear with CAPRA-S is aliased,
/// giving zero added degrees of freedom and p = 1.
pub fn capra_lrt(ds: &SurvivalDataset<f64>) -> Result<NestedCoxTest> {
    let full = cox_fit(ds)?;
    let reduced = cox_fit(&ds.select_covariates(&[CAPRA])?)?;
    let df = full.n_estimated().saturating_sub(reduced.n_estimated());
    let lr = likelihood_ratio_test(&full, &reduced, df)?;
    Ok(NestedCoxTest {
        chi_square: lr.chi_square,
        df,
        p_value: if df == 0 { 1.0 } else { lr.p_value },
        combined_coefficients: [full.coefficients[CAPRA], full.coefficients[AI]],
        ai_aliased: full.aliased[AI],
    })
}

/// Compares horizon AUCs of the AI score, the integer CAPRA-S score and a
/// Cox model combining both, with bootstrap CIs (the combined model is refit
/// inside every resample), plus the nested-model LRT.
pub fn compare_with_capra(
    records: &[CohortRecord],
    ai_scores: &[f64],
    horizon: f64,
    config: BootstrapConfig,
) -> Result<CapraComparison> {
    if records.len() != ai_scores.len() {
        return Err(Error::Contract(format!(
            "{} AI scores for {} patients",
            ai_scores.len(),
            records.len()
        )));
    }
    let mut times = Vec::new();
    let mut events = Vec::new();
    let mut rows = Vec::new();
    for (r, &s) in records.iter().zip(ai_scores) {
        let Some(score) = r.capra_s.as_ref().and_then(|c| capra_s_score(c).ok()) else {
            continue;
        };
        times.push(r.outcome.time);
        events.push(r.outcome.event);
        rows.push(vec![f64::from(score.score), s]);
    }
    let n_excluded = records.len() - rows.len();
    if n_excluded > 0 {
        warn!("{n_excluded} of {} patients excluded for incomplete CAPRA-S inputs", records.len());
    }
    if rows.is_empty() {
        return Err(Error::Precondition("no patient has complete CAPRA-S inputs".into()));
    }
    let ds = SurvivalDataset::new(times, events)?.with_covariates(rows)?;
    let boot = |name: &str, tag: u64, f: &(dyn Fn(&SurvivalDataset<f64>) -> Result<f64> + Sync)| {
        let cfg = BootstrapConfig {
            seed: derive_seed(config.seed, &[tag]),
            ..config
        };
        bootstrap(name, &ds, f, cfg, Some(horizon)).map(|b| b.report)
    };
    let ai_auc = boot("auc_ai", 1, &|d| auc_of(d, AI, horizon))?;
    let capra_auc = boot("auc_capra_s", 2, &|d| auc_of(d, CAPRA, horizon))?;
    let combined_auc = boot("auc_combined", 3, &|d| {
        td_auc_from(d.times(), d.events(), &combined_scores(d)?, horizon)
    })?;
    let delta_auc = boot("delta_auc", 4, &|d| Ok(auc_of(d, AI, horizon)? - auc_of(d, CAPRA, horizon)?))?;
    let lrt = capra_lrt(&ds)?;
    info!(
        "CAPRA-S comparison: AUC AI {:.3}, CAPRA-S {:.3}, combined {:.3}; LRT chi2 {:.2} (df {}) p {:.3e}",
        ai_auc.estimate, capra_auc.estimate, combined_auc.estimate, lrt.chi_square, lrt.df, lrt.p_value
    );
    Ok(CapraComparison {
        n_input: records.len(),
        n_excluded,
        n_patients: ds.len(),
        n_events: ds.n_events(),
        ai_auc,
        capra_auc,
        combined_auc,
        delta_auc,
        lrt,
    })
}
