//! Censored-survival statistics: Kaplan-Meier, log-rank, Harrell's C-index,
//! cumulative/dynamic time-dependent AUC, percentile bootstrap, Breslow Cox
//! regression with likelihood-ratio tests, and quartile stratification.
//!
//! Everything is generic over [`Scalar`]; p-values are computed in `f64`.

mod bootstrap;
mod concordance;
mod coxfit;
mod dist;
mod exchange;
mod km;
pub(crate) mod linalg;
mod logrank;
mod quartile;
mod td_auc;

pub use bootstrap::{bootstrap, bootstrap_ci, percentile, Bootstrap, BootstrapConfig, MetricReport};
pub use concordance::{c_index, concordance, Concordance};
pub use coxfit::{cox_fit, cox_fit_with, cox_partial_log_likelihood, likelihood_ratio_test, CoxFit, CoxFitOptions, LikelihoodRatio};
pub use dist::chi_square_sf;
pub use exchange::{load_scores, read_scores, scored_dataset, write_scores, ScoredOutcome};
pub use km::{km_estimate, KmCurve};
pub use logrank::{logrank_test, LogRank};
pub use quartile::{quartile_stratify, Quartile, Stratification};
pub use td_auc::{td_auc_from, time_dependent_auc, time_dependent_roc, RocPoint};

use crate::cohort::SurvivalOutcome;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Aligned `(time, event)` arrays with optional per-subject scores and
/// covariate rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset<T> {
    times: Vec<T>,
    events: Vec<bool>,
    scores: Option<Vec<T>>,
    covariates: Option<Vec<Vec<T>>>,
}

impl<T: Scalar> SurvivalDataset<T> {
    pub fn new(times: Vec<T>, events: Vec<bool>) -> Result<Self> {
        if times.len() != events.len() {
            return Err(Error::Validation(format!(
                "{} times but {} event flags",
                times.len(),
                events.len()
            )));
        }
        if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t > T::zero())) {
            return Err(Error::Validation(format!("survival time {t} must be > 0")));
        }
        Ok(SurvivalDataset {
            times,
            events,
            scores: None,
            covariates: None,
        })
    }

    pub fn from_outcomes(outcomes: &[SurvivalOutcome]) -> Result<Self> {
        Self::new(
            outcomes.iter().map(|o| T::lit(o.time)).collect(),
            outcomes.iter().map(|o| o.event).collect(),
        )
    }

    pub fn with_scores(mut self, scores: Vec<T>) -> Result<Self> {
        if scores.len() != self.len() {
            return Err(Error::Validation(format!(
                "{} scores for {} subjects",
                scores.len(),
                self.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numerical {
                path: "scores".into(),
                message: "non-finite risk score".into(),
            });
        }
        self.scores = Some(scores);
        Ok(self)
    }

    /// Covariate rows, one per subject, all of equal width.
    pub fn with_covariates(mut self, rows: Vec<Vec<T>>) -> Result<Self> {
        if rows.len() != self.len() {
            return Err(Error::Validation(format!(
                "{} covariate rows for {} subjects",
                rows.len(),
                self.len()
            )));
        }
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Validation("covariate rows differ in width".into()));
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Numerical {
                path: "covariates".into(),
                message: "non-finite covariate".into(),
            });
        }
        self.covariates = Some(rows);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn times(&self) -> &[T] {
        &self.times
    }
    pub fn events(&self) -> &[bool] {
        &self.events
    }
    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|e| **e).count()
    }

    pub fn scores(&self) -> Result<&[T]> {
        self.scores
            .as_deref()
            .ok_or_else(|| Error::Contract("dataset carries no scores".into()))
    }

    pub fn covariates(&self) -> Result<&[Vec<T>]> {
        self.covariates
            .as_deref()
            .ok_or_else(|| Error::Contract("dataset carries no covariates".into()))
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates
            .as_ref()
            .and_then(|c| c.first())
            .map_or(0, Vec::len)
    }

    /// Covariate column `j` as a vector.
    pub fn column(&self, j: usize) -> Result<Vec<T>> {
        let rows = self.covariates()?;
        if j >= self.n_covariates() {
            return Err(Error::Contract(format!("no covariate column {j}")));
        }
        Ok(rows.iter().map(|r| r[j]).collect())
    }

    /// Keeps only the listed covariate columns, in the given order.
    pub fn select_covariates(&self, columns: &[usize]) -> Result<Self> {
        let rows = self.covariates()?;
        if let Some(&j) = columns.iter().find(|&&j| j >= self.n_covariates()) {
            return Err(Error::Contract(format!("no covariate column {j}")));
        }
        let mut out = self.clone();
        out.covariates = Some(rows.iter().map(|r| columns.iter().map(|&j| r[j]).collect()).collect());
        Ok(out)
    }

    /// Rows picked by index (repeats allowed), e.g. a bootstrap resample.
    pub fn subset(&self, idx: &[usize]) -> Self {
        SurvivalDataset {
            times: idx.iter().map(|&i| self.times[i]).collect(),
            events: idx.iter().map(|&i| self.events[i]).collect(),
            scores: self.scores.as_ref().map(|s| idx.iter().map(|&i| s[i]).collect()),
            covariates: self
                .covariates
                .as_ref()
                .map(|c| idx.iter().map(|&i| c[i].clone()).collect()),
        }
    }

    pub(crate) fn require_events(&self, what: &str) -> Result<()> {
        if self.n_events() == 0 {
            return Err(Error::Estimation(format!("{what}: no events observed")));
        }
        Ok(())
    }
}
