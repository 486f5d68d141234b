use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SurvivalDataset;
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::scalar::Scalar;

/// Point estimate with a percentile bootstrap interval. Key names are part of
/// the report format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_boot: usize,
    pub horizon_years: Option<f64>,
    pub seed: u64,
    pub n_degenerate: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            n_resamples: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

/// Report plus the non-degenerate replicate values in resample order.
#[derive(Debug, Clone, PartialEq)]
pub struct Bootstrap {
    pub report: MetricReport,
    pub replicates: Vec<f64>,
}

/// Linear-interpolation quantile (type 7) of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Nonparametric bootstrap over subjects. Resample `b` draws its indices from
/// a generator seeded by `(seed, b)`, so results do not depend on how the
/// resamples are scheduled across threads. Resamples on which the metric is
/// undefined are skipped and counted.
pub fn bootstrap<T, F>(
    name: &str,
    ds: &SurvivalDataset<T>,
    metric: F,
    config: BootstrapConfig,
    horizon_years: Option<f64>,
) -> Result<Bootstrap>
where
    T: Scalar,
    F: Fn(&SurvivalDataset<T>) -> Result<T> + Sync,
{
    if config.n_resamples == 0 || !(config.level > 0.0 && config.level < 1.0) {
        return Err(Error::Precondition(format!(
            "bootstrap needs n >= 1 and level in (0, 1), got {} and {}",
            config.n_resamples, config.level
        )));
    }
    let estimate = metric(ds)?.to_f64_value();
    let n = ds.len();
    let values: Vec<Option<f64>> = (0..config.n_resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_for(config.seed, &[b as u64]);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            metric(&ds.subset(&idx))
                .ok()
                .map(Scalar::to_f64_value)
                .filter(|v| v.is_finite())
        })
        .collect();
    let replicates: Vec<f64> = values.iter().flatten().copied().collect();
    let n_degenerate = config.n_resamples - replicates.len();
    if 2 * n_degenerate > config.n_resamples {
        return Err(Error::Reliability {
            degenerate: n_degenerate,
            total: config.n_resamples,
        });
    }
    let mut sorted = replicates.clone();
    sorted.sort_by(f64::total_cmp);
    let alpha = 1.0 - config.level;
    Ok(Bootstrap {
        report: MetricReport {
            metric: name.to_string(),
            estimate,
            ci_low: percentile(&sorted, alpha / 2.0),
            ci_high: percentile(&sorted, 1.0 - alpha / 2.0),
            n_boot: config.n_resamples,
            horizon_years,
            seed: config.seed,
            n_degenerate,
        },
        replicates,
    })
}

pub fn bootstrap_ci<T, F>(
    name: &str,
    ds: &SurvivalDataset<T>,
    metric: F,
    config: BootstrapConfig,
    horizon_years: Option<f64>,
) -> Result<MetricReport>
where
    T: Scalar,
    F: Fn(&SurvivalDataset<T>) -> Result<T> + Sync,
{
    bootstrap(name, ds, metric, config, horizon_years).map(|b| b.report)
}
