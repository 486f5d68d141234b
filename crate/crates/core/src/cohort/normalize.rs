use serde::{Deserialize, Serialize};

use super::{ClinicalFeatures, CohortRecord};
use crate::error::{Error, Result};

pub const CLINICAL_FEATURES: [&str; 3] = ["age", "psa", "isup"];

/// Per-feature Z-score parameters for (age, psa, isup), fitted on a training
/// split. Standard deviations use the sample (n - 1) convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl NormalizationStats {
    pub fn validate(&self) -> Result<()> {
        for (i, (&m, &s)) in self.mean.iter().zip(&self.std).enumerate() {
            if !m.is_finite() || !(s.is_finite() && s > 0.0) {
                return Err(Error::Validation(format!(
                    "normalization for `{}` has mean {m}, std {s}",
                    CLINICAL_FEATURES[i]
                )));
            }
        }
        Ok(())
    }

    pub fn normalize(&self, c: &ClinicalFeatures) -> [f64; 3] {
        let x = c.as_array();
        std::array::from_fn(|i| (x[i] - self.mean[i]) / self.std[i])
    }

    pub fn denormalize(&self, z: &[f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| z[i] * self.std[i] + self.mean[i])
    }
}

/// Fits Z-score statistics over the records that carry clinical features.
pub fn fit_normalization(records: &[CohortRecord]) -> Result<NormalizationStats> {
    let rows: Vec<[f64; 3]> = records
        .iter()
        .filter_map(|r| r.clinical.as_ref().map(ClinicalFeatures::as_array))
        .collect();
    if rows.len() < 2 {
        return Err(Error::Precondition(format!(
            "normalization needs at least 2 records with clinical features, got {}",
            rows.len()
        )));
    }
    let n = rows.len() as f64;
    let mut mean = [0.0; 3];
    let mut std = [0.0; 3];
    for i in 0..3 {
        mean[i] = rows.iter().map(|r| r[i]).sum::<f64>() / n;
        let ss: f64 = rows.iter().map(|r| (r[i] - mean[i]).powi(2)).sum();
        std[i] = (ss / (n - 1.0)).sqrt();
        if std[i] <= f64::EPSILON * mean[i].abs().max(1.0) {
            return Err(Error::DegenerateFeature(CLINICAL_FEATURES[i].to_string()));
        }
    }
    Ok(NormalizationStats { mean, std })
}

pub fn normalize_clinical(c: &ClinicalFeatures, stats: &NormalizationStats) -> Result<[f64; 3]> {
    stats.validate()?;
    Ok(stats.normalize(c))
}
