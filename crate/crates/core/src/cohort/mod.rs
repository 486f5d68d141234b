//! Patient-level data model: clinical covariates, survival outcomes, manifests,
//! recurrence derivation from PSA series, Z-score normalization and CAPRA-S.

mod capra;
mod manifest;
mod normalize;
mod outcome;

pub use capra::{capra_s_score, CapraGroup, CapraS, CAPRA_S_TABLE_VERSION};
pub use manifest::{load_manifest, read_manifest, save_manifest, write_manifest, MANIFEST_COLUMNS};
pub use normalize::{fit_normalization, normalize_clinical, NormalizationStats, CLINICAL_FEATURES};
pub use outcome::{derive_bcr, load_psa_series, BcrRule, PsaSeries};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClinicalFeatures {
    pub age_at_diagnosis: f64,
    pub psa_pretreatment: f64,
    pub isup_grade: u8,
}

impl ClinicalFeatures {
    pub fn new(age_at_diagnosis: f64, psa_pretreatment: f64, isup_grade: u8) -> Result<Self> {
        if !(1..=5).contains(&isup_grade) {
            return Err(Error::Validation(format!(
                "ISUP grade {isup_grade} outside 1..=5"
            )));
        }
        if !(psa_pretreatment.is_finite() && psa_pretreatment > 0.0) {
            return Err(Error::Validation(format!(
                "PSA {psa_pretreatment} must be positive"
            )));
        }
        if !(18.0..=120.0).contains(&age_at_diagnosis) {
            return Err(Error::Validation(format!(
                "age {age_at_diagnosis} outside [18, 120]"
            )));
        }
        Ok(ClinicalFeatures {
            age_at_diagnosis,
            psa_pretreatment,
            isup_grade,
        })
    }

    /// Feature vector in the fixed order (age, psa, isup).
    pub fn as_array(&self) -> [f64; 3] {
        [
            self.age_at_diagnosis,
            self.psa_pretreatment,
            self.isup_grade as f64,
        ]
    }
}

/// Time-to-recurrence pair. `event == false` means censored at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalOutcome {
    pub time: f64,
    pub event: bool,
}

impl SurvivalOutcome {
    pub fn new(time: f64, event: bool) -> Result<Self> {
        if !(time.is_finite() && time > 0.0) {
            return Err(Error::Validation(format!("survival time {time} must be > 0")));
        }
        Ok(SurvivalOutcome { time, event })
    }
}

/// Post-surgical inputs to the CAPRA-S score. Fields stay optional so that
/// partially recorded patients can be carried through and excluded later.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CapraSInputs {
    pub psa: Option<f64>,
    pub gleason_primary: Option<u8>,
    pub gleason_secondary: Option<u8>,
    pub positive_margins: Option<bool>,
    pub extracapsular_extension: Option<bool>,
    pub seminal_vesicle_invasion: Option<bool>,
    pub lymph_node_invasion: Option<bool>,
}

impl CapraSInputs {
    pub fn complete(
        psa: f64,
        gleason_primary: u8,
        gleason_secondary: u8,
        positive_margins: bool,
        extracapsular_extension: bool,
        seminal_vesicle_invasion: bool,
        lymph_node_invasion: bool,
    ) -> Self {
        CapraSInputs {
            psa: Some(psa),
            gleason_primary: Some(gleason_primary),
            gleason_secondary: Some(gleason_secondary),
            positive_margins: Some(positive_margins),
            extracapsular_extension: Some(extracapsular_extension),
            seminal_vesicle_invasion: Some(seminal_vesicle_invasion),
            lymph_node_invasion: Some(lymph_node_invasion),
        }
    }

    pub fn is_empty(&self) -> bool {
        *self == CapraSInputs::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRecord {
    pub patient_id: String,
    pub clinical: Option<ClinicalFeatures>,
    pub outcome: SurvivalOutcome,
    pub slide_ids: Vec<String>,
    pub capra_s: Option<CapraSInputs>,
}

/// Checks cohort-level invariants: unique ids, and every patient carries
/// clinical features or at least one slide.
pub fn validate_cohort(records: &[CohortRecord]) -> Result<()> {
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.patient_id.as_str()) {
            return Err(Error::Validation(format!(
                "duplicate patient_id \"{}\"",
                r.patient_id
            )));
        }
        if r.clinical.is_none() && r.slide_ids.is_empty() {
            return Err(Error::Validation(format!(
                "patient \"{}\" has neither clinical features nor slides",
                r.patient_id
            )));
        }
    }
    Ok(())
}
