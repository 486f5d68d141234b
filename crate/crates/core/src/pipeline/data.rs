use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{CohortSource, ExperimentConfig};
use crate::cohort::{fit_normalization, load_manifest, validate_cohort, CohortRecord, NormalizationStats};
use crate::error::{Error, Result};
use crate::model::{Modality, ModelInput, TrainingSample};
use crate::rng::{derive_seed, name_hash};
use crate::survstats::SurvivalDataset;
use crate::tiling::{load_store, EmbeddingBag, SyntheticCohort};

/// Whether a cohort's outcomes may be used for fitting. External metrics are
/// computed only on cohorts tagged `External`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CohortRole {
    Development,
    External,
}

/// Records plus per-patient slide bags (aligned with `records`).
#[derive(Debug, Clone)]
pub struct Cohort {
    pub name: String,
    pub role: CohortRole,
    pub records: Vec<CohortRecord>,
    slides: Vec<Vec<EmbeddingBag>>,
}

impl Cohort {
    /// Attaches slide bags to records. Bags are matched by patient id in
    /// store order and must match each patient's slide count.
    pub fn new(name: impl Into<String>, role: CohortRole, records: Vec<CohortRecord>, bags: Vec<EmbeddingBag>) -> Result<Self> {
        validate_cohort(&records)?;
        let mut by_patient: BTreeMap<String, Vec<EmbeddingBag>> = BTreeMap::new();
        for bag in bags {
            by_patient.entry(bag.patient_id().to_string()).or_default().push(bag);
        }
        let mut slides = Vec::with_capacity(records.len());
        for r in &records {
            let bags = by_patient.remove(&r.patient_id).unwrap_or_default();
            if !bags.is_empty() && bags.len() != r.slide_ids.len() {
                return Err(Error::Validation(format!(
                    "patient {} lists {} slides but the store holds {} bags",
                    r.patient_id,
                    r.slide_ids.len(),
                    bags.len()
                )));
            }
            slides.push(bags);
        }
        if let Some(id) = by_patient.keys().next() {
            return Err(Error::Validation(format!("embedding store has bags for unknown patient {id}")));
        }
        let dims: std::collections::BTreeSet<usize> = slides.iter().flatten().map(EmbeddingBag::dim).collect();
        if dims.len() > 1 {
            return Err(Error::Validation(format!("mixed embedding widths {dims:?}")));
        }
        Ok(Cohort {
            name: name.into(),
            role,
            records,
            slides,
        })
    }

    pub fn load(source: &CohortSource, role: CohortRole, config: &ExperimentConfig) -> Result<Self> {
        let records = load_manifest(config.resolve(&source.manifest))?;
        let bags = match &source.embeddings {
            Some(p) => load_store(config.resolve(p))?,
            None => Vec::new(),
        };
        Self::new(source.name.clone(), role, records, bags)
    }

    pub fn from_synthetic(name: impl Into<String>, role: CohortRole, synth: SyntheticCohort) -> Result<Self> {
        Self::new(name, role, synth.records, synth.bags)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn slides(&self, i: usize) -> &[EmbeddingBag] {
        &self.slides[i]
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.slides.iter().flatten().map(EmbeddingBag::dim).next()
    }

    /// Every patient has the inputs `modality` needs.
    pub fn supports(&self, modality: Modality) -> bool {
        (0..self.len()).all(|i| {
            (!modality.uses_image() || !self.slides[i].is_empty())
                && (!modality.uses_clinical() || self.records[i].clinical.is_some())
        })
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.outcome.event).count()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.outcome.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.outcome.event).collect()
    }

    pub fn dataset(&self, idx: &[usize]) -> Result<SurvivalDataset<f64>> {
        SurvivalDataset::new(
            idx.iter().map(|&i| self.records[i].outcome.time).collect(),
            idx.iter().map(|&i| self.records[i].outcome.event).collect(),
        )
    }

    /// Clinical standardization fitted on the given patients, when the
    /// modality uses clinical inputs.
    pub fn normalization(&self, idx: &[usize], modality: Modality) -> Result<Option<NormalizationStats>> {
        if !modality.uses_clinical() {
            return Ok(None);
        }
        let subset: Vec<CohortRecord> = idx.iter().map(|&i| self.records[i].clone()).collect();
        fit_normalization(&subset).map(Some)
    }

    pub fn samples(&self, idx: &[usize], stats: Option<&NormalizationStats>) -> Vec<TrainingSample<'_, f64>> {
        idx.iter()
            .map(|&i| {
                let r = &self.records[i];
                TrainingSample {
                    id: &r.patient_id,
                    slides: &self.slides[i],
                    clinical: match (&r.clinical, stats) {
                        (Some(c), Some(s)) => Some(s.normalize(c)),
                        _ => None,
                    },
                    time: r.outcome.time,
                    event: r.outcome.event,
                }
            })
            .collect()
    }

    /// Full-bag inputs for every patient. The tile cap sampler is keyed on
    /// (seed, patient id) so every model sees the same bags.
    pub fn inputs(
        &self,
        modality: Modality,
        stats: Option<&NormalizationStats>,
        max_tiles: usize,
        seed: u64,
    ) -> Result<Vec<ModelInput<f64>>> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.samples(&all, stats)
            .iter()
            .map(|s| s.input(modality, max_tiles, derive_seed(seed, &[name_hash(s.id)])))
            .collect()
    }
}
