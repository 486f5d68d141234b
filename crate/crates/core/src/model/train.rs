use std::borrow::Borrow;

use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, Adam};
use super::loss::cox_loss_with_grad;
use super::network::RiskModel;
use super::{Architecture, ModelInput, Modality};
use crate::cohort::NormalizationStats;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_for};
use crate::scalar::Scalar;
use crate::survstats::concordance;
use crate::tiling::{sample_training_slides, EmbeddingBag};

const SEED_INIT: u64 = 1;
const SEED_SHUFFLE: u64 = 2;
const SEED_SLIDES: u64 = 3;
const SEED_CAP: u64 = 4;
const SEED_EVAL: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub modality: Modality,
    pub learning_rate: f64,
    pub batch_size_bags: usize,
    pub max_tiles: usize,
    pub min_epochs: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub attention_hidden: usize,
    pub head_hidden: usize,
    pub fusion_hidden: usize,
    /// Slides drawn per patient in each training epoch; `None` (or any count at
    /// least the slide total) uses all of them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slides_per_patient: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            modality: Modality::Multimodal,
            learning_rate: 1e-4,
            batch_size_bags: 256,
            max_tiles: 3500,
            min_epochs: 100,
            max_epochs: 300,
            patience: 20,
            seed: 0,
            attention_hidden: 128,
            head_hidden: 128,
            fusion_hidden: 128,
            slides_per_patient: Some(1),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if self.batch_size_bags == 0 || self.max_tiles == 0 {
            return bad("batch_size_bags and max_tiles must be >= 1");
        }
        if self.min_epochs == 0 || self.min_epochs > self.max_epochs {
            return bad("need 0 < min_epochs <= max_epochs");
        }
        if self.patience == 0 {
            return bad("patience must be >= 1");
        }
        if self.slides_per_patient == Some(0) {
            return bad("slides_per_patient must be >= 1");
        }
        Ok(())
    }

    pub fn architecture(&self, image_dim: usize) -> Architecture {
        Architecture {
            attention_hidden: self.attention_hidden,
            head_hidden: self.head_hidden,
            fusion_hidden: self.fusion_hidden,
            ..Architecture::new(self.modality, image_dim)
        }
    }
}

/// One patient as seen by the trainer: per-slide bags, standardized clinical
/// features and the outcome.
#[derive(Debug, Clone, Copy)]
pub struct TrainingSample<'a, T> {
    pub id: &'a str,
    pub slides: &'a [EmbeddingBag],
    pub clinical: Option<[T; 3]>,
    pub time: T,
    pub event: bool,
}

impl<T: Scalar> TrainingSample<'_, T> {
    /// Full-bag input (all slides, capped at `max_tiles`) for evaluation.
    pub fn input(&self, modality: Modality, max_tiles: usize, seed: u64) -> Result<ModelInput<T>> {
        self.input_from(self.slides, modality, max_tiles, seed)
    }

    fn input_from(&self, slides: &[EmbeddingBag], modality: Modality, max_tiles: usize, seed: u64) -> Result<ModelInput<T>> {
        let slides = if modality.uses_image() { slides } else { &[] };
        let clinical = if modality.uses_clinical() { self.clinical } else { None };
        ModelInput::from_slides(slides, max_tiles, seed, clinical)
    }

    fn supports(&self, modality: Modality) -> bool {
        (!modality.uses_image() || !self.slides.is_empty()) && (!modality.uses_clinical() || self.clinical.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss before each update; `None` if every batch lacked events.
    pub train_loss: Option<f64>,
    pub skipped_batches: usize,
    pub val_c_index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_c_index: f64,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub loss: T,
    pub scores: Vec<T>,
    /// Same layout as the model's parameter vector.
    pub values: Vec<T>,
}

/// Exact gradient of the batch Cox loss with respect to every parameter.
pub fn gradients<T: Scalar, I: Borrow<ModelInput<T>>>(
    model: &RiskModel<T>,
    inputs: &[I],
    times: &[T],
    events: &[bool],
) -> Result<Gradients<T>> {
    weighted_gradients(model, inputs, times, events, None)
}

/// As [`gradients`], with per-patient case weights in the loss.
pub fn weighted_gradients<T: Scalar, I: Borrow<ModelInput<T>>>(
    model: &RiskModel<T>,
    inputs: &[I],
    times: &[T],
    events: &[bool],
    weights: Option<&[T]>,
) -> Result<Gradients<T>> {
    if inputs.len() != times.len() {
        return Err(Error::Contract(format!("{} inputs for {} outcomes", inputs.len(), times.len())));
    }
    let traces = inputs
        .iter()
        .map(|x| model.forward(x.borrow()))
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<T> = traces.iter().map(|t| t.score).collect();
    let (loss, dscores) = cox_loss_with_grad(&scores, times, events, weights)?;
    let mut values = vec![T::zero(); model.parameters().len()];
    for ((x, tr), &ds) in inputs.iter().zip(&traces).zip(&dscores) {
        model.backward(x.borrow(), tr, ds, &mut values);
    }
    if let Some(i) = values.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numerical {
            path: model.layout().path_of(i),
            message: "gradient is not finite".into(),
        });
    }
    Ok(Gradients { loss, scores, values })
}

fn validation_c_index<T: Scalar>(model: &RiskModel<T>, inputs: &[ModelInput<T>], times: &[T], events: &[bool]) -> Result<f64> {
    let scores = model.predict_all(inputs)?;
    concordance(times, events, &scores)?
        .index()
        .ok_or_else(|| Error::Precondition("validation split has no comparable pairs".into()))
}

/// Mini-batch Adam on the Cox loss with early stopping on validation C-index.
/// Returns the parameters of the best validation epoch (earliest on ties).
pub fn train<T: Scalar>(
    train_set: &[TrainingSample<'_, T>],
    val_set: &[TrainingSample<'_, T>],
    normalization: Option<NormalizationStats>,
    config: &TrainConfig,
) -> Result<(RiskModel<T>, History)> {
    config.validate()?;
    let modality = config.modality;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Precondition("training and validation splits must be non-empty".into()));
    }
    if !train_set.iter().any(|s| s.event) {
        return Err(Error::Precondition("training split has no events".into()));
    }
    if !val_set.iter().any(|s| s.event) {
        return Err(Error::Precondition("validation split has no events".into()));
    }
    if let Some(s) = train_set.iter().chain(val_set).find(|s| !s.supports(modality)) {
        return Err(Error::Precondition(format!("patient {} lacks {modality} inputs", s.id)));
    }
    let image_dim = if modality.uses_image() { train_set[0].slides[0].dim() } else { 0 };
    let mut model = RiskModel::<T>::new(config.architecture(image_dim), derive_seed(config.seed, &[SEED_INIT]))?;
    model.set_normalization(normalization);

    let val_inputs = val_set
        .iter()
        .enumerate()
        .map(|(i, s)| s.input(modality, config.max_tiles, derive_seed(config.seed, &[SEED_EVAL, i as u64])))
        .collect::<Result<Vec<_>>>()?;
    let val_times: Vec<T> = val_set.iter().map(|s| s.time).collect();
    let val_events: Vec<bool> = val_set.iter().map(|s| s.event).collect();

    // Inputs that do not change between epochs are built once.
    let resampled = |s: &TrainingSample<'_, T>| {
        modality.uses_image()
            && (config.slides_per_patient.is_some_and(|k| k < s.slides.len())
                || s.slides.iter().map(EmbeddingBag::n_tiles).sum::<usize>() > config.max_tiles)
    };
    let fixed: Vec<Option<ModelInput<T>>> = train_set
        .iter()
        .enumerate()
        .map(|(i, s)| {
            (!resampled(s))
                .then(|| s.input(modality, config.max_tiles, derive_seed(config.seed, &[SEED_CAP, i as u64])))
                .transpose()
        })
        .collect::<Result<_>>()?;

    let lr = T::lit(config.learning_rate);
    let mut adam = Adam::new(model.parameters().len());
    let mut step = 0u64;
    let mut best = (f64::NEG_INFINITY, 0usize, model.parameters().to_vec());
    let mut history = History {
        epochs: Vec::new(),
        best_epoch: 0,
        best_c_index: f64::NAN,
        stopped_early: false,
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        let e = epoch as u64;
        order.sort_unstable();
        order.shuffle(&mut rng_for(config.seed, &[SEED_SHUFFLE, e]));
        let (mut loss_sum, mut n_batches, mut skipped) = (0.0, 0usize, 0usize);
        for batch in order.chunks(config.batch_size_bags) {
            if !batch.iter().any(|&i| train_set[i].event) {
                skipped += 1;
                continue;
            }
            let mut owned = Vec::new();
            for &i in batch.iter().filter(|&&i| fixed[i].is_none()) {
                let s = &train_set[i];
                let k = config.slides_per_patient.unwrap_or(s.slides.len());
                let seed = derive_seed(config.seed, &[SEED_SLIDES, e, i as u64]);
                let picked: Vec<EmbeddingBag> = sample_training_slides(s.slides, k, seed)?;
                let cap_seed = derive_seed(config.seed, &[SEED_CAP, e, i as u64]);
                owned.push((i, s.input_from(&picked, modality, config.max_tiles, cap_seed)?));
            }
            let inputs: Vec<&ModelInput<T>> = batch
                .iter()
                .map(|&i| match &fixed[i] {
                    Some(x) => x,
                    None => &owned.iter().find(|(j, _)| *j == i).expect("resampled input").1,
                })
                .collect();
            let times: Vec<T> = batch.iter().map(|&i| train_set[i].time).collect();
            let events: Vec<bool> = batch.iter().map(|&i| train_set[i].event).collect();
            let g = gradients(&model, &inputs, &times, &events)?;
            step += 1;
            adam_step(model.parameters_mut(), &g.values, &mut adam, lr, step)?;
            loss_sum += g.loss.to_f64_value();
            n_batches += 1;
        }
        let c = validation_c_index(&model, &val_inputs, &val_times, &val_events)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: (n_batches > 0).then(|| loss_sum / n_batches as f64),
            skipped_batches: skipped,
            val_c_index: c,
        });
        if c > best.0 {
            best = (c, epoch, model.parameters().to_vec());
        }
        debug!("epoch {epoch}: val C-index {c:.4} (best {:.4} @ {})", best.0, best.1);
        if epoch >= config.min_epochs && epoch - best.1 >= config.patience {
            history.stopped_early = epoch < config.max_epochs;
            break;
        }
    }
    history.best_epoch = best.1;
    history.best_c_index = best.0;
    info!(
        "{modality} model: best val C-index {:.4} at epoch {} of {}",
        best.0,
        best.1,
        history.epochs.len()
    );
    model.parameters_mut().copy_from_slice(&best.2);
    Ok((model, history))
}

/// Mean of member scores per patient. Member scores are summed in sorted
/// order so the result does not depend on the order of `models`.
pub fn ensemble_predict<T: Scalar>(models: &[RiskModel<T>], inputs: &[ModelInput<T>]) -> Result<Vec<T>> {
    let first = models
        .first()
        .ok_or_else(|| Error::Precondition("ensemble needs at least one model".into()))?;
    if let Some(m) = models.iter().find(|m| m.modality() != first.modality()) {
        return Err(Error::Contract(format!(
            "ensemble mixes {} and {} models",
            first.modality(),
            m.modality()
        )));
    }
    let per_model = models
        .iter()
        .map(|m| m.predict_all(inputs))
        .collect::<Result<Vec<_>>>()?;
    let k = T::from_count(models.len());
    Ok((0..inputs.len())
        .map(|i| {
            let mut s: Vec<T> = per_model.iter().map(|p| p[i]).collect();
            s.sort_by(|a, b| a.to_f64_value().total_cmp(&b.to_f64_value()));
            s.into_iter().sum::<T>() / k
        })
        .collect())
}
