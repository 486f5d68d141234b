//! Risk heads over tile bags and clinical features, the Cox objective, Adam,
//! the early-stopping trainer and fold ensembling.

mod adam;
mod checkpoint;
mod loss;
mod network;
mod params;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tiling::{assemble_bag, EmbeddingBag};

pub use adam::{adam_step, Adam};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_FORMAT};
pub use loss::{cox_loss, cox_loss_with_grad};
pub use network::{attention_pool, RiskModel};
pub use params::{ParamLayout, Segment};
pub use train::{ensemble_predict, gradients, train, weighted_gradients, EpochRecord, Gradients, History, TrainConfig, TrainingSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Clinical,
    Image,
    Multimodal,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Clinical, Modality::Image, Modality::Multimodal];

    pub fn uses_image(self) -> bool {
        matches!(self, Modality::Image | Modality::Multimodal)
    }

    pub fn uses_clinical(self) -> bool {
        matches!(self, Modality::Clinical | Modality::Multimodal)
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Clinical => "clinical",
            Modality::Image => "image",
            Modality::Multimodal => "multimodal",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown modality `{s}` (clinical, image, multimodal)")))
    }
}

/// Layer widths of a risk model. The clinical encoder is fixed at 3 -> 256 -> 128.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub modality: Modality,
    /// Tile embedding width; 0 for the clinical-only model.
    pub image_dim: usize,
    pub attention_hidden: usize,
    /// Hidden width of the image-only and clinical-only heads.
    pub head_hidden: usize,
    /// Hidden width of the multimodal fusion head.
    pub fusion_hidden: usize,
}

impl Architecture {
    pub const CLINICAL_INPUT: usize = 3;
    pub const CLINICAL_HIDDEN: usize = 256;
    pub const CLINICAL_EMBEDDING: usize = 128;

    pub fn new(modality: Modality, image_dim: usize) -> Self {
        Architecture {
            modality,
            image_dim: if modality.uses_image() { image_dim } else { 0 },
            attention_hidden: 128,
            head_hidden: 128,
            fusion_hidden: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let uses_image = self.modality.uses_image();
        if uses_image != (self.image_dim > 0) {
            return Err(Error::Validation(format!(
                "{} model with image_dim {}",
                self.modality, self.image_dim
            )));
        }
        if uses_image && self.attention_hidden == 0 {
            return Err(Error::Validation("attention_hidden must be >= 1".into()));
        }
        let hidden = match self.modality {
            Modality::Multimodal => self.fusion_hidden,
            _ => self.head_hidden,
        };
        if hidden == 0 {
            return Err(Error::Validation("head width must be >= 1".into()));
        }
        Ok(())
    }

    /// Width of the vector the final two-layer head sees.
    pub fn head_input(&self) -> usize {
        match self.modality {
            Modality::Clinical => Self::CLINICAL_EMBEDDING,
            Modality::Image => self.image_dim,
            Modality::Multimodal => self.image_dim + Self::CLINICAL_EMBEDDING,
        }
    }
}

/// A bag of tiles as a row-major `n x dim` matrix in the model's scalar type,
/// plus a canonical (value-sorted) tile order that makes pooling independent
/// of the order tiles were supplied in.
#[derive(Debug, Clone, PartialEq)]
pub struct TileMatrix<T> {
    n: usize,
    dim: usize,
    data: Vec<T>,
    order: Vec<usize>,
}

impl<T: Scalar> TileMatrix<T> {
    pub fn new(n: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::Precondition("bag must contain at least one tile".into()));
        }
        if data.len() != n * dim {
            return Err(Error::Contract(format!("{} values for {n} tiles of dim {dim}", data.len())));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (&data[a * dim..(a + 1) * dim], &data[b * dim..(b + 1) * dim]);
            ra.iter()
                .zip(rb)
                .map(|(x, y)| x.to_f64_value().total_cmp(&y.to_f64_value()))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        Ok(TileMatrix { n, dim, data, order })
    }

    pub fn from_bag(bag: &EmbeddingBag) -> Result<Self> {
        let data = bag.as_slice().iter().map(|&v| T::from_f32_value(v)).collect();
        Self::new(bag.n_tiles(), bag.dim(), data)
    }

    pub fn n_tiles(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tile(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn canonical_order(&self) -> &[usize] {
        &self.order
    }
}

/// Inputs for one patient. Which fields are required depends on the modality.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput<T> {
    pub bag: Option<TileMatrix<T>>,
    /// Standardized (age, PSA, ISUP).
    pub clinical: Option<[T; 3]>,
}

impl<T: Scalar> ModelInput<T> {
    pub fn image(bag: TileMatrix<T>) -> Self {
        ModelInput {
            bag: Some(bag),
            clinical: None,
        }
    }

    pub fn clinical(z: [T; 3]) -> Self {
        ModelInput {
            bag: None,
            clinical: Some(z),
        }
    }

    pub fn multimodal(bag: TileMatrix<T>, z: [T; 3]) -> Self {
        ModelInput {
            bag: Some(bag),
            clinical: Some(z),
        }
    }

    /// Pools all slides of a patient (capped at `max_tiles`) into one input.
    pub fn from_slides(slides: &[EmbeddingBag], max_tiles: usize, seed: u64, clinical: Option<[T; 3]>) -> Result<Self> {
        let bag = if slides.is_empty() {
            None
        } else {
            Some(TileMatrix::from_bag(&assemble_bag(slides, max_tiles, seed)?)?)
        };
        Ok(ModelInput { bag, clinical })
    }

    pub fn supports(&self, modality: Modality) -> bool {
        (!modality.uses_image() || self.bag.is_some()) && (!modality.uses_clinical() || self.clinical.is_some())
    }
}
