use std::fmt;

use rand::seq::{index, IndexedRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;

/// Which encoder produced a bag's tile embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Uni2,
    Virchow2,
    Conch,
    /// Per-tile concatenation of several encoders; carries the summed width.
    Ensemble(u32),
    Synthetic(u32),
}

impl Provenance {
    pub fn dim(self) -> usize {
        match self {
            Provenance::Uni2 => 1536,
            Provenance::Virchow2 => 2560,
            Provenance::Conch => 512,
            Provenance::Ensemble(d) | Provenance::Synthetic(d) => d as usize,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Provenance::Uni2 => 1,
            Provenance::Virchow2 => 2,
            Provenance::Conch => 3,
            Provenance::Ensemble(_) => 4,
            Provenance::Synthetic(_) => 5,
        }
    }

    pub(crate) fn from_code(code: u8, dim: u32) -> Option<Self> {
        let p = match code {
            1 => Provenance::Uni2,
            2 => Provenance::Virchow2,
            3 => Provenance::Conch,
            4 => Provenance::Ensemble(dim),
            5 => Provenance::Synthetic(dim),
            _ => return None,
        };
        (p.dim() == dim as usize).then_some(p)
    }

    /// The three foundation encoders concatenated (1536 + 2560 + 512).
    pub fn foundation_ensemble() -> Self {
        Provenance::Ensemble(4608)
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Provenance::Uni2 => "uni2",
            Provenance::Virchow2 => "virchow2",
            Provenance::Conch => "conch",
            Provenance::Ensemble(_) => "ensemble",
            Provenance::Synthetic(_) => "synthetic",
        };
        write!(f, "{name}:{}", self.dim())
    }
}

/// Tile embeddings of one patient (or one slide), stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBag {
    patient_id: String,
    provenance: Provenance,
    data: Vec<f32>,
}

impl EmbeddingBag {
    pub fn new(patient_id: impl Into<String>, provenance: Provenance, data: Vec<f32>) -> Result<Self> {
        let dim = provenance.dim();
        let patient_id = patient_id.into();
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::Validation(format!(
                "bag \"{patient_id}\": {} values do not form whole tiles of width {dim}",
                data.len()
            )));
        }
        Ok(EmbeddingBag {
            patient_id,
            provenance,
            data,
        })
    }

    pub fn from_tiles(
        patient_id: impl Into<String>,
        provenance: Provenance,
        tiles: &[Vec<f32>],
    ) -> Result<Self> {
        let patient_id = patient_id.into();
        if let Some(t) = tiles.iter().find(|t| t.len() != provenance.dim()) {
            return Err(Error::Validation(format!(
                "bag \"{patient_id}\": tile of width {} under {provenance}",
                t.len()
            )));
        }
        Self::new(patient_id, provenance, tiles.concat())
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }
    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
    pub fn dim(&self) -> usize {
        self.provenance.dim()
    }
    pub fn n_tiles(&self) -> usize {
        self.data.len() / self.dim()
    }
    pub fn tile(&self, i: usize) -> &[f32] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }
    pub fn tiles(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim())
    }
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// Pools per-slide bags of one patient and caps the result at `max_tiles` by
/// uniform sampling without replacement (original relative order kept).
pub fn assemble_bag(slides: &[EmbeddingBag], max_tiles: usize, sampler_seed: u64) -> Result<EmbeddingBag> {
    let first = slides
        .first()
        .ok_or_else(|| Error::Precondition("no slide bags to assemble".into()))?;
    if max_tiles == 0 {
        return Err(Error::Precondition("max_tiles must be at least 1".into()));
    }
    for s in slides {
        if s.dim() != first.dim() {
            return Err(Error::Validation(format!(
                "cannot pool bags of width {} and {}",
                first.dim(),
                s.dim()
            )));
        }
        if s.patient_id != first.patient_id {
            return Err(Error::Validation(format!(
                "cannot pool bags of patients \"{}\" and \"{}\"",
                first.patient_id, s.patient_id
            )));
        }
    }
    let total: usize = slides.iter().map(EmbeddingBag::n_tiles).sum();
    let dim = first.dim();
    let mut data = Vec::with_capacity(total.min(max_tiles) * dim);
    if total <= max_tiles {
        for s in slides {
            data.extend_from_slice(&s.data);
        }
    } else {
        let mut rng = rng_for(sampler_seed, &[]);
        let mut picked = index::sample(&mut rng, total, max_tiles).into_vec();
        picked.sort_unstable();
        let all: Vec<&[f32]> = slides.iter().flat_map(|s| s.tiles()).collect();
        for i in picked {
            data.extend_from_slice(all[i]);
        }
    }
    EmbeddingBag::new(first.patient_id.clone(), first.provenance, data)
}

/// Draws `min(k, n)` slide ids uniformly without replacement. Callers pass a
/// seed already derived from (master seed, epoch, patient).
pub fn sample_training_slides<S: Clone>(slide_ids: &[S], k: usize, seed: u64) -> Result<Vec<S>> {
    if slide_ids.is_empty() {
        return Err(Error::Precondition("patient has no slides to sample".into()));
    }
    if k == 0 {
        return Err(Error::Precondition("must sample at least one slide".into()));
    }
    if k >= slide_ids.len() {
        return Ok(slide_ids.to_vec());
    }
    let mut rng = rng_for(seed, &[]);
    Ok(slide_ids.choose_multiple(&mut rng, k).cloned().collect())
}

/// Per-tile concatenation of aligned bags from different encoders.
pub fn concat_embeddings(bags: &[EmbeddingBag]) -> Result<EmbeddingBag> {
    let first = bags
        .first()
        .ok_or_else(|| Error::Precondition("no bags to concatenate".into()))?;
    if bags.len() == 1 {
        return Ok(first.clone());
    }
    let n = first.n_tiles();
    for b in bags {
        if b.n_tiles() != n {
            return Err(Error::Validation(format!(
                "tile counts differ ({n} vs {})",
                b.n_tiles()
            )));
        }
        if b.patient_id != first.patient_id {
            return Err(Error::Validation(format!(
                "cannot concatenate bags of \"{}\" and \"{}\"",
                first.patient_id, b.patient_id
            )));
        }
    }
    let dim: usize = bags.iter().map(EmbeddingBag::dim).sum();
    let mut data = Vec::with_capacity(n * dim);
    for i in 0..n {
        for b in bags {
            data.extend_from_slice(b.tile(i));
        }
    }
    EmbeddingBag::new(first.patient_id.clone(), Provenance::Ensemble(dim as u32), data)
}
