//! Biochemical-recurrence risk modelling from whole-slide tile embeddings and
//! clinical variables.
//!
//! The numeric core (`model`, `survstats`) is generic over [`Scalar`] (`f32`
//! or `f64`); the pipeline runs in `f64`. Aliases below name the common
//! `f64` instantiations.

pub mod cohort;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod survstats;
pub mod tiling;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type RiskModelF64 = model::RiskModel<f64>;
pub type RiskModelF32 = model::RiskModel<f32>;
pub type ModelInputF64 = model::ModelInput<f64>;
pub type TileMatrixF64 = model::TileMatrix<f64>;
pub type SurvivalDatasetF64 = survstats::SurvivalDataset<f64>;
pub type CoxFitF64 = survstats::CoxFit<f64>;
