use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Modality, TrainConfig};

/// A cohort on disk: CSV manifest plus an optional embedding store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSource {
    pub name: String,
    pub manifest: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
}

fn default_modalities() -> Vec<Modality> {
    Modality::ALL.to_vec()
}

/// Experiment description read from TOML. Relative paths are resolved
/// against the directory of the config file. `[train].modality` and
/// `[train].seed` are overwritten per run from `modalities` and `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "ExperimentConfig::default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_modalities")]
    pub modalities: Vec<Modality>,
    /// Free-text tag naming the tile encoder the embeddings came from.
    #[serde(default = "ExperimentConfig::default_encoder")]
    pub encoder: String,
    #[serde(default = "ExperimentConfig::default_horizon")]
    pub horizon_years: f64,
    #[serde(default = "ExperimentConfig::default_n_bootstrap")]
    pub n_bootstrap: usize,
    #[serde(default = "ExperimentConfig::default_ci_level")]
    pub ci_level: f64,
    #[serde(default = "ExperimentConfig::default_folds")]
    pub folds: usize,
    #[serde(default = "ExperimentConfig::default_bins")]
    pub followup_bins: usize,
    pub development: CohortSource,
    #[serde(default)]
    pub external: Vec<CohortSource>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl ExperimentConfig {
    fn default_output() -> PathBuf {
        PathBuf::from("runs")
    }
    fn default_encoder() -> String {
        "synthetic".into()
    }
    fn default_horizon() -> f64 {
        5.0
    }
    fn default_n_bootstrap() -> usize {
        1000
    }
    fn default_ci_level() -> f64 {
        0.95
    }
    fn default_folds() -> usize {
        5
    }
    fn default_bins() -> usize {
        4
    }

    /// Config with defaults everywhere except the development cohort.
    pub fn new(development: CohortSource) -> Self {
        ExperimentConfig {
            seed: 0,
            output_dir: Self::default_output(),
            modalities: default_modalities(),
            encoder: Self::default_encoder(),
            horizon_years: Self::default_horizon(),
            n_bootstrap: Self::default_n_bootstrap(),
            ci_level: Self::default_ci_level(),
            folds: Self::default_folds(),
            followup_bins: Self::default_bins(),
            development,
            external: Vec::new(),
            train: TrainConfig::default(),
            base_dir: PathBuf::new(),
        }
    }

    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical TOML serialization (after any overrides).
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml_string()?.as_bytes())))
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn set_base_dir(&mut self, dir: impl Into<PathBuf>) {
        self.base_dir = dir.into();
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.horizon_years.is_finite() && self.horizon_years > 0.0) {
            return bad(format!("horizon_years must be > 0, got {}", self.horizon_years));
        }
        if self.n_bootstrap == 0 || !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return bad("n_bootstrap must be >= 1 and ci_level in (0, 1)".into());
        }
        if self.folds < 3 {
            return bad(format!("nested CV needs at least 3 folds, got {}", self.folds));
        }
        if self.followup_bins < 2 {
            return bad("followup_bins must be >= 2".into());
        }
        if self.modalities.is_empty() {
            return bad("at least one modality is required".into());
        }
        self.train.validate()?;
        let mut names = std::collections::BTreeSet::new();
        for src in std::iter::once(&self.development).chain(&self.external) {
            if !names.insert(src.name.as_str()) {
                return bad(format!("cohort name `{}` is used twice", src.name));
            }
            for p in std::iter::once(&src.manifest).chain(&src.embeddings) {
                let full = self.resolve(p);
                if !full.is_file() {
                    return bad(format!("cohort `{}`: {} does not exist", src.name, full.display()));
                }
            }
        }
        Ok(())
    }
}
