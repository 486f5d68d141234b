//! Run reports (JSON and aligned text), plot-data CSVs and the per-run
//! output manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::capra::CapraComparison;
use super::config::ExperimentConfig;
use super::cv::{CvOutcome, FoldMetrics, MetricSummary};
use super::external::{ExternalEvaluation, StratificationTable};
use crate::error::{Error, Result};
use crate::model::Modality;

pub const TOOL_NAME: &str = "bcr";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything needed to trace a number back to its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub encoder: String,
    pub horizon_years: f64,
}

impl ReportHeader {
    pub fn new(command: &str, config: &ExperimentConfig) -> Result<Self> {
        Ok(ReportHeader {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            command: command.into(),
            seed: config.seed,
            config_hash: config.hash()?,
            encoder: config.encoder.clone(),
            horizon_years: config.horizon_years,
        })
    }
}

/// The model picked per modality: best held-out horizon AUC across CV folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedModel {
    pub modality: Modality,
    pub fold: usize,
    pub test_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedEvaluation {
    pub cohort: String,
    pub modality: Modality,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub header: ReportHeader,
    #[serde(default)]
    pub cv_folds: Vec<FoldMetrics>,
    #[serde(default)]
    pub cv_summary: Vec<MetricSummary>,
    #[serde(default)]
    pub selected_models: Vec<SelectedModel>,
    #[serde(default)]
    pub external: Vec<ExternalEvaluation>,
    #[serde(default)]
    pub skipped: Vec<SkippedEvaluation>,
    #[serde(default)]
    pub comparison: Vec<(String, CapraComparison)>,
}

impl RunReport {
    pub fn new(header: ReportHeader) -> Self {
        RunReport {
            header,
            cv_folds: Vec::new(),
            cv_summary: Vec::new(),
            selected_models: Vec::new(),
            external: Vec::new(),
            skipped: Vec::new(),
            comparison: Vec::new(),
        }
    }

    pub fn add_cv(&mut self, cv: &CvOutcome) {
        self.cv_folds.extend(cv.folds.iter().cloned());
        self.cv_summary.extend(cv.summary());
        let best = cv.best_fold();
        self.selected_models.push(SelectedModel {
            modality: cv.modality,
            fold: best,
            test_auc: cv.folds[best].test_auc,
        });
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn render_text(&self) -> String {
        let h = &self.header;
        let mut out = format!(
            "{} {} {}\nseed {}  config {}  encoder {}  horizon {}y\n",
            h.tool, h.version, h.command, h.seed, h.config_hash, h.encoder, h.horizon_years
        );
        if !self.cv_folds.is_empty() {
            out.push_str("\nNested cross-validation (held-out fold)\n");
            let rows = self.cv_folds.iter().map(|f| {
                vec![
                    f.modality.to_string(),
                    f.fold.to_string(),
                    f.val_fold.to_string(),
                    format!("{}/{}/{}", f.n_train, f.n_val, f.n_test),
                    f.test_events.to_string(),
                    format!("{}/{}", f.best_epoch, f.epochs_run),
                    num(f.val_c_index),
                    num(f.test_c_index),
                    num(f.test_auc),
                ]
            });
            out.push_str(&table(
                &["modality", "fold", "val", "train/val/test", "events", "best/epochs", "val C", "test C", "test AUC"],
                rows,
            ));
            out.push('\n');
            let rows = self.cv_summary.iter().map(|s| {
                vec![s.modality.to_string(), s.metric.clone(), num(s.mean), num(s.std), s.n_folds.to_string()]
            });
            out.push_str(&table(&["modality", "metric", "mean", "std", "folds"], rows));
        }
        if !self.selected_models.is_empty() {
            out.push_str("\nSelected models\n");
            let rows = self
                .selected_models
                .iter()
                .map(|m| vec![m.modality.to_string(), m.fold.to_string(), num(m.test_auc)]);
            out.push_str(&table(&["modality", "fold", "test AUC"], rows));
        }
        if !self.external.is_empty() {
            out.push_str("\nExternal validation (fold ensemble)\n");
            let rows = self.external.iter().map(|e| {
                vec![
                    e.cohort.clone(),
                    e.modality.to_string(),
                    e.n_patients.to_string(),
                    e.n_events.to_string(),
                    ci(e.c_index.estimate, e.c_index.ci_low, e.c_index.ci_high),
                    ci(e.auc.estimate, e.auc.ci_low, e.auc.ci_high),
                    num(e.single_model_auc_mean),
                ]
            });
            out.push_str(&table(
                &["cohort", "modality", "n", "events", "C-index [CI]", "AUC [CI]", "member AUC"],
                rows,
            ));
            for e in &self.external {
                out.push('\n');
                out.push_str(&render_stratification(&e.cohort, e.modality, &e.stratification));
            }
        }
        if !self.skipped.is_empty() {
            out.push_str("\nSkipped\n");
            let rows = self
                .skipped
                .iter()
                .map(|s| vec![s.cohort.clone(), s.modality.to_string(), s.reason.clone()]);
            out.push_str(&table(&["cohort", "modality", "reason"], rows));
        }
        if !self.comparison.is_empty() {
            out.push_str("\nComparison with CAPRA-S\n");
            let rows = self.comparison.iter().map(|(cohort, c)| {
                vec![
                    cohort.clone(),
                    format!("{}/{}", c.n_patients, c.n_input),
                    ci(c.ai_auc.estimate, c.ai_auc.ci_low, c.ai_auc.ci_high),
                    ci(c.capra_auc.estimate, c.capra_auc.ci_low, c.capra_auc.ci_high),
                    ci(c.combined_auc.estimate, c.combined_auc.ci_low, c.combined_auc.ci_high),
                    ci(c.delta_auc.estimate, c.delta_auc.ci_low, c.delta_auc.ci_high),
                    num(c.lrt.chi_square),
                    c.lrt.df.to_string(),
                    pval(c.lrt.p_value),
                ]
            });
            out.push_str(&table(
                &["cohort", "used/n", "AUC AI", "AUC CAPRA-S", "AUC combined", "delta AUC", "LR chi2", "df", "p"],
                rows,
            ));
        }
        out
    }
}

/// Quartile table with the K-group and Q1-vs-Q4 log-rank results.
pub fn render_stratification(cohort: &str, modality: Modality, s: &StratificationTable) -> String {
    let mut out = format!(
        "Risk quartiles: {cohort} / {modality}  log-rank chi2 {} (df {}) p {}  Q1 vs Q4 p {}{}\n",
        num(s.logrank_chi_square),
        s.logrank_df,
        pval(s.logrank_p),
        pval(s.q1_vs_q4_p),
        if s.degenerate { "  (tied cut points)" } else { "" }
    );
    let rows = s.rows.iter().map(|r| {
        vec![
            r.quartile.label().to_string(),
            r.n.to_string(),
            r.events.to_string(),
            r.upper_cut.map_or("-".into(), num),
            num(r.survival_at_horizon),
        ]
    });
    out.push_str(&table(&["quartile", "n", "events", "upper cut", "S(horizon)"], rows));
    out
}

fn num(v: f64) -> String {
    format!("{v:.3}")
}

fn pval(p: f64) -> String {
    if p < 1e-4 {
        format!("{p:.1e}")
    } else {
        format!("{p:.4}")
    }
}

fn ci(est: f64, lo: f64, hi: f64) -> String {
    format!("{est:.3} [{lo:.3}, {hi:.3}]")
}

/// Left-aligned columns padded to the widest cell, two spaces apart.
fn table(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    cells.extend(rows);
    let mut width = vec![0; header.len()];
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        fill(&mut w)?;
        w.flush().map_err(|e| Error::io("<csv>", e))?;
    }
    Ok(buf)
}

/// Kaplan-Meier step vertices per (cohort, modality, quartile).
pub fn km_csv(report: &RunReport) -> Result<Vec<u8>> {
    csv_bytes(&["cohort", "modality", "quartile", "time", "survival"], |w| {
        for e in &report.external {
            for s in &e.stratification.km {
                for &(t, surv) in &s.points {
                    w.write_record([e.cohort.as_str(), e.modality.name(), s.quartile.label(), &t.to_string(), &surv.to_string()])?;
                }
            }
        }
        Ok(())
    })
}

/// Horizon ROC points; the empty threshold marks the (0, 0) corner.
pub fn roc_csv(report: &RunReport) -> Result<Vec<u8>> {
    csv_bytes(&["cohort", "modality", "threshold", "fpr", "tpr"], |w| {
        for e in &report.external {
            for p in &e.roc {
                w.write_record([
                    e.cohort.as_str(),
                    e.modality.name(),
                    &p.threshold.map_or(String::new(), |t| t.to_string()),
                    &p.false_positive_rate.to_string(),
                    &p.true_positive_rate.to_string(),
                ])?;
            }
        }
        Ok(())
    })
}

/// Bootstrap AUC replicates of each ensemble, for violin plots.
pub fn violin_csv(report: &RunReport) -> Result<Vec<u8>> {
    csv_bytes(&["cohort", "modality", "replicate", "auc"], |w| {
        for e in &report.external {
            for (b, v) in e.auc_bootstrap.iter().enumerate() {
                w.write_record([e.cohort.as_str(), e.modality.name(), &b.to_string(), &v.to_string()])?;
            }
        }
        Ok(())
    })
}

pub fn cv_folds_csv(report: &RunReport) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for f in &report.cv_folds {
            w.serialize(f)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
    }
    Ok(buf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
    pub parameters: BTreeMap<String, String>,
    pub files: Vec<FileDigest>,
}

/// File name of a command's run manifest, e.g. `run_manifest.cv.json`.
/// Commands sharing an output directory keep separate manifests.
pub fn run_manifest_name(command: &str) -> String {
    format!("run_manifest.{command}.json")
}

/// Files written by one command. Unless [`OutputSet::commit`] is called, every
/// file written through the set is removed again when it is dropped, so a
/// failed run leaves no partial outputs behind.
#[derive(Debug)]
pub struct OutputSet {
    dir: PathBuf,
    written: Vec<(String, PathBuf)>,
    created_dirs: Vec<PathBuf>,
    committed: bool,
}

impl OutputSet {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let mut created_dirs = Vec::new();
        let mut p = dir.as_path();
        while !p.as_os_str().is_empty() && !p.exists() {
            created_dirs.push(p.to_path_buf());
            match p.parent() {
                Some(parent) => p = parent,
                None => break,
            }
        }
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(OutputSet {
            dir,
            written: Vec::new(),
            created_dirs,
            committed: false,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `bytes` to `dir/name`; `name` may contain `/`.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            if !parent.exists() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                self.created_dirs.insert(0, parent.to_path_buf());
            }
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.written.push((name.to_string(), path.clone()));
        Ok(path)
    }

    /// Writes the run manifest listing every file so far and keeps the outputs.
    pub fn commit(mut self, mut manifest: RunManifest) -> Result<()> {
        let mut files = Vec::with_capacity(self.written.len());
        for (name, path) in &self.written {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            files.push(FileDigest {
                path: name.clone(),
                bytes: bytes.len() as u64,
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        files.sort_by(|a, b| a.path.cmp(&b.path));
        files.dedup_by(|a, b| a.path == b.path);
        manifest.files = files;
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let name = run_manifest_name(&manifest.command);
        self.write(&name, text.as_bytes())?;
        self.committed = true;
        Ok(())
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for (_, path) in &self.written {
            let _ = std::fs::remove_file(path);
        }
        for dir in &self.created_dirs {
            let _ = std::fs::remove_dir(dir);
        }
    }
}
