use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use bcr_core::cohort::write_manifest;
use bcr_core::error::{Error, Result};
use bcr_core::model::{load_checkpoint, write_checkpoint, Modality, RiskModel};
use bcr_core::pipeline::{
    compare_with_capra, cv_folds_csv, ensemble_scores, evaluate_all, km_csv, nested_cv, render_stratification, roc_csv, stratify,
    train_final_models, violin_csv, Cohort, CohortRole, ExperimentConfig, FinalModels, OutputSet, ReportHeader,
    RunManifest, RunReport, SkippedEvaluation, TOOL_NAME, TOOL_VERSION,
};
use bcr_core::rng::derive_seed;
use bcr_core::survstats::{load_scores, write_scores, BootstrapConfig, ScoredOutcome};
use bcr_core::tiling::{encode_store, enumerate_tiles, generate_synthetic_cohort, read_mask_pgm, SyntheticSignalSpec};

#[derive(Parser, Debug)]
#[command(name = "bcr", version, about = "Recurrence risk models from tile embeddings and clinical data")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Restrict to these modalities (repeatable).
    #[arg(long, global = true)]
    modality: Vec<Modality>,
    /// Restrict to this external cohort (or name the synthetic cohort).
    #[arg(long, global = true)]
    cohort: Option<String>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic cohort (manifest + embedding store).
    Synth(SynthArgs),
    /// Enumerate the tile grid of a tissue mask.
    Tile(TileArgs),
    /// Nested cross-validation on the development cohort.
    Cv,
    /// Train the fold-ensemble per modality and save checkpoints.
    TrainFinal,
    /// Evaluate saved ensembles on the external cohorts.
    Validate(ModelsArgs),
    /// Compare an ensemble's score with CAPRA-S on the external cohorts.
    CompareCapra(ModelsArgs),
    /// Risk-quartile Kaplan-Meier tables on the external cohorts or a scores file.
    Stratify(StratifyArgs),
    /// Render a saved report as text and plot-data CSVs.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    patients: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 50)]
    tiles_min: usize,
    #[arg(long, default_value_t = 50)]
    tiles_max: usize,
    /// Log-hazard per unit signal-tile fraction.
    #[arg(long, default_value_t = 20.0)]
    beta: f64,
    #[arg(long, default_value_t = 3.0)]
    signal_strength: f64,
    /// Log-hazard per centered CAPRA-S point (needs --with-capra).
    #[arg(long, default_value_t = 0.0)]
    capra_beta: f64,
    #[arg(long, default_value_t = 1)]
    slides: usize,
    #[arg(long, default_value_t = 1)]
    direction_seed: u64,
    #[arg(long)]
    with_capra: bool,
    #[arg(long)]
    no_clinical: bool,
    #[arg(long, default_value_t = 0.0)]
    clinical_coupling: f64,
    /// Baseline hazard per year; defaults to 0.14 * exp(-beta / 2).
    #[arg(long)]
    baseline_hazard: Option<f64>,
}

#[derive(Args, Debug)]
struct TileArgs {
    /// P5 PGM mask with a `<mask>.mpp` sidecar.
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, default_value_t = 256)]
    tile_size: u32,
    #[arg(long, default_value_t = 128)]
    stride: u32,
    #[arg(long, default_value_t = 0.2)]
    min_tissue: f64,
}

#[derive(Args, Debug)]
struct ModelsArgs {
    /// Checkpoint directory (default: `<output_dir>/train-final/models`).
    #[arg(long)]
    models: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StratifyArgs {
    #[command(flatten)]
    models: ModelsArgs,
    /// Stratify a `patient_id, score, time_years, event` file instead of
    /// scoring the external cohorts.
    #[arg(long, conflicts_with = "models")]
    scores: Option<PathBuf>,
    /// Horizon in years when using --scores.
    #[arg(long, default_value_t = 5.0)]
    horizon: f64,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// A report.json written by `cv` or `validate`.
    #[arg(long)]
    input: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Tile(a) => tile(cli, a),
        Command::Cv => cv(cli),
        Command::TrainFinal => train_final(cli),
        Command::Validate(a) => validate(cli, a),
        Command::CompareCapra(a) => compare_capra(cli, a),
        Command::Stratify(a) => stratify_cmd(cli, a),
        Command::Report(a) => report(cli, a),
    }
}

fn require_out(cli: &Cli) -> Result<PathBuf> {
    cli.out
        .clone()
        .ok_or_else(|| Error::Config("--out is required for this command".into()))
}

/// Loads the config and applies `--seed` and `--modality`. The output
/// directory stays outside the config so it does not change the config hash;
/// without `--out` each command writes to `<output_dir>/<command>`.
fn load_config(cli: &Cli, command: &str) -> Result<(ExperimentConfig, PathBuf)> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if !cli.modality.is_empty() {
        config.modalities = cli.modality.clone();
    }
    config.validate()?;
    let out = cli.out.clone().unwrap_or_else(|| config.output_path().join(command));
    Ok((config, out))
}

fn manifest(command: &str, config: Option<&ExperimentConfig>, parameters: BTreeMap<String, String>) -> Result<RunManifest> {
    Ok(RunManifest {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        command: command.into(),
        seed: config.map(|c| c.seed),
        config_hash: config.map(ExperimentConfig::hash).transpose()?,
        parameters,
        files: Vec::new(),
    })
}

fn params(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn write_report(out: &mut OutputSet, report: &RunReport) -> Result<()> {
    out.write("report.json", report.to_json()?.as_bytes())?;
    out.write("report.txt", report.render_text().as_bytes())?;
    if !report.cv_folds.is_empty() {
        out.write("cv_folds.csv", &cv_folds_csv(report)?)?;
    }
    if !report.external.is_empty() {
        out.write("km.csv", &km_csv(report)?)?;
        out.write("roc.csv", &roc_csv(report)?)?;
        out.write("violin.csv", &violin_csv(report)?)?;
    }
    Ok(())
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let out_dir = require_out(cli)?;
    let seed = cli.seed.unwrap_or(0);
    let mut spec = SyntheticSignalSpec::new(a.dim, a.direction_seed);
    spec.beta = a.beta;
    spec.signal_strength = a.signal_strength;
    spec.capra_beta = a.capra_beta;
    spec.with_capra = a.with_capra;
    spec.with_clinical = !a.no_clinical;
    spec.clinical_coupling = a.clinical_coupling;
    spec.slides_per_patient = a.slides;
    spec.baseline_hazard = a.baseline_hazard.unwrap_or(0.14 * (-a.beta / 2.0).exp());
    let cohort = generate_synthetic_cohort(&spec, a.patients, (a.tiles_min, a.tiles_max), seed)?;
    info!(
        "generated {} patients, {} events",
        cohort.records.len(),
        cohort.records.iter().filter(|r| r.outcome.event).count()
    );

    let mut out = OutputSet::create(&out_dir)?;
    let mut manifest_csv = Vec::new();
    write_manifest(&cohort.records, &mut manifest_csv)?;
    out.write("manifest.csv", &manifest_csv)?;
    out.write("embeddings.bin", &encode_store(&cohort.bags)?)?;
    let mut truth = csv::Writer::from_writer(Vec::new());
    truth.write_record(["patient_id", "true_risk", "signal_fraction"])?;
    for ((r, risk), f) in cohort.records.iter().zip(&cohort.true_risk).zip(&cohort.signal_fraction) {
        truth.write_record([r.patient_id.as_str(), &risk.to_string(), &f.to_string()])?;
    }
    let truth = truth.into_inner().map_err(|e| Error::io("truth.csv", e.into_error()))?;
    out.write("truth.csv", &truth)?;
    out.write("signal_spec.json", serde_json::to_string_pretty(&spec)?.as_bytes())?;
    let p = params(&[
        ("patients", a.patients.to_string()),
        ("seed", seed.to_string()),
        ("name", cli.cohort.clone().unwrap_or_else(|| "synthetic".into())),
    ]);
    out.commit(manifest("synth", None, p)?)
}

fn tile(cli: &Cli, a: &TileArgs) -> Result<()> {
    let out_dir = require_out(cli)?;
    let mask = read_mask_pgm(&a.mask)?;
    let grid = enumerate_tiles(&mask, a.tile_size, a.stride, a.min_tissue)?;
    let mut out = OutputSet::create(&out_dir)?;
    out.write("tiles.json", serde_json::to_string_pretty(&grid)?.as_bytes())?;
    let text = format!(
        "mask {}x{} at {} um/px\nlattice {}x{} (tile {}, stride {})\nkept {} of {} positions (tissue >= {})\n",
        mask.width(),
        mask.height(),
        mask.resolution_um(),
        grid.lattice_cols,
        grid.lattice_rows,
        grid.tile_size,
        grid.stride,
        grid.positions.len(),
        grid.lattice_cols * grid.lattice_rows,
        a.min_tissue
    );
    out.write("tiles.txt", text.as_bytes())?;
    let p = params(&[
        ("mask", a.mask.display().to_string()),
        ("tile_size", a.tile_size.to_string()),
        ("stride", a.stride.to_string()),
        ("min_tissue", a.min_tissue.to_string()),
    ]);
    out.commit(manifest("tile", None, p)?)
}

fn development(config: &ExperimentConfig) -> Result<Cohort> {
    Cohort::load(&config.development, CohortRole::Development, config)
}

fn externals(cli: &Cli, config: &ExperimentConfig) -> Result<Vec<Cohort>> {
    let sources: Vec<_> = config
        .external
        .iter()
        .filter(|s| cli.cohort.as_ref().is_none_or(|c| *c == s.name))
        .collect();
    if sources.is_empty() {
        return Err(Error::Config(match &cli.cohort {
            Some(c) => format!("no external cohort named `{c}` in the config"),
            None => "the config lists no external cohorts".into(),
        }));
    }
    sources
        .into_iter()
        .map(|s| Cohort::load(s, CohortRole::External, config))
        .collect()
}

fn cv(cli: &Cli) -> Result<()> {
    let (config, out_dir) = load_config(cli, "cv")?;
    let dev = development(&config)?;
    let mut report = RunReport::new(ReportHeader::new("cv", &config)?);
    for &m in &config.modalities {
        if !dev.supports(m) {
            warn!("development cohort lacks {m} inputs; skipping");
            report.skipped.push(SkippedEvaluation {
                cohort: dev.name.clone(),
                modality: m,
                reason: "missing inputs".into(),
            });
            continue;
        }
        report.add_cv(&nested_cv(&dev, m, &config)?);
    }
    let mut out = OutputSet::create(&out_dir)?;
    write_report(&mut out, &report)?;
    out.commit(manifest("cv", Some(&config), BTreeMap::new())?)
}

fn checkpoint_name(m: Modality, fold: usize) -> String {
    format!("{}/fold{fold}.json", m.name())
}

fn train_final(cli: &Cli) -> Result<()> {
    let (config, out_dir) = load_config(cli, "train-final")?;
    let dev = development(&config)?;
    let mut out = OutputSet::create(&out_dir)?;
    for &m in &config.modalities {
        if !dev.supports(m) {
            warn!("development cohort lacks {m} inputs; skipping");
            continue;
        }
        let fm = train_final_models(&dev, m, &config)?;
        for (f, model) in fm.models.iter().enumerate() {
            let mut buf = Vec::new();
            write_checkpoint(model, &mut buf)?;
            out.write(&format!("models/{}", checkpoint_name(m, f)), &buf)?;
        }
        out.write(
            &format!("models/{}/histories.json", m.name()),
            serde_json::to_string_pretty(&fm.histories)?.as_bytes(),
        )?;
    }
    out.commit(manifest("train-final", Some(&config), BTreeMap::new())?)
}

fn load_models(dir: &Path, config: &ExperimentConfig) -> Result<Vec<FinalModels>> {
    let mut all = Vec::new();
    for &m in &config.modalities {
        let first = dir.join(checkpoint_name(m, 0));
        if !first.exists() {
            warn!("no {m} checkpoints under {}; skipping", dir.display());
            continue;
        }
        let models = (0..config.folds)
            .map(|f| load_checkpoint::<f64>(dir.join(checkpoint_name(m, f))))
            .collect::<Result<Vec<RiskModel<f64>>>>()?;
        all.push(FinalModels {
            modality: m,
            models,
            histories: Vec::new(),
        });
    }
    if all.is_empty() {
        return Err(Error::Precondition(format!("no checkpoints found under {}", dir.display())));
    }
    Ok(all)
}

fn models_dir(a: &ModelsArgs, config: &ExperimentConfig) -> PathBuf {
    a.models
        .clone()
        .unwrap_or_else(|| config.output_path().join("train-final").join("models"))
}

fn skipped_rows(skipped: Vec<(String, Modality)>) -> Vec<SkippedEvaluation> {
    skipped
        .into_iter()
        .map(|(cohort, modality)| SkippedEvaluation {
            cohort,
            modality,
            reason: "missing inputs".into(),
        })
        .collect()
}

fn validate(cli: &Cli, a: &ModelsArgs) -> Result<()> {
    let (config, out_dir) = load_config(cli, "validate")?;
    let models = load_models(&models_dir(a, &config), &config)?;
    let ext = externals(cli, &config)?;
    let (evaluations, skipped) = evaluate_all(&models, &ext, &config)?;
    let mut out = OutputSet::create(&out_dir)?;
    for cohort in &ext {
        for fm in models.iter().filter(|fm| cohort.supports(fm.modality)) {
            let (scores, _) = ensemble_scores(&fm.models, cohort, &config)?;
            let rows: Vec<ScoredOutcome> = cohort
                .records
                .iter()
                .zip(scores)
                .map(|(r, score)| ScoredOutcome {
                    patient_id: r.patient_id.clone(),
                    score,
                    time_years: r.outcome.time,
                    event: r.outcome.event,
                })
                .collect();
            let mut buf = Vec::new();
            write_scores(&rows, &mut buf)?;
            out.write(&format!("scores/{}_{}.csv", cohort.name, fm.modality), &buf)?;
        }
    }
    let mut report = RunReport::new(ReportHeader::new("validate", &config)?);
    report.external = evaluations;
    report.skipped = skipped_rows(skipped);
    write_report(&mut out, &report)?;
    out.commit(manifest("validate", Some(&config), BTreeMap::new())?)
}

fn compare_capra(cli: &Cli, a: &ModelsArgs) -> Result<()> {
    let (mut config, out_dir) = load_config(cli, "compare-capra")?;
    if cli.modality.is_empty() {
        config.modalities = vec![Modality::Multimodal];
    }
    let models = load_models(&models_dir(a, &config), &config)?;
    let mut report = RunReport::new(ReportHeader::new("compare-capra", &config)?);
    for cohort in externals(cli, &config)? {
        for fm in &models {
            if !cohort.supports(fm.modality) {
                warn!("cohort {} lacks {} inputs; skipping", cohort.name, fm.modality);
                continue;
            }
            let (scores, _) = ensemble_scores(&fm.models, &cohort, &config)?;
            let boot = BootstrapConfig {
                n_resamples: config.n_bootstrap,
                level: config.ci_level,
                seed: derive_seed(config.seed, &[bcr_core::rng::name_hash(&cohort.name), bcr_core::rng::name_hash("capra")]),
            };
            let c = compare_with_capra(&cohort.records, &scores, config.horizon_years, boot)?;
            report.comparison.push((format!("{} / {}", cohort.name, fm.modality), c));
        }
    }
    let mut out = OutputSet::create(&out_dir)?;
    write_report(&mut out, &report)?;
    out.commit(manifest("compare-capra", Some(&config), BTreeMap::new())?)
}

fn stratify_cmd(cli: &Cli, a: &StratifyArgs) -> Result<()> {
    let mut tables = Vec::new();
    let (config, out_dir) = match &a.scores {
        Some(path) => {
            let rows = load_scores(path)?;
            let times: Vec<f64> = rows.iter().map(|r| r.time_years).collect();
            let events: Vec<bool> = rows.iter().map(|r| r.event).collect();
            let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
            let name = cli.cohort.clone().unwrap_or_else(|| path.display().to_string());
            let modality = cli.modality.first().copied().unwrap_or(Modality::Multimodal);
            tables.push((name, modality, stratify(&times, &events, &scores, a.horizon)?));
            (None, require_out(cli)?)
        }
        None => {
            let (config, out_dir) = load_config(cli, "stratify")?;
            let models = load_models(&models_dir(&a.models, &config), &config)?;
            for cohort in externals(cli, &config)? {
                for fm in models.iter().filter(|fm| cohort.supports(fm.modality)) {
                    let (scores, _) = ensemble_scores(&fm.models, &cohort, &config)?;
                    let t = stratify(&cohort.times(), &cohort.events(), &scores, config.horizon_years)?;
                    tables.push((cohort.name.clone(), fm.modality, t));
                }
            }
            (Some(config), out_dir)
        }
    };
    let mut out = OutputSet::create(&out_dir)?;
    out.write("stratification.json", serde_json::to_string_pretty(&tables)?.as_bytes())?;
    let text: Vec<String> = tables.iter().map(|(c, m, t)| render_stratification(c, *m, t)).collect();
    out.write("stratification.txt", text.join("\n").as_bytes())?;
    let mut km = csv::Writer::from_writer(Vec::new());
    km.write_record(["cohort", "modality", "quartile", "time", "survival"])?;
    for (cohort, m, t) in &tables {
        for s in &t.km {
            for (time, surv) in &s.points {
                km.write_record([cohort.as_str(), m.name(), s.quartile.label(), &time.to_string(), &surv.to_string()])?;
            }
        }
    }
    out.write("km.csv", &km.into_inner().map_err(|e| Error::io("km.csv", e.into_error()))?)?;
    let p = params(&[("scores", a.scores.as_ref().map_or(String::new(), |p| p.display().to_string()))]);
    out.commit(manifest("stratify", config.as_ref(), p)?)
}

fn report(cli: &Cli, a: &ReportArgs) -> Result<()> {
    let out_dir = require_out(cli)?;
    let report = RunReport::load(&a.input)?;
    let mut out = OutputSet::create(&out_dir)?;
    out.write("report.txt", report.render_text().as_bytes())?;
    if !report.cv_folds.is_empty() {
        out.write("cv_folds.csv", &cv_folds_csv(&report)?)?;
    }
    out.write("km.csv", &km_csv(&report)?)?;
    out.write("roc.csv", &roc_csv(&report)?)?;
    out.write("violin.csv", &violin_csv(&report)?)?;
    let p = params(&[("input", a.input.display().to_string())]);
    out.commit(manifest("report", None, p)?)
}
