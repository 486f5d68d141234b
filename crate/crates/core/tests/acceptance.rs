//! Acceptance criteria 1-10. Runs without the libtest harness so each
//! criterion prints exactly one PASS/FAIL line; exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use bcr_core::cohort::{read_manifest, write_manifest, CapraSInputs, ClinicalFeatures, CohortRecord, SurvivalOutcome};
use bcr_core::model::{
    cox_loss, cox_loss_with_grad, gradients, read_checkpoint, write_checkpoint, Architecture, Modality, ModelInput,
    RiskModel, TileMatrix, TrainConfig,
};
use bcr_core::pipeline::{
    compare_with_capra, ensemble_scores, final_train_and_validate, nested_cv, train_final_models, Cohort, CohortRole,
    CohortSource, CvOutcome, ExperimentConfig,
};
use bcr_core::rng::rng_for;
use bcr_core::survstats::{
    bootstrap, c_index, concordance, cox_fit, km_estimate, likelihood_ratio_test, logrank_test, time_dependent_auc,
    BootstrapConfig, Quartile, SurvivalDataset,
};
use bcr_core::tiling::{decode_store, encode_store, generate_synthetic_cohort, SyntheticSignalSpec};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn fmt_err(e: bcr_core::Error) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- fixtures

/// Strong planted signal: a dim-64 direction at strength 3 in a U(0, 1)
/// fraction of 50 tiles, log-hazard 20 per unit fraction, hazard centered.
fn strong_spec() -> SyntheticSignalSpec {
    let mut spec = SyntheticSignalSpec::new(64, 1);
    spec.beta = 20.0;
    spec.signal_strength = 3.0;
    spec.baseline_hazard = 0.14 * (-spec.beta / 2.0f64).exp();
    spec
}

fn null_spec() -> SyntheticSignalSpec {
    let mut spec = strong_spec();
    spec.beta = 0.0;
    spec.baseline_hazard = 0.14;
    spec
}

fn cohort(name: &str, role: CohortRole, spec: &SyntheticSignalSpec, n: usize, seed: u64) -> Cohort {
    let synth = generate_synthetic_cohort(spec, n, (50, 50), seed).expect("synthetic cohort");
    Cohort::from_synthetic(name, role, synth).expect("cohort")
}

/// Reduced-epoch training settings used by the end-to-end criteria.
fn experiment(seed: u64, modality: Modality) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(CohortSource {
        name: "dev".into(),
        manifest: "manifest.csv".into(),
        embeddings: None,
    });
    cfg.seed = seed;
    cfg.modalities = vec![modality];
    cfg.train = TrainConfig {
        learning_rate: 1e-3,
        batch_size_bags: 32,
        min_epochs: 20,
        max_epochs: 60,
        attention_hidden: 32,
        head_hidden: 32,
        fusion_hidden: 32,
        ..TrainConfig::default()
    };
    cfg
}

fn cv_means(cv: &CvOutcome) -> (f64, f64) {
    let n = cv.folds.len() as f64;
    (
        cv.folds.iter().map(|f| f.test_c_index).sum::<f64>() / n,
        cv.folds.iter().map(|f| f.test_auc).sum::<f64>() / n,
    )
}

// ---------------------------------------------------------------- criterion 1

fn random_batch(rng: &mut impl Rng, dim: usize) -> (Vec<ModelInput<f64>>, Vec<f64>, Vec<bool>) {
    let n = rng.random_range(2..=8);
    let mut inputs = Vec::with_capacity(n);
    for _ in 0..n {
        let tiles = rng.random_range(1..=6);
        let data: Vec<f64> = (0..tiles * dim).map(|_| rng.sample(StandardNormal)).collect();
        let z = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        inputs.push(ModelInput::multimodal(TileMatrix::new(tiles, dim, data).unwrap(), z));
    }
    let times: Vec<f64> = (0..n).map(|_| rng.random_range(1..=4) as f64).collect();
    let mut events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
    let k = rng.random_range(0..n);
    events[k] = true;
    (inputs, times, events)
}

fn loss_at(arch: Architecture, params: &[f64], inputs: &[ModelInput<f64>], t: &[f64], e: &[bool]) -> f64 {
    let m = RiskModel::from_parameters(arch, params.to_vec(), None).unwrap();
    let s = m.predict_all(inputs).unwrap();
    cox_loss_with_grad(&s, t, e, None).unwrap().0
}

fn central_difference(arch: Architecture, p: &[f64], k: usize, h: f64, x: &[ModelInput<f64>], t: &[f64], e: &[bool]) -> f64 {
    let mut up = p.to_vec();
    up[k] += h;
    let mut dn = p.to_vec();
    dn[k] -= h;
    (loss_at(arch, &up, x, t, e) - loss_at(arch, &dn, x, t, e)) / (2.0 * h)
}

fn criterion_1() -> Outcome {
    const DRAWS: usize = 100;
    const PER_SEGMENT: usize = 3;
    let tol = |a: f64, n: f64| 1e-4 * a.abs().max(n.abs()) + 1e-8;
    let dim = 5;
    let mut checked = 0usize;
    let mut kinks = 0usize;
    for modality in Modality::ALL {
        let arch = Architecture {
            attention_hidden: 6,
            head_hidden: 5,
            fusion_hidden: 7,
            ..Architecture::new(modality, dim)
        };
        for draw in 0..DRAWS {
            let mut rng = rng_for(1, &[modality as u64, draw as u64]);
            let model = RiskModel::<f64>::new(arch, rng.random()).map_err(fmt_err)?;
            let (inputs, t, e) = random_batch(&mut rng, dim);
            let g = gradients(&model, &inputs, &t, &e).map_err(fmt_err)?;
            let p = model.parameters().to_vec();
            for seg in model.layout().segments() {
                let mut coords: Vec<usize> = seg.range().collect();
                coords.shuffle(&mut rng);
                for &k in coords.iter().take(PER_SEGMENT) {
                    let a = g.values[k];
                    let n = central_difference(arch, &p, k, 1e-6, &inputs, &t, &e);
                    checked += 1;
                    if (a - n).abs() <= tol(a, n) {
                        continue;
                    }
                    // A ReLU kink inside the stencil makes the difference
                    // step-size dependent; a smooth mismatch is a real failure.
                    let n2 = central_difference(arch, &p, k, 1e-7, &inputs, &t, &e);
                    if (n - n2).abs() > tol(n, n2) {
                        kinks += 1;
                        continue;
                    }
                    return Err(format!(
                        "{modality} draw {draw}: {} analytic {a:e} vs numeric {n:e}",
                        model.layout().path_of(k)
                    ));
                }
            }
        }
    }
    ensure(kinks * 100 < checked, format!("{kinks} of {checked} coordinates sat on a kink"))?;
    Ok(format!(
        "{DRAWS} draws x 3 modalities, {checked} coordinates within rel 1e-4 ({kinks} skipped at ReLU kinks)"
    ))
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Outcome {
    let o = |v: &[(f64, bool)]| -> Vec<SurvivalOutcome> {
        v.iter().map(|&(t, e)| SurvivalOutcome::new(t, e).unwrap()).collect()
    };
    let two = o(&[(1.0, true), (2.0, false)]);
    let l0 = cox_loss(&[0.0, 0.0], &two).map_err(fmt_err)?;
    ensure((l0 - 2f64.ln()).abs() <= 1e-9, format!("loss at zero scores {l0}"))?;
    let l5 = cox_loss(&[5.0, 0.0], &two).map_err(fmt_err)?;
    let closed = (1.0 + (-5f64).exp()).ln();
    ensure((l5 - closed).abs() <= 1e-9, format!("loss at (5, 0) {l5} vs {closed}"))?;
    ensure(format!("{l5:.6}") == "0.006715", format!("loss at (5, 0) rounds to {l5:.6}"))?;

    let mut rng = rng_for(2, &[]);
    let mut worst = 0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=40);
        let s: Vec<f64> = (0..n).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(1..=10) as f64).collect();
        let mut e: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        e[0] = true;
        let c = rng.random_range(-50.0..50.0);
        let shifted: Vec<f64> = s.iter().map(|v| v + c).collect();
        let a = cox_loss_with_grad(&s, &t, &e, None).map_err(fmt_err)?.0;
        let b = cox_loss_with_grad(&shifted, &t, &e, None).map_err(fmt_err)?.0;
        worst = worst.max((a - b).abs());
    }
    ensure(worst <= 1e-9, format!("shift changed the loss by {worst:e}"))?;
    Ok(format!("log 2 and 0.006715 within 1e-9; max shift deviation {worst:.1e} over 1000 batches"))
}

// ---------------------------------------------------------------- criterion 3

/// Harrell pairs by enumeration: the earlier time must be an event; equal
/// times are comparable only when exactly the first is an event.
fn c_oracle(t: &[f64], e: &[bool], s: &[f64]) -> Option<f64> {
    let (mut conc, mut tied, mut total) = (0u64, 0u64, 0u64);
    for i in 0..t.len() {
        for j in 0..t.len() {
            if i == j || !e[i] || !(t[i] < t[j] || (t[i] == t[j] && !e[j])) {
                continue;
            }
            total += 1;
            if s[i] > s[j] {
                conc += 1;
            } else if s[i] == s[j] {
                tied += 1;
            }
        }
    }
    (total > 0).then(|| (2 * conc + tied) as f64 / (2 * total) as f64)
}

/// Uncensored binary AUC by enumeration of (case, control) pairs.
fn auc_oracle(t: &[f64], s: &[f64], h: f64) -> Option<f64> {
    let cases: Vec<usize> = (0..t.len()).filter(|&i| t[i] <= h).collect();
    let controls: Vec<usize> = (0..t.len()).filter(|&i| t[i] > h).collect();
    if cases.is_empty() || controls.is_empty() {
        return None;
    }
    let mut halves = 0u64;
    for &i in &cases {
        for &j in &controls {
            halves += if s[i] > s[j] { 2 } else if s[i] == s[j] { 1 } else { 0 };
        }
    }
    Some(halves as f64 / 2.0 / (cases.len() * controls.len()) as f64)
}

/// Calls `f` on every weak ordering of `n` subjects, as time ranks 1..=k.
fn for_each_weak_ordering(n: usize, f: &mut impl FnMut(&[f64], usize)) {
    let mut ranks = vec![1usize; n];
    loop {
        let k = *ranks.iter().max().unwrap();
        let mut seen = vec![false; k + 1];
        ranks.iter().for_each(|&r| seen[r] = true);
        if seen[1..].iter().all(|&x| x) {
            let t: Vec<f64> = ranks.iter().map(|&r| r as f64).collect();
            f(&t, k);
        }
        let mut i = 0;
        while i < n && ranks[i] == n {
            ranks[i] = 1;
            i += 1;
        }
        if i == n {
            return;
        }
        ranks[i] += 1;
    }
}

fn criterion_3() -> Outcome {
    let scores = [0.3, -1.2, 0.3, 2.0, 0.7, -1.2, 0.0, 1.1];
    let mut datasets = 0usize;
    let mut auc_cases = 0usize;
    let mut mismatch: Option<String> = None;
    for n in 2..=8 {
        let s = &scores[..n];
        let e = vec![true; n];
        for_each_weak_ordering(n, &mut |t, k| {
            if mismatch.is_some() {
                return;
            }
            datasets += 1;
            let got = concordance(t, &e, s).unwrap().index();
            if got != c_oracle(t, &e, s) {
                mismatch = Some(format!("c_index t={t:?}: {got:?}"));
                return;
            }
            let ds = SurvivalDataset::new(t.to_vec(), e.clone()).unwrap().with_scores(s.to_vec()).unwrap();
            for cut in 1..k {
                let h = cut as f64 + 0.5;
                auc_cases += 1;
                let got = time_dependent_auc(&ds, h).ok();
                if got != auc_oracle(t, s, h) {
                    mismatch = Some(format!("AUC t={t:?} h={h}: {got:?}"));
                    return;
                }
            }
        });
    }
    if let Some(m) = mismatch {
        return Err(m);
    }

    let mut rng = rng_for(3, &[]);
    for inst in 0..500 {
        let n = rng.random_range(2..=30);
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(1..=8) as f64).collect();
        let e: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64 * 0.5).collect();
        let got = concordance(&t, &e, &s).map_err(fmt_err)?.index();
        ensure(got == c_oracle(&t, &e, &s), format!("censored instance {inst}: {got:?}"))?;
    }
    Ok(format!(
        "exact on {datasets} uncensored datasets (n <= 8, {auc_cases} AUC horizons) and 500 censored instances"
    ))
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4() -> Outcome {
    // Uncensored: S drops to (remaining / n) at each event time.
    let ds = SurvivalDataset::new(vec![1.0, 2.0, 2.0, 3.0, 5.0, 8.0], vec![true; 6]).unwrap();
    let km = km_estimate(&ds).map_err(fmt_err)?;
    ensure(km.times == [1.0, 2.0, 3.0, 5.0, 8.0], format!("times {:?}", km.times))?;
    let expected = [5.0 / 6.0, 3.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0, 0.0];
    ensure(km.survival == expected, format!("uncensored survival {:?}", km.survival))?;
    ensure(km.at_risk == [6, 5, 3, 2, 1], format!("at risk {:?}", km.at_risk))?;

    // Censored: 8 at risk, 2 events at t=1 (3/4); 2 censored at t=2; 4 at
    // risk, 1 event at t=3 (3/4 * 3/4); 1 censored at 4; 2 at risk, 1 event
    // at 5 (9/16 * 1/2); last subject censored at 6.
    let ds = SurvivalDataset::new(
        vec![1.0, 1.0, 2.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        vec![true, true, false, false, true, false, true, false],
    )
    .unwrap();
    let km = km_estimate(&ds).map_err(fmt_err)?;
    ensure(km.times == [1.0, 3.0, 5.0], format!("times {:?}", km.times))?;
    ensure(km.survival == [0.75, 0.5625, 0.28125], format!("censored survival {:?}", km.survival))?;
    ensure(km.survival_at(2.5) == 0.75 && km.survival_before(3.0) == 0.75, "step function lookup")?;

    let g = SurvivalDataset::<f64>::new(
        vec![0.5, 1.2, 1.2, 2.0, 3.3, 4.1, 4.1, 6.0],
        vec![true, true, false, true, false, true, true, false],
    )
    .unwrap();
    let lr = logrank_test(&[g.clone(), g]).map_err(fmt_err)?;
    ensure(
        lr.chi_square.abs() <= 1e-12 && (lr.p_value - 1.0).abs() <= 1e-12,
        format!("identical groups: chi2 {:e}, p {}", lr.chi_square, lr.p_value),
    )?;
    Ok(format!("product-limit fixtures exact; identical groups chi2 {:.1e}, p {}", lr.chi_square, lr.p_value))
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5() -> Outcome {
    let mut rng = rng_for(5, &[]);
    let n = 2000;
    let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut t = Vec::with_capacity(n);
    let mut e = Vec::with_capacity(n);
    for &xi in &x {
        let event = -(1.0 - rng.random::<f64>()).ln() / (0.1 * xi.exp());
        let censor = 20.0 * (1.0 - rng.random::<f64>());
        t.push(event.min(censor));
        e.push(event <= censor);
    }
    let base = SurvivalDataset::new(t, e).unwrap();
    let one = base.clone().with_covariates(x.iter().map(|&v| vec![v]).collect()).unwrap();
    let fit = cox_fit(&one).map_err(fmt_err)?;
    let b = fit.coefficients[0];
    ensure((0.85..=1.15).contains(&b), format!("beta-hat {b}"))?;

    let two = base.with_covariates(x.iter().map(|&v| vec![v, 3.0]).collect()).unwrap();
    let full = cox_fit(&two).map_err(fmt_err)?;
    let df = full.n_estimated() - fit.n_estimated();
    let lr = likelihood_ratio_test(&full, &fit, df).map_err(fmt_err)?;
    ensure(lr.chi_square <= 1e-6, format!("zero-variance covariate chi2 {:e}", lr.chi_square))?;
    Ok(format!(
        "beta-hat {b:.4} (SE {:.4}); zero-variance covariate chi2 {:.1e}",
        fit.std_errors[0], lr.chi_square
    ))
}

// ---------------------------------------------------------------- criterion 6

fn criterion_6() -> Outcome {
    let dev = cohort("strong", CohortRole::Development, &strong_spec(), 300, 60);
    let cv = nested_cv(&dev, Modality::Image, &experiment(6, Modality::Image)).map_err(fmt_err)?;
    let (c, auc) = cv_means(&cv);
    ensure(c > 0.85 && auc > 0.85, format!("planted signal: C-index {c:.3}, AUC {auc:.3}"))?;

    let mut cs = Vec::new();
    let mut aucs = Vec::new();
    for seed in 0..10 {
        let null = cohort("null", CohortRole::Development, &null_spec(), 300, 600 + seed);
        let cv = nested_cv(&null, Modality::Image, &experiment(600 + seed, Modality::Image)).map_err(fmt_err)?;
        let (c, a) = cv_means(&cv);
        cs.push(c);
        aucs.push(a);
    }
    let band = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        (m, 3.0 * sd / n.sqrt())
    };
    let (mc, wc) = band(&cs);
    let (ma, wa) = band(&aucs);
    let inside = |m: f64, w: f64| m - w >= 0.4 && m + w <= 0.6;
    ensure(
        inside(mc, wc) && inside(ma, wa),
        format!("null: C-index {mc:.3} +/- {wc:.3}, AUC {ma:.3} +/- {wa:.3} (3 SE over 10 seeds)"),
    )?;
    Ok(format!(
        "signal C-index {c:.3}, AUC {auc:.3}; null C-index {mc:.3} +/- {wc:.3}, AUC {ma:.3} +/- {wa:.3}"
    ))
}

// ---------------------------------------------------------------- criterion 7

fn capra_spec(beta: f64) -> SyntheticSignalSpec {
    let mut spec = strong_spec();
    spec.with_capra = true;
    spec.capra_beta = 0.3;
    spec.beta = beta;
    spec.baseline_hazard = 0.14 * (-beta / 2.0).exp();
    spec
}

fn criterion_7() -> Outcome {
    let cfg = experiment(7, Modality::Image);
    let dev = cohort("dev", CohortRole::Development, &capra_spec(20.0), 300, 70);
    let fm = train_final_models(&dev, Modality::Image, &cfg).map_err(fmt_err)?;
    let boot = BootstrapConfig {
        n_resamples: 50,
        level: 0.95,
        seed: 7,
    };
    let compare = |ext: &Cohort| {
        let (scores, _) = ensemble_scores(&fm.models, ext, &cfg)?;
        compare_with_capra(&ext.records, &scores, cfg.horizon_years, boot)
    };
    let ext = cohort("ext", CohortRole::External, &capra_spec(20.0), 300, 71);
    let signal = compare(&ext).map_err(fmt_err)?;
    ensure(signal.lrt.p_value < 0.01, format!("independent components: LRT p {:e}", signal.lrt.p_value))?;

    // Null: outcome driven by CAPRA-S alone; the image signal still varies
    // between patients, so the AI score is informative about nothing.
    let mut ps = Vec::with_capacity(50);
    for seed in 0..50 {
        let ext = cohort("null", CohortRole::External, &capra_spec(0.0), 300, 700 + seed);
        ps.push(compare(&ext).map_err(fmt_err)?.lrt.p_value);
    }
    ps.sort_by(f64::total_cmp);
    let median = 0.5 * (ps[24] + ps[25]);
    ensure((0.2..=0.8).contains(&median), format!("null median LRT p {median:.3}"))?;
    Ok(format!(
        "signal LRT chi2 {:.1} p {:.1e}; null median p {median:.3} over 50 cohorts",
        signal.lrt.chi_square, signal.lrt.p_value
    ))
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8() -> Outcome {
    let mut cfg = experiment(8, Modality::Image);
    cfg.n_bootstrap = 200;
    let dev = cohort("dev", CohortRole::Development, &strong_spec(), 300, 80);
    let ext = cohort("ext", CohortRole::External, &strong_spec(), 300, 81);
    let run = final_train_and_validate(&dev, &[ext], &cfg).map_err(fmt_err)?;
    let table = &run.evaluations[0].stratification;
    ensure(table.rows.len() == 4, "quartile table must have 4 rows")?;
    let s: Vec<f64> = table.rows.iter().map(|r| r.survival_at_horizon).collect();
    ensure(s.windows(2).all(|w| w[0] >= w[1]), format!("5-year survival by quartile {s:?}"))?;
    ensure(table.q1_vs_q4_p < 0.05, format!("Q1 vs Q4 log-rank p {}", table.q1_vs_q4_p))?;
    let label = |q: Quartile| q.label();
    Ok(format!(
        "S(5y) {}={:.2} {}={:.2} {}={:.2} {}={:.2}; Q1 vs Q4 p {:.1e}",
        label(Quartile::Q1),
        s[0],
        label(Quartile::Q2),
        s[1],
        label(Quartile::Q3),
        s[2],
        label(Quartile::Q4),
        s[3],
        table.q1_vs_q4_p
    ))
}

// ---------------------------------------------------------------- criterion 9

fn bcr(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_bcr"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        out.status.success(),
        format!("bcr {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)),
    )
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    bcr(&["synth", "--patients", "200", "--seed", "9", "--out", "dev"], dir)?;
    let config = r#"
seed = 9
modalities = ["image", "multimodal"]
[development]
name = "dev"
manifest = "dev/manifest.csv"
embeddings = "dev/embeddings.bin"
[train]
learning_rate = 1e-3
batch_size_bags = 32
min_epochs = 5
max_epochs = 10
attention_hidden = 16
head_hidden = 16
fusion_hidden = 16
"#;
    std::fs::write(dir.join("cv.toml"), config).map_err(|e| e.to_string())?;
    bcr(&["cv", "--config", "cv.toml", "--out", "a"], dir)?;
    bcr(&["cv", "--config", "cv.toml", "--out", "b"], dir)?;
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir.join("a")).map_err(|e| e.to_string())? {
        let name = entry.map_err(|e| e.to_string())?.file_name();
        let a = std::fs::read(dir.join("a").join(&name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dir.join("b").join(&name)).map_err(|e| e.to_string())?;
        ensure(a == b, format!("{} differs between runs", name.to_string_lossy()))?;
        files.push(name.to_string_lossy().into_owned());
    }
    files.sort();
    ensure(files.iter().any(|f| f == "report.json"), "cv wrote no report.json")?;

    let mut rng = rng_for(9, &[]);
    let n = 150;
    let t: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
    let e: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    let s: Vec<f64> = t.iter().map(|x| -x + rng.sample::<f64, _>(StandardNormal)).collect();
    let ds = SurvivalDataset::new(t, e).unwrap().with_scores(s).unwrap();
    let cfg = BootstrapConfig {
        n_resamples: 500,
        level: 0.95,
        seed: 99,
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| bootstrap("c_index", &ds, c_index, cfg, None))
            .unwrap()
    };
    let one = run(1);
    ensure(one == run(1), "bootstrap differs on repeat")?;
    ensure(one == run(4), "bootstrap differs between 1 and 4 threads")?;
    ensure(one == run(8), "bootstrap differs between 1 and 8 threads")?;
    Ok(format!(
        "cv outputs byte-identical ({}); bootstrap identical under 1/4/8 threads",
        files.join(", ")
    ))
}

// ---------------------------------------------------------------- criterion 10

fn criterion_10() -> Outcome {
    let mut spec = strong_spec();
    spec.slides_per_patient = 2;
    spec.with_capra = true;
    let synth = generate_synthetic_cohort(&spec, 20, (6, 12), 10).map_err(fmt_err)?;
    let first = encode_store(&synth.bags).map_err(fmt_err)?;
    let second = encode_store(&decode_store(&first).map_err(fmt_err)?).map_err(fmt_err)?;
    ensure(first == second, "embedding store bytes changed")?;

    let arch = Architecture::new(Modality::Multimodal, 8);
    let model = RiskModel::<f64>::new(arch, 10).map_err(fmt_err)?;
    let mut a = Vec::new();
    write_checkpoint(&model, &mut a).map_err(fmt_err)?;
    let back: RiskModel<f64> = read_checkpoint(&a[..]).map_err(fmt_err)?;
    let mut b = Vec::new();
    write_checkpoint(&back, &mut b).map_err(fmt_err)?;
    ensure(a == b && back == model, "checkpoint bytes changed")?;

    let mut records = synth.records.clone();
    records[0].clinical = None;
    records[1].capra_s = Some(CapraSInputs {
        lymph_node_invasion: None,
        ..CapraSInputs::complete(7.25, 3, 4, true, false, false, true)
    });
    records[2].capra_s = None;
    records.push(CohortRecord {
        patient_id: "id, with \"quotes\"".into(),
        clinical: Some(ClinicalFeatures::new(61.5, 0.1 + 0.2, 3).map_err(fmt_err)?),
        outcome: SurvivalOutcome::new(1.0 / 3.0, false).map_err(fmt_err)?,
        slide_ids: vec!["s1".into(), "s2".into()],
        capra_s: None,
    });
    let mut m1 = Vec::new();
    write_manifest(&records, &mut m1).map_err(fmt_err)?;
    let read = read_manifest(&m1[..]).map_err(fmt_err)?;
    let mut m2 = Vec::new();
    write_manifest(&read, &mut m2).map_err(fmt_err)?;
    ensure(m1 == m2, "manifest bytes changed")?;
    ensure(read == records, "manifest records changed")?;
    Ok(format!(
        "store {} B, checkpoint {} B, manifest {} B stable under write-read-write",
        first.len(),
        a.len(),
        m1.len()
    ))
}

// ---------------------------------------------------------------- driver

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 10] = [
        ("gradient correctness", criterion_1, Some(Duration::from_secs(60))),
        ("Cox loss closed forms", criterion_2, None),
        ("metric oracles", criterion_3, Some(Duration::from_secs(120))),
        ("KM / log-rank fixtures", criterion_4, None),
        ("Cox fit recovery", criterion_5, Some(Duration::from_secs(60))),
        ("end-to-end signal recovery", criterion_6, Some(Duration::from_secs(15 * 60))),
        ("multimodal complementarity", criterion_7, Some(Duration::from_secs(10 * 60))),
        ("quartile stratification", criterion_8, None),
        ("determinism", criterion_9, None),
        ("format round-trips", criterion_10, None),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| id.contains(f.as_str()) || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(l)) if elapsed > *l => Err(format!("took {elapsed:.1?}, limit {l:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS {id} ({name}) [{elapsed:.1?}]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id} ({name}) [{elapsed:.1?}]: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
