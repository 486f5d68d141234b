//! Synthetic cohorts with a planted, analytically known risk signal.
//!
//! Each patient gets a signal fraction `f ~ U[lo, hi]`; that share of its tiles
//! is `strength * direction + noise`, the rest pure noise. True risk is
//! `beta * f` (plus an optional CAPRA-S term) and event times are exponential
//! with hazard `baseline_hazard * exp(risk)`.

use rand::Rng;
use rand::seq::SliceRandom;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::bag::{EmbeddingBag, Provenance};
use crate::cohort::{capra_s_score, CapraSInputs, ClinicalFeatures, CohortRecord, SurvivalOutcome};
use crate::error::{Error, Result};
use crate::rng::{name_hash, rng_for};

/// CAPRA-S scores enter the true risk centered at this value.
const CAPRA_CENTER: f64 = 4.0;
// Standard-normal quintile cut points mapping a latent grade score to ISUP 1..5.
const ISUP_CUTS: [f64; 4] = [-0.8416, -0.2533, 0.2533, 0.8416];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSignalSpec {
    pub dim: usize,
    pub signal_direction: Vec<f64>,
    pub signal_strength: f64,
    pub signal_tile_fraction_range: (f64, f64),
    pub noise_std: f64,
    pub beta: f64,
    pub baseline_hazard: f64,
    /// Administrative end of follow-up (years).
    pub censor_horizon: f64,
    /// Upper bound of the independent uniform censoring time.
    pub censor_uniform_max: f64,
    /// Strength of the link between the latent clinical grade and `f`.
    pub clinical_coupling: f64,
    /// Log-hazard per CAPRA-S point (centered); 0 leaves risk purely image-driven.
    pub capra_beta: f64,
    pub with_clinical: bool,
    pub with_capra: bool,
    pub slides_per_patient: usize,
}

impl SyntheticSignalSpec {
    /// Defaults with a random unit signal direction drawn from `direction_seed`.
    pub fn new(dim: usize, direction_seed: u64) -> Self {
        let mut rng = rng_for(direction_seed, &[name_hash("signal-direction")]);
        let mut dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|v| *v /= norm);
        SyntheticSignalSpec {
            dim,
            signal_direction: dir,
            signal_strength: 1.0,
            signal_tile_fraction_range: (0.0, 1.0),
            noise_std: 1.0,
            beta: 3.0,
            baseline_hazard: 0.1,
            censor_horizon: 10.0,
            censor_uniform_max: 15.0,
            clinical_coupling: 0.0,
            capra_beta: 0.0,
            with_clinical: true,
            with_capra: false,
            slides_per_patient: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.dim == 0 || self.signal_direction.len() != self.dim {
            return bad(format!(
                "signal direction has {} entries for dim {}",
                self.signal_direction.len(),
                self.dim
            ));
        }
        let norm = self.signal_direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return bad(format!("signal direction norm {norm} is not 1"));
        }
        let (lo, hi) = self.signal_tile_fraction_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return bad(format!("signal fraction range [{lo}, {hi}] is invalid"));
        }
        if !(self.noise_std > 0.0 && self.baseline_hazard > 0.0) {
            return bad("noise_std and baseline_hazard must be positive".into());
        }
        if !(self.censor_horizon > 0.0 && self.censor_uniform_max > 0.0) {
            return bad("censoring bounds must be positive".into());
        }
        if self.slides_per_patient == 0 {
            return bad("slides_per_patient must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub records: Vec<CohortRecord>,
    /// Per-slide bags; slide `k` of patient `i` is `bags[i * slides + k]`.
    pub bags: Vec<EmbeddingBag>,
    pub true_risk: Vec<f64>,
    pub signal_fraction: Vec<f64>,
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform on (0, 1].
fn open_unit(rng: &mut impl Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

fn synth_capra(rng: &mut impl Rng, psa: f64) -> CapraSInputs {
    let primary = match rng.random::<f64>() {
        u if u < 0.55 => 3,
        u if u < 0.9 => 4,
        _ => 5,
    };
    let secondary = match rng.random::<f64>() {
        u if u < 0.5 => 3,
        u if u < 0.9 => 4,
        _ => 5,
    };
    CapraSInputs::complete(
        psa,
        primary,
        secondary,
        rng.random_bool(0.3),
        rng.random_bool(0.35),
        rng.random_bool(0.12),
        rng.random_bool(0.05),
    )
}

pub fn generate_synthetic_cohort(
    spec: &SyntheticSignalSpec,
    n_patients: usize,
    tiles_per_patient: (usize, usize),
    seed: u64,
) -> Result<SyntheticCohort> {
    spec.validate()?;
    if n_patients < 10 {
        return Err(Error::Precondition(format!(
            "synthetic cohorts need at least 10 patients, got {n_patients}"
        )));
    }
    let (tmin, tmax) = tiles_per_patient;
    if tmin < spec.slides_per_patient || tmin > tmax {
        return Err(Error::Precondition(format!(
            "tile range [{tmin}, {tmax}] cannot fill {} slides",
            spec.slides_per_patient
        )));
    }
    let (lo, hi) = spec.signal_tile_fraction_range;
    let f_mid = 0.5 * (lo + hi);
    let f_sd = (hi - lo) / 12f64.sqrt();
    let provenance = Provenance::Synthetic(spec.dim as u32);

    let mut out = SyntheticCohort {
        records: Vec::with_capacity(n_patients),
        bags: Vec::with_capacity(n_patients * spec.slides_per_patient),
        true_risk: Vec::with_capacity(n_patients),
        signal_fraction: Vec::with_capacity(n_patients),
    };
    for i in 0..n_patients {
        let mut rng = rng_for(seed, &[i as u64]);
        let patient_id = format!("P{:05}", i + 1);
        let f = lo + (hi - lo) * rng.random::<f64>();
        let n_tiles = rng.random_range(tmin..=tmax);
        let n_signal = (f * n_tiles as f64).round() as usize;

        let mut tiles: Vec<Vec<f32>> = (0..n_tiles)
            .map(|k| {
                let shift = if k < n_signal { spec.signal_strength } else { 0.0 };
                spec.signal_direction
                    .iter()
                    .map(|&d| (shift * d + spec.noise_std * normal(&mut rng)) as f32)
                    .collect()
            })
            .collect();
        tiles.shuffle(&mut rng);

        let z = if f_sd > 0.0 { (f - f_mid) / f_sd } else { 0.0 };
        let latent = spec.clinical_coupling * z + normal(&mut rng);
        let age = (65.0 + 7.0 * normal(&mut rng)).clamp(40.0, 90.0);
        let psa = (7f64.ln() + 0.35 * latent + 0.5 * normal(&mut rng)).exp().max(0.1);
        let isup = 1 + ISUP_CUTS.iter().filter(|&&c| latent > c).count() as u8;
        let clinical = spec
            .with_clinical
            .then(|| ClinicalFeatures::new(age, psa, isup))
            .transpose()?;
        let capra = spec.with_capra.then(|| synth_capra(&mut rng, psa));

        let mut risk = spec.beta * f;
        if let Some(k) = &capra {
            risk += spec.capra_beta * (capra_s_score(k)?.score as f64 - CAPRA_CENTER);
        }
        let event_time = -open_unit(&mut rng).ln() / (spec.baseline_hazard * risk.exp());
        let censor_time = (spec.censor_uniform_max * open_unit(&mut rng)).min(spec.censor_horizon);
        let outcome = SurvivalOutcome::new(event_time.min(censor_time), event_time <= censor_time)?;

        let slides = spec.slides_per_patient;
        let slide_ids: Vec<String> = (1..=slides).map(|k| format!("{patient_id}-S{k}")).collect();
        for k in 0..slides {
            let range = (k * n_tiles / slides)..((k + 1) * n_tiles / slides);
            out.bags
                .push(EmbeddingBag::from_tiles(patient_id.clone(), provenance, &tiles[range])?);
        }
        out.records.push(CohortRecord {
            patient_id,
            clinical,
            outcome,
            slide_ids,
            capra_s: capra,
        });
        out.true_risk.push(risk);
        out.signal_fraction.push(f);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(dim: usize) -> SyntheticSignalSpec {
        SyntheticSignalSpec::new(dim, 3)
    }

    /// Exponential MLE of the hazard: events over total exposure.
    fn hazard(c: &SyntheticCohort) -> (f64, usize) {
        let events = c.records.iter().filter(|r| r.outcome.event).count();
        let exposure: f64 = c.records.iter().map(|r| r.outcome.time).sum();
        (events as f64 / exposure, events)
    }

    #[test]
    fn deterministic_per_seed() {
        let s = spec(8);
        let a = generate_synthetic_cohort(&s, 30, (5, 9), 11).unwrap();
        let b = generate_synthetic_cohort(&s, 30, (5, 9), 11).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.bags, b.bags);
        assert_eq!(a.true_risk, b.true_risk);
        let c = generate_synthetic_cohort(&s, 30, (5, 9), 12).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn zero_beta_gives_equal_risk() {
        let mut s = spec(4);
        s.beta = 0.0;
        let c = generate_synthetic_cohort(&s, 50, (3, 5), 1).unwrap();
        assert!(c.true_risk.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn two_arm_hazard_ratio() {
        // Exponential data: log-hazard SE per arm is about 1/sqrt(events).
        let mut s = spec(2);
        s.beta = 1.0;
        s.signal_tile_fraction_range = (1.0, 1.0);
        let arm1 = generate_synthetic_cohort(&s, 10_000, (1, 1), 21).unwrap();
        s.signal_tile_fraction_range = (0.0, 0.0);
        let arm0 = generate_synthetic_cohort(&s, 10_000, (1, 1), 22).unwrap();
        let (h1, _) = hazard(&arm1);
        let (h0, _) = hazard(&arm0);
        let ratio = h1 / h0;
        assert!((ratio / 1f64.exp() - 1.0).abs() < 0.10, "ratio {ratio}");
    }

    #[test]
    fn shorter_horizon_fewer_events() {
        let mut s = spec(2);
        let mut rates = Vec::new();
        for horizon in [10.0, 5.0, 2.0] {
            s.censor_horizon = horizon;
            let c = generate_synthetic_cohort(&s, 5000, (1, 1), 5).unwrap();
            rates.push(hazard(&c).1 as f64 / 5000.0);
        }
        for w in rates.windows(2) {
            // Binomial sd of each rate is at most 0.5 / sqrt(5000).
            let sd = (2.0 * 0.25 / 5000.0f64).sqrt();
            assert!(w[0] - w[1] > 3.0 * sd, "{rates:?}");
        }
    }

    #[test]
    fn signal_tiles_follow_fraction() {
        let mut s = spec(16);
        s.noise_std = 0.01;
        s.signal_strength = 5.0;
        let c = generate_synthetic_cohort(&s, 20, (40, 40), 9).unwrap();
        for (bag, &f) in c.bags.iter().zip(&c.signal_fraction) {
            let n_signal = bag
                .tiles()
                .filter(|t| {
                    t.iter().zip(&s.signal_direction).map(|(&x, &d)| x as f64 * d).sum::<f64>() > 2.5
                })
                .count();
            assert_eq!(n_signal, (f * 40.0).round() as usize);
        }
    }

    #[test]
    fn multi_slide_split() {
        let mut s = spec(3);
        s.slides_per_patient = 3;
        let c = generate_synthetic_cohort(&s, 10, (6, 12), 2).unwrap();
        assert_eq!(c.bags.len(), 30);
        assert_eq!(c.records[0].slide_ids, ["P00001-S1", "P00001-S2", "P00001-S3"]);
        assert!(c.bags.iter().all(|b| b.n_tiles() >= 2));
    }

    #[test]
    fn rejects_bad_spec() {
        let mut s = spec(3);
        s.signal_direction[0] += 0.1;
        assert!(generate_synthetic_cohort(&s, 10, (1, 2), 0).is_err());
        assert!(generate_synthetic_cohort(&spec(3), 9, (1, 2), 0).is_err());
    }
}
