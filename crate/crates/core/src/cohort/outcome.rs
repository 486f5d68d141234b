use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SurvivalOutcome;
use crate::error::{Error, Result};

/// Post-operative PSA measurements, times strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct PsaSeries {
    measurements: Vec<(f64, f64)>,
}

impl PsaSeries {
    pub fn new(measurements: Vec<(f64, f64)>) -> Result<Self> {
        for w in measurements.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Validation(format!(
                    "PSA times must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(&(t, v)) = measurements
            .iter()
            .find(|(t, v)| !t.is_finite() || !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::Validation(format!("invalid PSA measurement ({t}, {v})")));
        }
        Ok(PsaSeries { measurements })
    }

    pub fn measurements(&self) -> &[(f64, f64)] {
        &self.measurements
    }
}

/// Biochemical-recurrence definitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BcrRule {
    /// Two consecutive measurements >= 0.2 ng/mL; the event is dated at the first of the pair.
    TwoConsecutive0_2,
    /// A single measurement >= 0.1 ng/mL.
    Single0_1,
}

pub fn derive_bcr(series: &PsaSeries, rule: BcrRule, followup_end: f64) -> Result<SurvivalOutcome> {
    let m = series.measurements();
    let Some(&(last_time, _)) = m.last() else {
        return Err(Error::Precondition("PSA series is empty".into()));
    };
    if followup_end < last_time {
        return Err(Error::Precondition(format!(
            "follow-up end {followup_end} precedes last measurement at {last_time}"
        )));
    }
    let event_time = match rule {
        BcrRule::TwoConsecutive0_2 => m
            .windows(2)
            .find(|w| w[0].1 >= 0.2 && w[1].1 >= 0.2)
            .map(|w| w[0].0),
        BcrRule::Single0_1 => m.iter().find(|(_, v)| *v >= 0.1).map(|&(t, _)| t),
    };
    match event_time {
        Some(t) => SurvivalOutcome::new(t, true),
        None => SurvivalOutcome::new(followup_end, false),
    }
}

#[derive(Deserialize)]
struct PsaRow {
    patient_id: String,
    time_years: f64,
    psa: f64,
}

/// Reads a long-format `patient_id, time_years, psa` file into per-patient series.
pub fn load_psa_series(path: impl AsRef<Path>) -> Result<BTreeMap<String, PsaSeries>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut grouped: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for row in reader.deserialize::<PsaRow>() {
        let row = row?;
        grouped
            .entry(row.patient_id)
            .or_default()
            .push((row.time_years, row.psa));
    }
    grouped
        .into_iter()
        .map(|(id, mut m)| {
            m.sort_by(|a, b| a.0.total_cmp(&b.0));
            let series = PsaSeries::new(m)
                .map_err(|e| Error::Validation(format!("patient \"{id}\": {e}")))?;
            Ok((id, series))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(v: &[(f64, f64)]) -> PsaSeries {
        PsaSeries::new(v.to_vec()).unwrap()
    }

    #[test]
    fn two_consecutive_dated_at_first() {
        let s = series(&[(1.0, 0.05), (2.0, 0.25), (2.5, 0.30)]);
        let o = derive_bcr(&s, BcrRule::TwoConsecutive0_2, 5.0).unwrap();
        assert_eq!(o, SurvivalOutcome { time: 2.0, event: true });
    }

    #[test]
    fn non_adjacent_rise_is_censored() {
        let s = series(&[(1.0, 0.05), (2.0, 0.25), (2.5, 0.10)]);
        let o = derive_bcr(&s, BcrRule::TwoConsecutive0_2, 5.0).unwrap();
        assert_eq!(o, SurvivalOutcome { time: 5.0, event: false });
    }

    #[test]
    fn single_threshold() {
        let o = derive_bcr(&series(&[(1.0, 0.15)]), BcrRule::Single0_1, 5.0).unwrap();
        assert_eq!(o, SurvivalOutcome { time: 1.0, event: true });
    }

    #[test]
    fn empty_series_rejected() {
        let s = PsaSeries::new(vec![]).unwrap();
        assert!(matches!(
            derive_bcr(&s, BcrRule::Single0_1, 5.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn followup_before_last_measurement_rejected() {
        let s = series(&[(1.0, 0.0), (6.0, 0.0)]);
        assert!(derive_bcr(&s, BcrRule::Single0_1, 5.0).is_err());
    }

    #[test]
    fn unordered_times_rejected() {
        assert!(PsaSeries::new(vec![(2.0, 0.1), (1.0, 0.1)]).is_err());
    }

    #[test]
    fn reads_long_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("psa.csv");
        std::fs::write(
            &p,
            "patient_id,time_years,psa\nA,2.0,0.25\nA,1.0,0.05\nA,2.5,0.3\nB,1.0,0.0\n",
        )
        .unwrap();
        let all = load_psa_series(&p).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all["A"].measurements()[0], (1.0, 0.05));
        let o = derive_bcr(&all["A"], BcrRule::TwoConsecutive0_2, 5.0).unwrap();
        assert_eq!(o.time, 2.0);
    }

    proptest! {
        #[test]
        fn raising_psa_never_removes_an_event(
            values in prop::collection::vec(0.0f64..0.5, 1..12),
            idx in 0usize..12,
            bump in 0.0f64..0.5,
            rule in prop_oneof![Just(BcrRule::TwoConsecutive0_2), Just(BcrRule::Single0_1)],
        ) {
            let m: Vec<(f64, f64)> = values.iter().enumerate().map(|(i, &v)| (1.0 + i as f64, v)).collect();
            let end = m.len() as f64 + 1.0;
            let before = derive_bcr(&PsaSeries::new(m.clone()).unwrap(), rule, end).unwrap();
            let mut raised = m;
            let i = idx % raised.len();
            raised[i].1 += bump;
            let after = derive_bcr(&PsaSeries::new(raised).unwrap(), rule, end).unwrap();
            if before.event {
                prop_assert!(after.event);
                prop_assert!(after.time <= before.time);
            }
        }
    }
}
