use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cohort::CohortRecord;
use crate::error::{Error, Result};
use crate::rng::{name_hash, rng_for};

/// Stratified assignment of patients to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub bins: usize,
    pub seed: u64,
    pub fold_of: Vec<usize>,
    /// Composite stratum label per patient, e.g. `e1-b2-isup3`.
    pub strata: Vec<String>,
}

/// Patient indices of one outer fold of nested CV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NestedSplit {
    pub test_fold: usize,
    pub val_fold: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl FoldPlan {
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    /// Test = `fold`, validation = the next fold cyclically, train = the rest.
    pub fn nested_split(&self, fold: usize) -> NestedSplit {
        let val_fold = (fold + 1) % self.k;
        let train = (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold && self.fold_of[i] != val_fold)
            .collect();
        NestedSplit {
            test_fold: fold,
            val_fold,
            train,
            val: self.members(val_fold),
            test: self.members(fold),
        }
    }

    /// Early-stopping split for the final models: `fold` vs everything else.
    pub fn holdout_split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let (held, rest): (Vec<usize>, Vec<usize>) = (0..self.fold_of.len()).partition(|&i| self.fold_of[i] == fold);
        (rest, held)
    }
}

/// Follow-up quantile bin of each patient: ranks (ties by input order) cut
/// into `bins` equal-count groups.
fn followup_bins(records: &[CohortRecord], bins: usize) -> Vec<usize> {
    let n = records.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| records[a].outcome.time.total_cmp(&records[b].outcome.time));
    let mut bin = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        bin[i] = rank * bins / n;
    }
    bin
}

/// Strata are (event, follow-up bin, ISUP). Each stratum is shuffled with
/// its own seeded stream, strata are visited in label order, and one running
/// round-robin counter deals patients to folds, so every stratum and the
/// whole cohort are balanced to within one patient per fold.
pub fn make_folds(records: &[CohortRecord], k: usize, bins: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || records.len() < k {
        return Err(Error::Precondition(format!("{} patients cannot fill {k} folds", records.len())));
    }
    if bins < 2 {
        return Err(Error::Precondition("follow-up stratification needs at least 2 bins".into()));
    }
    let bin = followup_bins(records, bins);
    let strata: Vec<String> = records
        .iter()
        .zip(&bin)
        .map(|(r, b)| {
            let isup = r.clinical.map_or("NA".to_string(), |c| c.isup_grade.to_string());
            format!("e{}-b{}-isup{}", u8::from(r.outcome.event), b, isup)
        })
        .collect();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in strata.iter().enumerate() {
        groups.entry(s.as_str()).or_default().push(i);
    }
    let mut fold_of = vec![0; records.len()];
    let mut counter = 0;
    for (label, mut members) in groups {
        members.shuffle(&mut rng_for(seed, &[name_hash(label)]));
        for i in members {
            fold_of[i] = counter % k;
            counter += 1;
        }
    }
    Ok(FoldPlan {
        k,
        bins,
        seed,
        fold_of,
        strata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{ClinicalFeatures, SurvivalOutcome};
    use proptest::prelude::*;

    fn cohort(n: usize, seed: u64) -> Vec<CohortRecord> {
        use rand::Rng;
        let mut rng = rng_for(seed, &[]);
        (0..n)
            .map(|i| CohortRecord {
                patient_id: format!("P{i}"),
                clinical: Some(ClinicalFeatures::new(60.0, 5.0, 1 + (i % 5) as u8).unwrap()),
                outcome: SurvivalOutcome::new(rng.random_range(0.1..10.0), i % 2 == 0).unwrap(),
                slide_ids: vec![],
                capra_s: None,
            })
            .collect()
    }

    #[test]
    fn event_counts_balanced() {
        let recs = cohort(100, 1);
        let plan = make_folds(&recs, 5, 4, 9).unwrap();
        for f in 0..5 {
            let events = plan.members(f).iter().filter(|&&i| recs[i].outcome.event).count();
            assert!((9..=11).contains(&events), "fold {f}: {events}");
        }
        assert_eq!(plan, make_folds(&recs, 5, 4, 9).unwrap());
    }

    #[test]
    fn leave_one_out_limit() {
        let recs = cohort(7, 2);
        let plan = make_folds(&recs, 7, 2, 0).unwrap();
        for f in 0..7 {
            assert_eq!(plan.members(f).len(), 1);
        }
    }

    #[test]
    fn nested_split_partitions() {
        let recs = cohort(40, 3);
        let plan = make_folds(&recs, 5, 4, 1).unwrap();
        for f in 0..5 {
            let s = plan.nested_split(f);
            assert_eq!(s.val_fold, (f + 1) % 5);
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort();
            assert_eq!(all, (0..40).collect::<Vec<_>>());
        }
    }

    proptest! {
        #[test]
        fn folds_partition_and_balance(n in 5usize..120, k in 2usize..6, bins in 2usize..5, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let recs = cohort(n, seed);
            let plan = make_folds(&recs, k, bins, seed).unwrap();
            prop_assert!(plan.fold_of.iter().all(|&f| f < k));
            let mut per: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, s) in plan.strata.iter().enumerate() {
                per.entry(s.as_str()).or_insert_with(|| vec![0; k])[plan.fold_of[i]] += 1;
            }
            for counts in per.values() {
                prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
            }
        }
    }
}
