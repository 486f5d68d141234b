//! Cumulative/dynamic time-dependent ROC at a fixed horizon with inverse
//! probability of censoring weights. Cases are events at or before the
//! horizon, weighted by 1 / G(t-) where G is the Kaplan-Meier estimate of the
//! censoring distribution; controls are subjects still event-free past the
//! horizon and share one weight, which cancels.

use super::km::{product_limit, TotalCmp};
use super::SurvivalDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

struct Split<T> {
    cases: Vec<(T, T)>,
    controls: Vec<T>,
}

fn split<T: Scalar>(times: &[T], events: &[bool], scores: &[T], horizon: T) -> Result<Split<T>> {
    if !(horizon.is_finite() && horizon > T::zero()) {
        return Err(Error::Precondition(format!("horizon {horizon} must be > 0")));
    }
    let censored: Vec<bool> = events.iter().map(|e| !e).collect();
    let censoring = product_limit(times, &censored);
    let mut cases = Vec::new();
    let mut controls = Vec::new();
    for i in 0..times.len() {
        if events[i] && times[i] <= horizon {
            let g = censoring.survival_before(times[i]);
            if g <= T::zero() {
                return Err(Error::Estimation(format!(
                    "time-dependent AUC: censoring survival is zero before t = {}",
                    times[i]
                )));
            }
            cases.push((scores[i], T::one() / g));
        } else if times[i] > horizon {
            controls.push(scores[i]);
        }
    }
    if cases.is_empty() || controls.is_empty() {
        return Err(Error::Estimation(format!(
            "time-dependent AUC at {horizon}: {} cases, {} controls",
            cases.len(),
            controls.len()
        )));
    }
    controls.sort_by(|a, b| a.total_cmp_value(b));
    Ok(Split { cases, controls })
}

pub fn td_auc_from<T: Scalar>(times: &[T], events: &[bool], scores: &[T], horizon: T) -> Result<T> {
    if times.len() != events.len() || times.len() != scores.len() {
        return Err(Error::Validation("times, events and scores must align".into()));
    }
    let Split { cases, controls } = split(times, events, scores, horizon)?;
    let half = T::lit(0.5);
    let mut numerator = T::zero();
    let mut weight = T::zero();
    for &(s, w) in &cases {
        let below = controls.partition_point(|&c| c < s);
        let not_above = controls.partition_point(|&c| c <= s);
        let credit = T::from_count(below) + half * T::from_count(not_above - below);
        numerator += w * credit;
        weight += w;
    }
    Ok(numerator / (weight * T::from_count(controls.len())))
}

pub fn time_dependent_auc<T: Scalar>(ds: &SurvivalDataset<T>, horizon: T) -> Result<T> {
    td_auc_from(ds.times(), ds.events(), ds.scores()?, horizon)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint<T> {
    pub threshold: T,
    pub false_positive_rate: T,
    pub true_positive_rate: T,
}

/// ROC points at the horizon, one per distinct score threshold (score >= c is
/// called positive), from (0, 0) to (1, 1).
pub fn time_dependent_roc<T: Scalar>(ds: &SurvivalDataset<T>, horizon: T) -> Result<Vec<RocPoint<T>>> {
    let Split { cases, controls } = split(ds.times(), ds.events(), ds.scores()?, horizon)?;
    let mut thresholds: Vec<T> = cases.iter().map(|c| c.0).chain(controls.iter().copied()).collect();
    thresholds.sort_by(|a, b| b.total_cmp_value(a));
    thresholds.dedup();
    let total_w: T = cases.iter().map(|c| c.1).sum();
    let n_controls = T::from_count(controls.len());
    let mut points = vec![RocPoint {
        threshold: T::infinity(),
        false_positive_rate: T::zero(),
        true_positive_rate: T::zero(),
    }];
    for c in thresholds {
        let tp: T = cases.iter().filter(|x| x.0 >= c).map(|x| x.1).sum();
        let fp = controls.len() - controls.partition_point(|&x| x < c);
        points.push(RocPoint {
            threshold: c,
            false_positive_rate: T::from_count(fp) / n_controls,
            true_positive_rate: tp / total_w,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain binary AUC by pair enumeration: (event <= horizon) vs (time > horizon).
    fn oracle(t: &[f64], e: &[bool], s: &[f64], h: f64) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..t.len() {
            if !(e[i] && t[i] <= h) {
                continue;
            }
            for j in 0..t.len() {
                if t[j] > h {
                    den += 1.0;
                    num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        num / den
    }

    fn auc(t: &[f64], e: &[bool], s: &[f64], h: f64) -> Result<f64> {
        td_auc_from(t, e, s, h)
    }

    #[test]
    fn separable_is_one() {
        let t = [1.0, 2.0, 6.0, 7.0];
        assert_eq!(auc(&t, &[true; 4], &[5.0, 4.0, 1.0, 0.0], 5.0).unwrap(), 1.0);
    }

    #[test]
    fn constant_scores_half() {
        let t = [1.0, 2.0, 6.0, 7.0];
        assert_eq!(auc(&t, &[true, false, true, false], &[1.0; 4], 5.0).unwrap(), 0.5);
    }

    #[test]
    fn eight_subject_uncensored_fixture() {
        let t = [0.5, 1.5, 2.0, 3.5, 4.5, 5.5, 6.0, 8.0];
        let s = [0.9, 0.2, 0.7, 0.7, 0.1, 0.3, 0.7, 0.05];
        let e = [true; 8];
        assert_eq!(auc(&t, &e, &s, 5.0).unwrap(), oracle(&t, &e, &s, 5.0));
    }

    #[test]
    fn censoring_reweights_cases() {
        // Censoring at 1.5 lowers G for the later case, raising its weight.
        let t = [1.0, 1.5, 2.0, 6.0, 7.0];
        let e = [true, false, true, true, false];
        let s = [0.0, 0.5, 1.0, 0.5, 0.5];
        // G(1-) = 1, G(2-) = 3/4 -> weights 1, 4/3; credits 0 and 2 of 2 controls.
        let expected = (4.0 / 3.0 * 2.0) / ((1.0 + 4.0 / 3.0) * 2.0);
        assert!((auc(&t, &e, &s, 5.0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn needs_cases_and_controls() {
        assert!(auc(&[1.0, 2.0], &[true, true], &[0.0, 1.0], 5.0).is_err());
        assert!(auc(&[6.0, 7.0], &[true, true], &[0.0, 1.0], 5.0).is_err());
    }

    #[test]
    fn roc_runs_corner_to_corner() {
        let ds = SurvivalDataset::new(vec![1.0, 2.0, 6.0, 7.0], vec![true; 4])
            .unwrap()
            .with_scores(vec![0.9, 0.3, 0.5, 0.1])
            .unwrap();
        let roc = time_dependent_roc(&ds, 5.0).unwrap();
        let last = roc.last().unwrap();
        assert_eq!((last.false_positive_rate, last.true_positive_rate), (1.0, 1.0));
        assert_eq!(roc[0].true_positive_rate, 0.0);
    }
}
