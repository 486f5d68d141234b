use super::dist::chi_square_sf;
use super::km::TotalCmp;
use super::linalg::Cholesky;
use super::SurvivalDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LogRank<T> {
    pub chi_square: T,
    pub p_value: T,
    pub df: usize,
    pub observed: Vec<T>,
    pub expected: Vec<T>,
}

/// K-sample log-rank test. The covariance of observed-minus-expected over the
/// first `k - 1` groups is inverted with rank detection, so `df` is its rank.
pub fn logrank_test<T: Scalar>(groups: &[SurvivalDataset<T>]) -> Result<LogRank<T>> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::Precondition(format!("log-rank needs at least 2 groups, got {k}")));
    }
    let mut pooled: Vec<(T, usize, bool)> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, ds)| ds.times().iter().zip(ds.events()).map(move |(&t, &e)| (t, g, e)))
        .collect();
    if !pooled.iter().any(|p| p.2) {
        return Err(Error::Precondition("log-rank needs at least one event".into()));
    }
    pooled.sort_by(|a, b| a.0.total_cmp_value(&b.0));

    let mut at_risk: Vec<usize> = groups.iter().map(SurvivalDataset::len).collect();
    let mut observed = vec![T::zero(); k];
    let mut expected = vec![T::zero(); k];
    let m = k - 1;
    let mut cov = vec![T::zero(); m * m];

    let mut i = 0;
    while i < pooled.len() {
        let t = pooled[i].0;
        let mut j = i;
        let mut d_group = vec![0usize; k];
        let mut leaving = vec![0usize; k];
        while j < pooled.len() && pooled[j].0 == t {
            leaving[pooled[j].1] += 1;
            d_group[pooled[j].1] += pooled[j].2 as usize;
            j += 1;
        }
        let d: usize = d_group.iter().sum();
        let n: usize = at_risk.iter().sum();
        if d > 0 {
            let dt = T::from_count(d);
            let nt = T::from_count(n);
            for g in 0..k {
                observed[g] += T::from_count(d_group[g]);
                expected[g] += dt * T::from_count(at_risk[g]) / nt;
            }
            if n > 1 {
                let scale = dt * T::from_count(n - d) / T::from_count(n - 1);
                for a in 0..m {
                    let pa = T::from_count(at_risk[a]) / nt;
                    for b in 0..m {
                        let pb = T::from_count(at_risk[b]) / nt;
                        let delta = if a == b { T::one() } else { T::zero() };
                        cov[a * m + b] += scale * pa * (delta - pb);
                    }
                }
            }
        }
        for g in 0..k {
            at_risk[g] -= leaving[g];
        }
        i = j;
    }

    let u: Vec<T> = (0..m).map(|g| observed[g] - expected[g]).collect();
    let chol = Cholesky::factor(&cov, m, T::lit(1e-10));
    let x = chol.solve(&u);
    let chi = u.iter().zip(&x).map(|(&a, &b)| a * b).sum::<T>().max(T::zero());
    let df = chol.rank();
    Ok(LogRank {
        chi_square: chi,
        p_value: T::lit(chi_square_sf(chi.to_f64_value(), df)),
        df,
        observed,
        expected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(times: &[f64], events: &[bool]) -> SurvivalDataset<f64> {
        SurvivalDataset::new(times.to_vec(), events.to_vec()).unwrap()
    }

    #[test]
    fn identical_groups_zero_statistic() {
        let a = ds(&[1.0, 2.0, 3.0, 4.0, 5.0], &[true, false, true, true, false]);
        let r = logrank_test(&[a.clone(), a]).unwrap();
        assert_eq!(r.chi_square, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.df, 1);
    }

    #[test]
    fn hand_computed_two_group_table() {
        // A: 1, 3        B: 2, 4+   (all events except 4+)
        // t=1: n=(2,2) d=(1,0): E_A = 1/2, V = 1*3/3 * 1/2 * 1/2 = 1/4
        // t=2: n=(1,2) d=(0,1): E_A = 1/3, V = 1*2/2 * 1/3 * 2/3 = 2/9
        // t=3: n=(1,1) d=(1,0): E_A = 1/2, V = 1*1/1 * 1/2 * 1/2 = 1/4
        // O_A - E_A = 2 - 4/3 = 2/3; V = 13/18; chi = (4/9) / (13/18) = 8/13
        let a = ds(&[1.0, 3.0], &[true, true]);
        let b = ds(&[2.0, 4.0], &[true, false]);
        let r = logrank_test(&[a, b]).unwrap();
        assert!((r.chi_square - 8.0 / 13.0).abs() < 1e-14);
        assert_eq!(r.observed, [2.0, 1.0]);
        assert!((r.expected[0] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn clean_separation_is_significant() {
        let early: Vec<f64> = (1..=20).map(|i| i as f64 * 0.1).collect();
        let late: Vec<f64> = (1..=20).map(|i| 5.0 + i as f64 * 0.1).collect();
        let mut late_events = vec![true; 20];
        late_events[15..].iter_mut().for_each(|e| *e = false);
        let r = logrank_test(&[ds(&early, &[true; 20]), ds(&late, &late_events)]).unwrap();
        assert!(r.p_value < 0.05, "{r:?}");
        let swapped = logrank_test(&[ds(&late, &late_events), ds(&early, &[true; 20])]).unwrap();
        assert!((swapped.chi_square - r.chi_square).abs() < 1e-12 * r.chi_square);
    }

    #[test]
    fn single_group_rejected() {
        assert!(matches!(
            logrank_test(&[ds(&[1.0], &[true])]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn four_groups_df_three() {
        let g: Vec<_> = (0..4)
            .map(|k| {
                let t: Vec<f64> = (1..=10).map(|i| (i + 3 * k) as f64).collect();
                ds(&t, &[true; 10])
            })
            .collect();
        let r = logrank_test(&g).unwrap();
        assert_eq!(r.df, 3);
        assert!(r.chi_square > 0.0);
    }
}
