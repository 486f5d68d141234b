use crate::cohort::SurvivalOutcome;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Negative mean-over-events Breslow partial log-likelihood of `scores`,
/// with risk sets taken within the supplied batch.
pub fn cox_loss<T: Scalar>(scores: &[T], outcomes: &[SurvivalOutcome]) -> Result<T> {
    if scores.len() != outcomes.len() {
        return Err(Error::Contract(format!("{} scores for {} outcomes", scores.len(), outcomes.len())));
    }
    let times: Vec<T> = outcomes.iter().map(|o| T::lit(o.time)).collect();
    let events: Vec<bool> = outcomes.iter().map(|o| o.event).collect();
    Ok(cox_loss_with_grad(scores, &times, &events, None)?.0)
}

/// Loss and `dL/ds` of the (optionally case-weighted) Breslow objective
///
/// `L = -(1/W) sum_{i event} w_i [s_i - log sum_{t_j >= t_i} w_j exp(s_j)]`,
/// `W = sum_{i event} w_i`. A patient listed twice is equivalent to weight 2.
pub fn cox_loss_with_grad<T: Scalar>(
    scores: &[T],
    times: &[T],
    events: &[bool],
    weights: Option<&[T]>,
) -> Result<(T, Vec<T>)> {
    let n = scores.len();
    if times.len() != n || events.len() != n || weights.is_some_and(|w| w.len() != n) {
        return Err(Error::Contract("scores, times, events and weights must align".into()));
    }
    let w = |i: usize| weights.map_or(T::one(), |w| w[i]);
    let total_events: T = (0..n).filter(|&i| events[i]).map(w).sum();
    if total_events <= T::zero() {
        return Err(Error::UndefinedLoss("batch has no events".into()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Numerical {
            path: format!("score[{i}]"),
            message: "risk score is not finite".into(),
        });
    }

    let shift = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let ex: Vec<T> = (0..n).map(|i| w(i) * (scores[i] - shift).exp()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap_or(std::cmp::Ordering::Equal));

    // Group boundaries of tied times in ascending order.
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut g = 0;
    while g < n {
        let mut h = g + 1;
        while h < n && times[order[h]] == times[order[g]] {
            h += 1;
        }
        groups.push((g, h));
        g = h;
    }

    // Risk-set sums from the latest time backwards; per-group event mass / R.
    let mut risk = T::zero();
    let mut loglik = T::zero();
    let mut hazard = vec![T::zero(); groups.len()];
    for (gi, &(a, b)) in groups.iter().enumerate().rev() {
        risk += order[a..b].iter().map(|&i| ex[i]).sum::<T>();
        let log_risk = risk.ln();
        for &i in order[a..b].iter().filter(|&&i| events[i]) {
            loglik += w(i) * (scores[i] - shift - log_risk);
            hazard[gi] += w(i) / risk;
        }
    }

    let mut grad = vec![T::zero(); n];
    let mut cumulative = T::zero();
    for (gi, &(a, b)) in groups.iter().enumerate() {
        cumulative += hazard[gi];
        for &k in &order[a..b] {
            let own = if events[k] { w(k) } else { T::zero() };
            grad[k] = (ex[k] * cumulative - own) / total_events;
        }
    }
    Ok((-loglik / total_events, grad))
}
