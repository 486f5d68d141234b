use super::SurvivalDataset;
use crate::error::Result;
use crate::scalar::Scalar;

/// Product-limit survival curve, stored at the distinct event times.
#[derive(Debug, Clone, PartialEq)]
pub struct KmCurve<T> {
    pub times: Vec<T>,
    pub survival: Vec<T>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
}

impl<T: Scalar> KmCurve<T> {
    /// Right-continuous step function value S(t); 1 before the first event.
    pub fn survival_at(&self, t: T) -> T {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            T::one()
        } else {
            self.survival[k - 1]
        }
    }

    /// Left limit S(t-).
    pub fn survival_before(&self, t: T) -> T {
        let k = self.times.partition_point(|&x| x < t);
        if k == 0 {
            T::one()
        } else {
            self.survival[k - 1]
        }
    }

    /// Step-function vertices `(t, S)` starting at `(0, 1)`, ready for plotting.
    pub fn step_coordinates(&self) -> Vec<(T, T)> {
        let mut out = vec![(T::zero(), T::one())];
        let mut prev = T::one();
        for (&t, &s) in self.times.iter().zip(&self.survival) {
            out.push((t, prev));
            out.push((t, s));
            prev = s;
        }
        out
    }
}

/// Product limit over `flags` (true = the counted event). A subject whose time
/// equals an event time is still at risk at that time.
pub(crate) fn product_limit<T: Scalar>(times: &[T], flags: &[bool]) -> KmCurve<T> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp_value(&times[b]));
    let n = order.len();
    let mut curve = KmCurve {
        times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
    };
    // Within a censoring-free stretch the product telescopes to
    // s_base * (remaining / n_base), which keeps uncensored curves exact.
    let mut s_base = T::one();
    let mut n_base = n;
    let mut i = 0;
    while i < n {
        let t = times[order[i]];
        let mut j = i;
        let mut d = 0usize;
        while j < n && times[order[j]] == t {
            d += flags[order[j]] as usize;
            j += 1;
        }
        let at_risk = n - i;
        let censored = (j - i) - d;
        if d > 0 {
            let s = s_base * T::from_count(at_risk - d) / T::from_count(n_base);
            curve.times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(at_risk);
            curve.events.push(d);
        }
        if censored > 0 {
            s_base = curve.survival.last().copied().unwrap_or(T::one());
            n_base = at_risk - d - censored;
        }
        i = j;
    }
    curve
}

pub fn km_estimate<T: Scalar>(ds: &SurvivalDataset<T>) -> Result<KmCurve<T>> {
    ds.require_events("Kaplan-Meier")?;
    Ok(product_limit(ds.times(), ds.events()))
}

/// Total order helper for scalars that are known to be finite.
pub(crate) trait TotalCmp {
    fn total_cmp_value(&self, other: &Self) -> std::cmp::Ordering;
}

impl<T: Scalar> TotalCmp for T {
    fn total_cmp_value(&self, other: &Self) -> std::cmp::Ordering {
        self.partial_cmp(other).unwrap_or_else(|| self.is_nan().cmp(&other.is_nan()))
    }
}
