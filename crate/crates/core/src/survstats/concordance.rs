use super::km::TotalCmp;
use super::SurvivalDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Pair counts behind Harrell's C-index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Concordance {
    pub concordant: u64,
    pub discordant: u64,
    pub tied_score: u64,
}

impl Concordance {
    pub fn comparable(&self) -> u64 {
        self.concordant + self.discordant + self.tied_score
    }

    /// (concordant + tied / 2) / comparable, or `None` without comparable pairs.
    pub fn index(&self) -> Option<f64> {
        let total = self.comparable();
        (total > 0).then(|| (2 * self.concordant + self.tied_score) as f64 / (2 * total) as f64)
    }
}

struct Fenwick {
    tree: Vec<u64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick { tree: vec![0; n + 1] }
    }

    fn add(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks strictly below `rank`.
    fn below(&self, rank: usize) -> u64 {
        let mut i = rank;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Counts Harrell pairs in O(n log n).
///
/// A pair is comparable when the shorter time is an event and the other
/// subject either has a strictly longer time or is censored at the same time.
/// Two events at the same time are not comparable. The pair is concordant when
/// the earlier failure has the higher score.
pub fn concordance<T: Scalar>(times: &[T], events: &[bool], scores: &[T]) -> Result<Concordance> {
    if times.len() != events.len() || times.len() != scores.len() {
        return Err(Error::Validation("times, events and scores must align".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical {
            path: "scores".into(),
            message: "non-finite risk score".into(),
        });
    }
    let n = times.len();
    let mut by_score: Vec<usize> = (0..n).collect();
    by_score.sort_by(|&a, &b| scores[a].total_cmp_value(&scores[b]));
    let mut rank = vec![0usize; n];
    for w in 0..n {
        let i = by_score[w];
        rank[i] = if w > 0 && scores[by_score[w - 1]] == scores[i] {
            rank[by_score[w - 1]]
        } else {
            w
        };
    }

    let mut by_time: Vec<usize> = (0..n).collect();
    by_time.sort_by(|&a, &b| times[b].total_cmp_value(&times[a]));

    let mut tree = Fenwick::new(n);
    let mut inserted = 0u64;
    let mut out = Concordance::default();
    let mut g = 0;
    while g < n {
        let t = times[by_time[g]];
        let mut h = g;
        while h < n && times[by_time[h]] == t {
            h += 1;
        }
        let group = &by_time[g..h];
        for &i in group.iter().filter(|&&i| !events[i]) {
            tree.add(rank[i]);
            inserted += 1;
        }
        for &i in group.iter().filter(|&&i| events[i]) {
            // Tied scores share the smallest rank of their block, so every
            // inserted tie sits exactly at `rank[i]`.
            let lower = tree.below(rank[i]);
            let tied = tree.below(rank[i] + 1) - lower;
            out.concordant += lower;
            out.tied_score += tied;
            out.discordant += inserted - lower - tied;
        }
        for &i in group.iter().filter(|&&i| events[i]) {
            tree.add(rank[i]);
            inserted += 1;
        }
        g = h;
    }
    Ok(out)
}

pub fn c_index<T: Scalar>(ds: &SurvivalDataset<T>) -> Result<T> {
    let counts = concordance(ds.times(), ds.events(), ds.scores()?)?;
    counts
        .index()
        .map(T::lit)
        .ok_or_else(|| Error::Estimation("C-index: no comparable pairs".into()))
}
