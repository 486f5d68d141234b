use log::warn;
use serde::{Deserialize, Serialize};

use super::km::TotalCmp;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Quartile {
    Q1,
    Q2,
    Q3,
    Q4,
}

impl Quartile {
    pub const ALL: [Quartile; 4] = [Quartile::Q1, Quartile::Q2, Quartile::Q3, Quartile::Q4];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        ["Q1", "Q2", "Q3", "Q4"][self as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stratification<T> {
    pub labels: Vec<Quartile>,
    /// Upper bounds (inclusive) of Q1, Q2 and Q3.
    pub cuts: [T; 3],
    /// Some quartile ended up empty because of tied scores.
    pub degenerate: bool,
}

impl<T> Stratification<T> {
    pub fn counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for q in &self.labels {
            c[q.index()] += 1;
        }
        c
    }

    pub fn members(&self, q: Quartile) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == q).collect()
    }
}

/// Splits subjects into risk quartiles (Q1 lowest). Cut `k` is the order
/// statistic at position `ceil(k n / 4)`; a score equal to a cut joins the
/// lower group, so fully tied scores all land in Q1.
pub fn quartile_stratify<T: Scalar>(scores: &[T]) -> Result<Stratification<T>> {
    let n = scores.len();
    if n < 4 {
        return Err(Error::Precondition(format!("quartiles need at least 4 patients, got {n}")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical {
            path: "scores".into(),
            message: "non-finite risk score".into(),
        });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.total_cmp_value(b));
    let cuts: [T; 3] = std::array::from_fn(|k| sorted[((k + 1) * n).div_ceil(4) - 1]);
    let labels: Vec<Quartile> = scores
        .iter()
        .map(|s| {
            cuts.iter()
                .position(|c| s <= c)
                .map_or(Quartile::Q4, |k| Quartile::ALL[k])
        })
        .collect();
    let mut out = Stratification {
        labels,
        cuts,
        degenerate: false,
    };
    if out.counts().contains(&0) {
        warn!("quartile stratification is degenerate: counts {:?}", out.counts());
        out.degenerate = true;
    }
    Ok(out)
}
