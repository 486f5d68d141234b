use serde::{Deserialize, Serialize};

use super::CapraSInputs;
use crate::error::{Error, Result};

/// Identifies the point table below (Cooperberg et al., 2011).
pub const CAPRA_S_TABLE_VERSION: &str = "capra-s/2011";

// Upper band edges (ng/mL, inclusive) and their points; above the last edge scores 3.
const PSA_BANDS: [(f64, u8); 3] = [(6.0, 0), (10.0, 1), (20.0, 2)];
const PSA_ABOVE_BANDS: u8 = 3;
const POINTS_POSITIVE_MARGINS: u8 = 2;
const POINTS_SEMINAL_VESICLE: u8 = 2;
const POINTS_EXTRACAPSULAR: u8 = 1;
const POINTS_LYMPH_NODE: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CapraGroup {
    Low,
    Intermediate,
    High,
}

impl CapraGroup {
    pub fn from_score(score: u8) -> Self {
        match score {
            0..=2 => CapraGroup::Low,
            3..=5 => CapraGroup::Intermediate,
            _ => CapraGroup::High,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CapraGroup::Low => "low",
            CapraGroup::Intermediate => "intermediate",
            CapraGroup::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapraS {
    pub score: u8,
    pub group: CapraGroup,
}

fn psa_points(psa: f64) -> u8 {
    PSA_BANDS
        .iter()
        .find(|(edge, _)| psa <= *edge)
        .map_or(PSA_ABOVE_BANDS, |&(_, pts)| pts)
}

/// Pathologic Gleason: sum <= 6 scores 0, 7 with primary <= 3 scores 1,
/// 7 with primary >= 4 scores 2, and 8-10 scores 3.
fn gleason_points(primary: u8, secondary: u8) -> u8 {
    match primary + secondary {
        0..=6 => 0,
        7 if primary <= 3 => 1,
        7 => 2,
        _ => 3,
    }
}

fn require<T>(value: Option<T>, field: &str) -> Result<T> {
    value.ok_or_else(|| Error::Precondition(format!("CAPRA-S field `{field}` is missing")))
}

pub fn capra_s_score(inputs: &CapraSInputs) -> Result<CapraS> {
    let psa = require(inputs.psa, "psa_capra")?;
    let primary = require(inputs.gleason_primary, "gleason_p")?;
    let secondary = require(inputs.gleason_secondary, "gleason_s")?;
    let margins = require(inputs.positive_margins, "margins")?;
    let ece = require(inputs.extracapsular_extension, "ece")?;
    let svi = require(inputs.seminal_vesicle_invasion, "svi")?;
    let lni = require(inputs.lymph_node_invasion, "lni")?;
    if !(psa.is_finite() && psa >= 0.0) {
        return Err(Error::Precondition(format!("CAPRA-S psa {psa} is invalid")));
    }
    for (name, g) in [("gleason_p", primary), ("gleason_s", secondary)] {
        if !(1..=5).contains(&g) {
            return Err(Error::Precondition(format!(
                "CAPRA-S {name} = {g} outside 1..=5"
            )));
        }
    }

    let flag = |on: bool, pts: u8| if on { pts } else { 0 };
    let score = psa_points(psa)
        + gleason_points(primary, secondary)
        + flag(margins, POINTS_POSITIVE_MARGINS)
        + flag(ece, POINTS_EXTRACAPSULAR)
        + flag(svi, POINTS_SEMINAL_VESICLE)
        + flag(lni, POINTS_LYMPH_NODE);
    Ok(CapraS {
        score,
        group: CapraGroup::from_score(score),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_risk_scores_zero() {
        let s = capra_s_score(&CapraSInputs::complete(4.0, 3, 3, false, false, false, false))
            .unwrap();
        assert_eq!(s, CapraS { score: 0, group: CapraGroup::Low });
    }

    #[test]
    fn maximal_risk_scores_twelve() {
        // 3 (PSA > 20) + 3 (Gleason 8-10) + 2 + 1 + 2 + 1
        let s = capra_s_score(&CapraSInputs::complete(45.0, 5, 5, true, true, true, true))
            .unwrap();
        assert_eq!(s.score, 12);
        assert_eq!(s.group, CapraGroup::High);
    }

    #[test]
    fn score_four_is_intermediate() {
        // PSA 12 -> 2, Gleason 4+3 -> 2
        let s = capra_s_score(&CapraSInputs::complete(12.0, 4, 3, false, false, false, false))
            .unwrap();
        assert_eq!(s.score, 4);
        assert_eq!(s.group, CapraGroup::Intermediate);
    }

    #[test]
    fn band_edges() {
        assert_eq!(psa_points(6.0), 0);
        assert_eq!(psa_points(6.01), 1);
        assert_eq!(psa_points(10.0), 1);
        assert_eq!(psa_points(20.0), 2);
        assert_eq!(psa_points(20.01), 3);
        assert_eq!(gleason_points(3, 4), 1);
        assert_eq!(gleason_points(4, 3), 2);
        assert_eq!(gleason_points(4, 4), 3);
    }

    #[test]
    fn group_partition_covers_range() {
        let groups: Vec<_> = (0..=12).map(CapraGroup::from_score).collect();
        assert!(groups[..3].iter().all(|g| *g == CapraGroup::Low));
        assert!(groups[3..6].iter().all(|g| *g == CapraGroup::Intermediate));
        assert!(groups[6..].iter().all(|g| *g == CapraGroup::High));
    }

    #[test]
    fn missing_field_is_precondition_error() {
        let mut inputs = CapraSInputs::complete(4.0, 3, 3, false, false, false, false);
        inputs.lymph_node_invasion = None;
        let err = capra_s_score(&inputs).unwrap_err();
        assert!(matches!(err, Error::Precondition(ref m) if m.contains("lni")));
    }
}
