//! Scores/outcomes exchange CSV: `patient_id, score, time_years, event`
//! with `event` as `0`/`1`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SurvivalDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredOutcome {
    pub patient_id: String,
    pub score: f64,
    pub time_years: f64,
    #[serde(with = "flag")]
    pub event: bool,
}

mod flag {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(serde::de::Error::custom(format!("event must be 0 or 1, got {v}"))),
        }
    }
}

pub fn write_scores<W: Write>(rows: &[ScoredOutcome], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<scores>", e))
}

pub fn read_scores<R: Read>(input: R) -> Result<Vec<ScoredOutcome>> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<std::result::Result<Vec<ScoredOutcome>, _>>()?;
    if let Some(bad) = rows.iter().find(|r| !(r.score.is_finite() && r.time_years.is_finite() && r.time_years > 0.0)) {
        return Err(Error::Validation(format!(
            "patient {}: score and time must be finite, time > 0",
            bad.patient_id
        )));
    }
    Ok(rows)
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<Vec<ScoredOutcome>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_scores(std::io::BufReader::new(file))
}

/// Dataset with scores attached, in file order.
pub fn scored_dataset(rows: &[ScoredOutcome]) -> Result<SurvivalDataset<f64>> {
    SurvivalDataset::new(rows.iter().map(|r| r.time_years).collect(), rows.iter().map(|r| r.event).collect())?
        .with_scores(rows.iter().map(|r| r.score).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let rows = vec![
            ScoredOutcome {
                patient_id: "A".into(),
                score: -0.125,
                time_years: 1.0 / 3.0,
                event: true,
            },
            ScoredOutcome {
                patient_id: "B,2".into(),
                score: 2.5,
                time_years: 7.0,
                event: false,
            },
        ];
        let mut buf = Vec::new();
        write_scores(&rows, &mut buf).unwrap();
        assert!(buf.starts_with(b"patient_id,score,time_years,event\nA,-0.125,"));
        assert_eq!(read_scores(&buf[..]).unwrap(), rows);
        assert_eq!(scored_dataset(&rows).unwrap().n_events(), 1);
    }

    #[test]
    fn bad_event_flag() {
        let text = "patient_id,score,time_years,event\nA,0.1,2.0,2\n";
        assert!(read_scores(text.as_bytes()).is_err());
    }
}
