//! CSV cohort manifest.
//!
//! Header columns: `patient_id, age, psa, isup, time_years, event, slide_ids`
//! followed by the optional CAPRA-S block `psa_capra, gleason_p, gleason_s,
//! margins, ece, svi, lni`. `slide_ids` is `;`-separated, flags are `0`/`1`,
//! and missing optional cells are empty. Row numbers in errors are file lines.

use std::io::{Read, Write};
use std::path::Path;

use log::warn;

use super::{validate_cohort, CapraSInputs, ClinicalFeatures, CohortRecord, SurvivalOutcome};
use crate::error::{Error, Result};

pub const MANIFEST_COLUMNS: [&str; 14] = [
    "patient_id",
    "age",
    "psa",
    "isup",
    "time_years",
    "event",
    "slide_ids",
    "psa_capra",
    "gleason_p",
    "gleason_s",
    "margins",
    "ece",
    "svi",
    "lni",
];

struct Columns {
    index: [Option<usize>; 14],
}

impl Columns {
    fn from_header(header: &csv::StringRecord) -> Result<Self> {
        let mut index = [None; 14];
        for (pos, name) in header.iter().enumerate() {
            if let Some(slot) = MANIFEST_COLUMNS.iter().position(|c| *c == name) {
                index[slot] = Some(pos);
            }
        }
        for required in ["patient_id", "time_years", "event"] {
            let slot = MANIFEST_COLUMNS.iter().position(|c| *c == required).unwrap();
            if index[slot].is_none() {
                return Err(Error::parse(1, required, "required column missing from header"));
            }
        }
        Ok(Columns { index })
    }

    fn cell<'r>(&self, rec: &'r csv::StringRecord, name: &str) -> Option<&'r str> {
        let slot = MANIFEST_COLUMNS.iter().position(|c| *c == name)?;
        self.index[slot]
            .and_then(|i| rec.get(i))
            .map(str::trim)
            .filter(|s| !s.is_empty())
    }
}

fn parse_num<T: std::str::FromStr>(row: usize, column: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::parse(row, column, format!("cannot parse \"{raw}\"")))
}

fn parse_flag(row: usize, column: &str, raw: &str) -> Result<bool> {
    match raw {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::parse(row, column, format!("expected 0 or 1, got \"{raw}\""))),
    }
}

fn parse_grade(row: usize, column: &str, raw: &str) -> Result<u8> {
    let g: u8 = parse_num(row, column, raw)?;
    if !(1..=5).contains(&g) {
        return Err(Error::parse(row, column, format!("grade {g} outside 1..=5")));
    }
    Ok(g)
}

fn parse_row(cols: &Columns, rec: &csv::StringRecord, row: usize) -> Result<CohortRecord> {
    let patient_id = cols
        .cell(rec, "patient_id")
        .ok_or_else(|| Error::parse(row, "patient_id", "empty patient id"))?
        .to_string();

    let age = cols.cell(rec, "age").map(|s| parse_num::<f64>(row, "age", s)).transpose()?;
    let psa = cols.cell(rec, "psa").map(|s| parse_num::<f64>(row, "psa", s)).transpose()?;
    let isup = cols.cell(rec, "isup").map(|s| parse_grade(row, "isup", s)).transpose()?;
    let clinical = match (age, psa, isup) {
        (Some(a), Some(p), Some(g)) => Some(
            ClinicalFeatures::new(a, p, g).map_err(|e| Error::parse(row, "age/psa", e.to_string()))?,
        ),
        (None, None, None) => None,
        _ => {
            warn!("row {row}: incomplete clinical features for \"{patient_id}\"; treating as absent");
            None
        }
    };

    let time: f64 = parse_num(
        row,
        "time_years",
        cols.cell(rec, "time_years")
            .ok_or_else(|| Error::parse(row, "time_years", "missing"))?,
    )?;
    let event = parse_flag(
        row,
        "event",
        cols.cell(rec, "event").ok_or_else(|| Error::parse(row, "event", "missing"))?,
    )?;
    let outcome =
        SurvivalOutcome::new(time, event).map_err(|e| Error::parse(row, "time_years", e.to_string()))?;

    let slide_ids = cols
        .cell(rec, "slide_ids")
        .map(|s| {
            s.split(';')
                .map(str::trim)
                .filter(|x| !x.is_empty())
                .map(String::from)
                .collect()
        })
        .unwrap_or_default();

    let flag = |name: &str| cols.cell(rec, name).map(|s| parse_flag(row, name, s)).transpose();
    let capra = CapraSInputs {
        psa: cols
            .cell(rec, "psa_capra")
            .map(|s| parse_num(row, "psa_capra", s))
            .transpose()?,
        gleason_primary: cols
            .cell(rec, "gleason_p")
            .map(|s| parse_grade(row, "gleason_p", s))
            .transpose()?,
        gleason_secondary: cols
            .cell(rec, "gleason_s")
            .map(|s| parse_grade(row, "gleason_s", s))
            .transpose()?,
        positive_margins: flag("margins")?,
        extracapsular_extension: flag("ece")?,
        seminal_vesicle_invasion: flag("svi")?,
        lymph_node_invasion: flag("lni")?,
    };

    Ok(CohortRecord {
        patient_id,
        clinical,
        outcome,
        slide_ids,
        capra_s: (!capra.is_empty()).then_some(capra),
    })
}

pub fn read_manifest<R: Read>(input: R) -> Result<Vec<CohortRecord>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let cols = Columns::from_header(reader.headers()?)?;
    let mut records = Vec::new();
    let mut rec = csv::StringRecord::new();
    while reader.read_record(&mut rec)? {
        let row = rec.position().map_or(records.len() + 2, |p| p.line() as usize);
        records.push(parse_row(&cols, &rec, row)?);
    }
    validate_cohort(&records)?;
    Ok(records)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<CohortRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_manifest(std::io::BufReader::new(file))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn flag_cell(v: Option<bool>) -> String {
    v.map(|b| if b { "1" } else { "0" }.to_string()).unwrap_or_default()
}

pub fn write_manifest<W: Write>(records: &[CohortRecord], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(MANIFEST_COLUMNS)?;
    for r in records {
        let c = r.clinical.as_ref();
        let k = r.capra_s.unwrap_or_default();
        writer.write_record([
            r.patient_id.clone(),
            opt(c.map(|c| c.age_at_diagnosis)),
            opt(c.map(|c| c.psa_pretreatment)),
            opt(c.map(|c| c.isup_grade)),
            r.outcome.time.to_string(),
            flag_cell(Some(r.outcome.event)),
            r.slide_ids.join(";"),
            opt(k.psa),
            opt(k.gleason_primary),
            opt(k.gleason_secondary),
            flag_cell(k.positive_margins),
            flag_cell(k.extracapsular_extension),
            flag_cell(k.seminal_vesicle_invasion),
            flag_cell(k.lymph_node_invasion),
        ])?;
    }
    writer.flush().map_err(|e| Error::io("<manifest>", e))?;
    Ok(())
}

pub fn save_manifest(records: &[CohortRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_manifest(records, std::io::BufWriter::new(file))
}
