//! JSON checkpoints: architecture, clinical normalization and parameters
//! stored per named segment.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::RiskModel;
use super::Architecture;
use crate::cohort::NormalizationStats;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT: &str = "bcr-risk-model";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentValues<T> {
    name: String,
    shape: [usize; 2],
    values: Vec<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile<T> {
    format: String,
    version: u32,
    scalar: String,
    architecture: Architecture,
    normalization: Option<NormalizationStats>,
    segments: Vec<SegmentValues<T>>,
}

fn scalar_name<T>() -> &'static str {
    std::any::type_name::<T>()
}

pub fn write_checkpoint<T: Scalar, W: Write>(model: &RiskModel<T>, mut out: W) -> Result<()> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        scalar: scalar_name::<T>().to_string(),
        architecture: *model.architecture(),
        normalization: model.normalization().copied(),
        segments: model
            .layout()
            .segments()
            .iter()
            .map(|s| SegmentValues {
                name: s.name.clone(),
                shape: [s.rows, s.cols],
                values: model.parameters()[s.range()].to_vec(),
            })
            .collect(),
    };
    serde_json::to_writer(&mut out, &file)?;
    out.write_all(b"\n").map_err(|e| Error::io("<checkpoint>", e))
}

pub fn read_checkpoint<T: Scalar, R: Read>(input: R) -> Result<RiskModel<T>> {
    let file: CheckpointFile<T> = serde_json::from_reader(input)?;
    if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
        return Err(Error::Validation(format!(
            "unsupported checkpoint {} v{}",
            file.format, file.version
        )));
    }
    if file.scalar != scalar_name::<T>() {
        return Err(Error::Contract(format!(
            "checkpoint stores {} parameters, requested {}",
            file.scalar,
            scalar_name::<T>()
        )));
    }
    let template = RiskModel::<T>::zeros(file.architecture)?;
    let expected = template.layout().segments();
    if expected.len() != file.segments.len() {
        return Err(Error::Validation(format!(
            "checkpoint has {} segments, architecture needs {}",
            file.segments.len(),
            expected.len()
        )));
    }
    let mut params = Vec::with_capacity(template.parameters().len());
    for (want, got) in expected.iter().zip(file.segments) {
        if want.name != got.name || [want.rows, want.cols] != got.shape || got.values.len() != want.len() {
            return Err(Error::Validation(format!(
                "segment `{}` {:?} does not match expected `{}` [{}, {}]",
                got.name, got.shape, want.name, want.rows, want.cols
            )));
        }
        params.extend(got.values);
    }
    RiskModel::from_parameters(file.architecture, params, file.normalization)
}

pub fn save_checkpoint<T: Scalar>(model: &RiskModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<RiskModel<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Modality;

    fn model<T: Scalar>() -> RiskModel<T> {
        let arch = Architecture {
            attention_hidden: 3,
            head_hidden: 2,
            fusion_hidden: 4,
            ..Architecture::new(Modality::Multimodal, 5)
        };
        let mut m = RiskModel::new(arch, 42).unwrap();
        m.set_normalization(Some(NormalizationStats {
            mean: [65.1, 7.3, 2.2],
            std: [6.4, 4.9, 1.1],
        }));
        m
    }

    #[test]
    fn round_trip_is_exact_and_bytes_stable() {
        for bytes in [
            {
                let mut b = Vec::new();
                write_checkpoint(&model::<f64>(), &mut b).unwrap();
                b
            },
            {
                let mut b = Vec::new();
                write_checkpoint(&model::<f32>(), &mut b).unwrap();
                b
            },
        ] {
            let text = String::from_utf8(bytes.clone()).unwrap();
            let again = if text.contains("\"f64\"") {
                let m: RiskModel<f64> = read_checkpoint(&bytes[..]).unwrap();
                assert_eq!(m, model::<f64>());
                let mut b = Vec::new();
                write_checkpoint(&m, &mut b).unwrap();
                b
            } else {
                let m: RiskModel<f32> = read_checkpoint(&bytes[..]).unwrap();
                assert_eq!(m, model::<f32>());
                let mut b = Vec::new();
                write_checkpoint(&m, &mut b).unwrap();
                b
            };
            assert_eq!(bytes, again);
        }
    }

    #[test]
    fn scalar_mismatch_and_tampering_rejected() {
        let mut b = Vec::new();
        write_checkpoint(&model::<f64>(), &mut b).unwrap();
        assert!(matches!(read_checkpoint::<f32, _>(&b[..]), Err(Error::Contract(_))));
        let renamed = String::from_utf8(b).unwrap().replace("fusion.fc2.bias", "fusion.fc3.bias");
        assert!(matches!(read_checkpoint::<f64, _>(renamed.as_bytes()), Err(Error::Validation(_))));
    }
}
