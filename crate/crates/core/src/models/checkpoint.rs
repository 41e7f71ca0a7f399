//! Checkpoint container: `RISCKPT\x01 | u64 LE header length | JSON header |
//! f64 LE payload`, tensors stored back to back in declaration order
//! (parameters, then normalisation buffers).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelSpec};
use crate::channel_sim::SystemGeometry;
use crate::channel_sim::io::{read_f64s, split_container};
use crate::tensor_nn::{Module, Tensor};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RISCKPT\x01";
const FORMAT: &str = "ris-chanest-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    /// System geometry of the training data, when known.
    #[serde(default)]
    pub geometry: Option<SystemGeometry>,
    pub model: ModelSpec,
    pub tensors: Vec<TensorEntry>,
}

pub fn encode_checkpoint(model: &Model, seed: u64, geometry: Option<&SystemGeometry>) -> Result<Vec<u8>> {
    let tensors = model.named_tensors();
    let header = CheckpointHeader {
        format: FORMAT.into(),
        version: VERSION,
        seed,
        geometry: geometry.cloned(),
        model: model.spec(),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let total: usize = tensors.iter().map(|(_, t)| t.len()).sum();
    let mut out = Vec::with_capacity(16 + json.len() + 8 * total);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in &tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(CheckpointHeader, Model)> {
    let (json, payload) = split_container(bytes, CHECKPOINT_MAGIC)?;
    let header: CheckpointHeader = serde_json::from_slice(json)?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint {} v{}",
            header.format, header.version
        )));
    }
    header.model.validate("model")?;
    // Size checks come before building the model so a hostile header cannot
    // trigger a large allocation.
    let expected = header.model.num_values();
    if payload.len() % 8 != 0 || payload.len() / 8 != expected {
        return Err(Error::Format(format!(
            "payload holds {} bytes, model needs {expected} values",
            payload.len()
        )));
    }
    let mut model = Model::zeros(&header.model);
    {
        let names = model.named_tensors();
        if names.len() != header.tensors.len() {
            return Err(Error::Mismatch {
                expected: format!("{} tensors", names.len()),
                found: format!("{} tensors", header.tensors.len()),
            });
        }
        for ((name, t), entry) in names.iter().zip(&header.tensors) {
            if *name != entry.name || t.shape() != entry.shape.as_slice() {
                return Err(Error::Mismatch {
                    expected: format!("{name} {:?}", t.shape()),
                    found: format!("{} {:?}", entry.name, entry.shape),
                });
            }
        }
    }
    let mut values = read_f64s(payload);
    let mut fill = |t: &mut Tensor| {
        for v in t.data_mut() {
            *v = values.next().expect("length checked");
        }
        t.check_finite("checkpoint")
            .map_err(|_| Error::Format("checkpoint holds a non-finite value".into()))
    };
    for t in model.param_list_mut() {
        fill(t)?;
    }
    let mut buffers = Vec::new();
    model.buffers_mut(&mut buffers);
    for t in buffers {
        fill(t)?;
    }
    Ok((header, model))
}

pub fn save_checkpoint(path: &Path, model: &Model, seed: u64, geometry: Option<&SystemGeometry>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model, seed, geometry)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, Model)> {
    decode_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CbdNetSpec, MrdnSpec};

    fn model() -> Model {
        let spec = ModelSpec::Cbdnet(CbdNetSpec {
            b_c: 2,
            k_s: 1,
            b_blocks: 2,
            features: 3,
            batch_norm: true,
        });
        Model::init(&spec, 5).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let bytes = encode_checkpoint(&m, 5, Some(&SystemGeometry::default())).unwrap();
        let (h, back) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(h.seed, 5);
        assert_eq!(back, m);
        assert_eq!(encode_checkpoint(&back, 5, Some(&SystemGeometry::default())).unwrap(), bytes);
    }

    #[test]
    fn rejects_truncation_and_spec_swap() {
        let bytes = encode_checkpoint(&model(), 5, None).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 8]).is_err());
        assert!(decode_checkpoint(&bytes[..10]).is_err());

        let (mut header, _) = decode_checkpoint(&bytes).unwrap();
        header.model = ModelSpec::Mrdn(MrdnSpec {
            n_r: 1,
            b_layers: 1,
            features: 1,
        });
        let json = serde_json::to_vec(&header).unwrap();
        let mut forged = CHECKPOINT_MAGIC.to_vec();
        forged.extend_from_slice(&(json.len() as u64).to_le_bytes());
        forged.extend_from_slice(&json);
        assert!(decode_checkpoint(&forged).is_err());
    }

    #[test]
    fn rejects_non_finite_values() {
        let mut bytes = encode_checkpoint(&model(), 5, None).unwrap();
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Format(_))));
    }
}
