//! Binary split files.
//!
//! ```text
//! magic        8 bytes   b"RISDSET\x01"
//! header_len   u64 LE
//! header       header_len bytes of UTF-8 JSON (SplitHeader)
//! records      n_samples × { y_packed[N_b·2N_u], h_packed[N_b·2N_u], sigma_n, snr_db }
//! ```
//!
//! Matrices are row-major, every number a little-endian IEEE-754 f64.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetConfig, Sample, Split, SystemGeometry};
use crate::{Error, RMatrix, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"RISDSET\x01";
const FORMAT_NAME: &str = "ris-chanest-dataset";
const RECORD_FIELDS: [&str; 4] = ["y_packed", "h_packed", "sigma_n", "snr_db"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitHeader {
    pub format: String,
    pub version: u32,
    pub split: Split,
    pub n_samples: usize,
    pub n_b: usize,
    pub n_u: usize,
    pub seed: u64,
    pub geometry: SystemGeometry,
    pub config: DatasetConfig,
    pub record: Vec<String>,
}

impl SplitHeader {
    pub fn new(
        split: Split,
        geometry: &SystemGeometry,
        config: &DatasetConfig,
        seed: u64,
        n_samples: usize,
    ) -> Self {
        SplitHeader {
            format: FORMAT_NAME.into(),
            version: 1,
            split,
            n_samples,
            n_b: geometry.n_b,
            n_u: geometry.n_u,
            seed,
            geometry: geometry.clone(),
            config: config.clone(),
            record: RECORD_FIELDS.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn record_len(&self) -> Option<usize> {
        self.n_b.checked_mul(self.n_u)?.checked_mul(4)?.checked_add(2)
    }
}

fn push_row_major(out: &mut Vec<u8>, m: &RMatrix) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

pub fn encode_split(header: &SplitHeader, samples: &[Sample]) -> Result<Vec<u8>> {
    if header.n_samples != samples.len() {
        return Err(Error::Format(format!(
            "header announces {} samples, got {}",
            header.n_samples,
            samples.len()
        )));
    }
    let json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(16 + json.len() + samples.len() * header.n_b * header.n_u * 32);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let shape = (header.n_b, 2 * header.n_u);
    for s in samples {
        if s.y.shape() != shape || s.h.shape() != shape {
            return Err(Error::Shape(format!(
                "sample matrices must be {shape:?}, got {:?} / {:?}",
                s.y.shape(),
                s.h.shape()
            )));
        }
        push_row_major(&mut out, &s.y);
        push_row_major(&mut out, &s.h);
        out.extend_from_slice(&s.sigma_n.to_le_bytes());
        out.extend_from_slice(&s.snr_db.to_le_bytes());
    }
    Ok(out)
}

/// Split a `magic | len | json | payload` container into its header bytes and
/// payload. Shared with the checkpoint format.
pub(crate) fn split_container<'a>(bytes: &'a [u8], magic: &[u8; 8]) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < 16 || &bytes[..8] != magic {
        return Err(Error::Format("bad magic".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let rest = &bytes[16..];
    let len = usize::try_from(len)
        .ok()
        .filter(|&l| l <= rest.len())
        .ok_or_else(|| Error::Format(format!("header length {len} exceeds file")))?;
    Ok(rest.split_at(len))
}

pub(crate) fn read_f64s(payload: &[u8]) -> impl Iterator<Item = f64> + '_ {
    payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
}

pub fn decode_split(bytes: &[u8]) -> Result<(SplitHeader, Vec<Sample>)> {
    let (head, payload) = split_container(bytes, DATASET_MAGIC)?;
    let header: SplitHeader = serde_json::from_slice(head)?;
    if header.format != FORMAT_NAME || header.version != 1 {
        return Err(Error::Format(format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    if header.record != RECORD_FIELDS {
        return Err(Error::Format(format!(
            "unexpected record layout {:?}",
            header.record
        )));
    }
    if header.n_b == 0 || header.n_u == 0 {
        return Err(Error::Format("empty matrix dimensions".into()));
    }
    if header.geometry.n_b != header.n_b || header.geometry.n_u != header.n_u {
        return Err(Error::Format("header dimensions disagree with geometry".into()));
    }
    let rec = header
        .record_len()
        .ok_or_else(|| Error::Format("record size overflows".into()))?;
    let expected = header
        .n_samples
        .checked_mul(rec)
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload is {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let (rows, cols) = (header.n_b, 2 * header.n_u);
    let mut values = read_f64s(payload);
    let mut samples = Vec::with_capacity(header.n_samples);
    for idx in 0..header.n_samples {
        let y = RMatrix::from_row_iterator(rows, cols, values.by_ref().take(rows * cols));
        let h = RMatrix::from_row_iterator(rows, cols, values.by_ref().take(rows * cols));
        let sigma_n = values.next().expect("length checked");
        let snr_db = values.next().expect("length checked");
        let finite = y.iter().chain(h.iter()).all(|v| v.is_finite());
        if !finite || !(sigma_n >= 0.0 && sigma_n.is_finite()) || snr_db.is_nan() {
            return Err(Error::Format(format!("sample {idx} holds invalid numbers")));
        }
        samples.push(Sample {
            y,
            h,
            sigma_n,
            snr_db,
        });
    }
    Ok((header, samples))
}

pub fn write_split(path: &Path, header: &SplitHeader, samples: &[Sample]) -> Result<()> {
    fs::write(path, encode_split(header, samples)?)?;
    Ok(())
}

pub fn read_split(path: &Path) -> Result<(SplitHeader, Vec<Sample>)> {
    decode_split(&fs::read(path)?)
}
