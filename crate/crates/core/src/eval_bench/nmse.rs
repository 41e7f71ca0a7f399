use serde::{Deserialize, Serialize};

use crate::channel_sim::{unpack_real, Observation, Sample};
use crate::models::Model;
use crate::tensor_nn::Tensor;
use crate::{CMatrix, Error, Result};

/// Reported value for an exactly zero error.
pub const NMSE_FLOOR_DB: f64 = -120.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmseDenominator {
    /// `‖Ĥ − H‖² / ‖H‖²`.
    #[default]
    Truth,
    /// `‖Ĥ − H‖² / ‖Ĥ‖²`.
    Estimate,
}

/// NMSE of two equally sized real slices (packed or not).
pub fn nmse_slices(h_hat: &[f64], h: &[f64], denom: NmseDenominator) -> Result<f64> {
    if h_hat.len() != h.len() {
        return Err(Error::Shape(format!("estimate has {} entries, truth {}", h_hat.len(), h.len())));
    }
    let err: f64 = h_hat.iter().zip(h).map(|(a, b)| (a - b) * (a - b)).sum();
    let reference = match denom {
        NmseDenominator::Truth => h,
        NmseDenominator::Estimate => h_hat,
    };
    let norm: f64 = reference.iter().map(|v| v * v).sum();
    if norm == 0.0 {
        return Err(Error::Domain("NMSE reference has zero norm".into()));
    }
    Ok(err / norm)
}

pub fn nmse(h_hat: &CMatrix, h: &CMatrix) -> Result<f64> {
    nmse_with(h_hat, h, NmseDenominator::Truth)
}

pub fn nmse_with(h_hat: &CMatrix, h: &CMatrix, denom: NmseDenominator) -> Result<f64> {
    if h_hat.shape() != h.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", h_hat.shape(), h.shape())));
    }
    let err = (h_hat - h).norm_squared();
    let norm = match denom {
        NmseDenominator::Truth => h.norm_squared(),
        NmseDenominator::Estimate => h_hat.norm_squared(),
    };
    if norm == 0.0 {
        return Err(Error::Domain("NMSE reference has zero norm".into()));
    }
    Ok(err / norm)
}

/// `10·log10(x)`, floored at [`NMSE_FLOOR_DB`].
pub fn to_db(x: f64) -> f64 {
    if x <= 0.0 {
        NMSE_FLOOR_DB
    } else {
        (10.0 * x.log10()).max(NMSE_FLOOR_DB)
    }
}

/// dB value of the mean of linear NMSEs.
pub fn mean_db(values: &[f64]) -> f64 {
    to_db(values.iter().sum::<f64>() / values.len().max(1) as f64)
}

/// The least-squares estimate is the despread observation itself.
pub fn ls_baseline(obs: &Observation) -> Result<CMatrix> {
    unpack_real(&obs.y_packed)
}

/// Expected LS NMSE, `σ²·N_b·N_u / E‖H‖²`.
pub fn ls_nmse_closed_form(sigma_n: f64, n_b: usize, n_u: usize, mean_power: f64) -> f64 {
    sigma_n * sigma_n * (n_b * n_u) as f64 / mean_power
}

/// Per-sample NMSE of a model over `samples`, evaluated in batches.
pub fn model_nmse(model: &Model, samples: &[Sample], batch: usize, denom: NmseDenominator) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch.max(1)) {
        let y = Tensor::from_matrices(chunk.iter().map(|s| &s.y))?;
        let (h_hat, _) = model.estimate(&y)?;
        let len = h_hat.len() / chunk.len();
        for (i, s) in chunk.iter().enumerate() {
            let truth: Vec<f64> = row_major(&s.h);
            out.push(nmse_slices(&h_hat.data()[i * len..(i + 1) * len], &truth, denom)?);
        }
    }
    Ok(out)
}

/// Per-sample NMSE of the LS estimate.
pub fn ls_nmse(samples: &[Sample], denom: NmseDenominator) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| nmse_slices(s.y.as_slice(), s.h.as_slice(), denom))
        .collect()
}

fn row_major(m: &crate::RMatrix) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}
