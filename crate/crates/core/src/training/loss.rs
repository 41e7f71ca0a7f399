use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Weights of the noise-level penalty in [`rec_loss`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecLossOptions {
    /// Scale of the squared noise-level error.
    pub alpha: f64,
    /// Extra factor applied when the noise level is underestimated.
    pub beta: f64,
}

impl Default for RecLossOptions {
    fn default() -> Self {
        RecLossOptions { alpha: 0.5, beta: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecLoss {
    pub value: f64,
    pub d_h_hat: Vec<f64>,
    pub d_sigma: f64,
}

/// `(1/σ̂)·‖Ĥ − H‖² + α·w·(σ̂ − σ)²` with `w = β` if `σ̂ < σ`, else 1.
///
/// `h_hat` and `h` are packed real images; the squared norm of the packed
/// difference equals the complex Frobenius norm.
pub fn rec_loss(h_hat: &[f64], h: &[f64], sigma_hat: f64, sigma_true: f64, opts: &RecLossOptions) -> Result<RecLoss> {
    if !(sigma_hat > 0.0) {
        return Err(Error::Domain(format!("noise-level estimate must be positive, got {sigma_hat}")));
    }
    if h_hat.len() != h.len() {
        return Err(Error::Shape(format!("estimate has {} entries, truth {}", h_hat.len(), h.len())));
    }
    let diff: Vec<f64> = h_hat.iter().zip(h).map(|(a, b)| a - b).collect();
    let sq: f64 = diff.iter().map(|d| d * d).sum();
    let w = if sigma_hat < sigma_true { opts.beta } else { 1.0 };
    let e = sigma_hat - sigma_true;
    Ok(RecLoss {
        value: sq / sigma_hat + opts.alpha * w * e * e,
        d_h_hat: diff.iter().map(|d| 2.0 * d / sigma_hat).collect(),
        d_sigma: -sq / (sigma_hat * sigma_hat) + 2.0 * opts.alpha * w * e,
    })
}

/// `‖Ĥ − H‖²` and its gradient.
pub fn sq_error(h_hat: &[f64], h: &[f64]) -> Result<(f64, Vec<f64>)> {
    if h_hat.len() != h.len() {
        return Err(Error::Shape(format!("estimate has {} entries, truth {}", h_hat.len(), h.len())));
    }
    let grad: Vec<f64> = h_hat.iter().zip(h).map(|(a, b)| 2.0 * (a - b)).collect();
    Ok((grad.iter().map(|g| g * g / 4.0).sum(), grad))
}

const PROB_CLAMP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct GanLosses {
    /// `−log D(real) − log(1 − D(fake))`.
    pub d_loss: f64,
    /// `−log D(fake)`.
    pub g_loss: f64,
    /// Gradients of `d_loss` with respect to the real and fake logits.
    pub d_real_logit: f64,
    pub d_fake_logit: f64,
    /// Gradient of `g_loss` with respect to the fake logit.
    pub g_fake_logit: f64,
    /// How many of the logarithms needed clamping.
    pub clamped: usize,
}

fn clamped_log(p: f64, clamped: &mut usize) -> f64 {
    if p < PROB_CLAMP {
        *clamped += 1;
        PROB_CLAMP.ln()
    } else {
        p.ln()
    }
}

/// Discriminator and non-saturating generator losses for one pair of
/// probabilities. Logit gradients use `d(−log σ(l))/dl = σ(l) − 1`.
pub fn gan_losses(d_real: f64, d_fake: f64) -> Result<GanLosses> {
    for p in [d_real, d_fake] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("probability out of range: {p}")));
        }
    }
    let mut clamped = 0;
    let d_loss = -clamped_log(d_real, &mut clamped) - clamped_log(1.0 - d_fake, &mut clamped);
    let g_loss = -clamped_log(d_fake, &mut clamped);
    Ok(GanLosses {
        d_loss,
        g_loss,
        d_real_logit: d_real - 1.0,
        d_fake_logit: d_fake,
        g_fake_logit: d_fake - 1.0,
        clamped,
    })
}
