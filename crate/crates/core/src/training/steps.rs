//! Loss and gradient of one mini-batch for each model. Shared by the training
//! loop and the finite-difference harness so both see the same objective.

use super::{gan_losses, rec_loss, sq_error, RecLossOptions};
use crate::channel_sim::Sample;
use crate::models::{CbdCache, CbdNet, Discriminator, GanCbd, Mrdn};
use crate::tensor_nn::{Mode, Module, Tensor};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct Batch {
    pub y: Tensor,
    pub h: Tensor,
    pub sigma: Vec<f64>,
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn gather(samples: &[Sample], indices: &[usize]) -> Result<Self> {
        let pick = |f: fn(&Sample) -> &crate::RMatrix| Tensor::from_matrices(indices.iter().map(|&i| f(&samples[i])));
        Ok(Batch {
            y: pick(|s| &s.y)?,
            h: pick(|s| &s.h)?,
            sigma: indices.iter().map(|&i| samples[i].sigma_n).collect(),
            indices: indices.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    fn sample_len(&self) -> usize {
        self.y.len() / self.len()
    }
}

pub struct StepResult<M> {
    /// Mean loss over the batch.
    pub loss: f64,
    pub grads: M,
    pub sigma_hat_mean: Option<f64>,
    /// Smallest distance of any ReLU input (or absolute-value input) from
    /// its kink.
    pub kink_distance: f64,
}

pub fn mrdn_step(m: &Mrdn, b: &Batch) -> Result<StepResult<Mrdn>> {
    let (h_hat, cache) = m.forward(&b.y)?;
    let (n, len) = (b.len(), b.sample_len());
    let mut total = 0.0;
    let mut d = Vec::with_capacity(h_hat.len());
    for i in 0..n {
        let r = i * len..(i + 1) * len;
        let (l, g) = sq_error(&h_hat.data()[r.clone()], &b.h.data()[r])?;
        total += l;
        d.extend(g.into_iter().map(|v| v / n as f64));
    }
    let mut grads = m.zeros_like();
    m.backward(&cache, &Tensor::new(h_hat.shape().to_vec(), d)?, &mut grads)?;
    Ok(StepResult {
        loss: total / n as f64,
        grads,
        sigma_hat_mean: None,
        kink_distance: cache.kink_distance(),
    })
}

/// Reconstruction loss of a CBDNet, plus an optional per-sample extra
/// gradient on the estimate (used for the adversarial term).
fn cbd_rec(
    m: &CbdNet,
    b: &Batch,
    opts: &RecLossOptions,
    extra: Option<&dyn Fn(&Tensor) -> Result<(f64, Tensor)>>,
) -> Result<(StepResult<CbdNet>, CbdCache)> {
    let (out, cache) = m.forward(&b.y, Mode::Train)?;
    let (n, len) = (b.len(), b.sample_len());
    let mut total = 0.0;
    let mut d_h = Vec::with_capacity(out.h_hat.len());
    let mut d_sigma = Vec::with_capacity(n);
    for i in 0..n {
        let r = i * len..(i + 1) * len;
        let l = rec_loss(&out.h_hat.data()[r.clone()], &b.h.data()[r], out.sigma_hat[i], b.sigma[i], opts)?;
        total += l.value;
        d_h.extend(l.d_h_hat.into_iter().map(|v| v / n as f64));
        d_sigma.push(l.d_sigma / n as f64);
    }
    let mut d_h = Tensor::new(out.h_hat.shape().to_vec(), d_h)?;
    let mut loss = total / n as f64;
    if let Some(f) = extra {
        let (l, g) = f(&out.h_hat)?;
        loss += l;
        d_h.add_assign(&g)?;
    }
    let mut grads = m.zeros_like();
    m.backward(&cache, &d_h, &d_sigma, &mut grads)?;
    let sigma_hat_mean = out.sigma_hat.iter().sum::<f64>() / n as f64;
    let kink = cache.kink_distance();
    Ok((
        StepResult {
            loss,
            grads,
            sigma_hat_mean: Some(sigma_hat_mean),
            kink_distance: kink,
        },
        cache,
    ))
}

pub fn cbdnet_step(m: &CbdNet, b: &Batch, opts: &RecLossOptions) -> Result<(StepResult<CbdNet>, CbdCache)> {
    cbd_rec(m, b, opts, None)
}

/// Generator objective: reconstruction loss plus `weight · (−log D(Ĥ))`,
/// averaged over the batch. Discriminator parameters are read only.
pub fn generator_step(
    g: &GanCbd,
    b: &Batch,
    opts: &RecLossOptions,
    weight: f64,
) -> Result<(StepResult<CbdNet>, CbdCache, usize)> {
    let clamped = std::cell::Cell::new(0);
    let kink = std::cell::Cell::new(f64::INFINITY);
    let adversarial = |h_hat: &Tensor| -> Result<(f64, Tensor)> {
        let (p, cache) = g.discriminator.forward(h_hat)?;
        kink.set(cache.kink_distance());
        let n = p.len() as f64;
        let mut loss = 0.0;
        let mut d_logits = Vec::with_capacity(p.len());
        for &pf in &p {
            let l = gan_losses(0.5, pf)?;
            clamped.set(clamped.get() + usize::from(pf < 1e-12));
            loss += weight * l.g_loss / n;
            d_logits.push(weight * l.g_fake_logit / n);
        }
        let mut scratch = g.discriminator.zeros_like();
        let d_in = g.discriminator.backward(&cache, &d_logits, &mut scratch)?;
        Ok((loss, d_in))
    };
    let (mut r, cache) = cbd_rec(&g.generator, b, opts, Some(&adversarial))?;
    r.kink_distance = r.kink_distance.min(kink.get());
    Ok((r, cache, clamped.get()))
}

/// Discriminator objective on true channels versus generator estimates.
pub fn discriminator_step(d: &Discriminator, real: &Tensor, fake: &Tensor) -> Result<(StepResult<Discriminator>, usize)> {
    let (pr, cr) = d.forward(real)?;
    let (pf, cf) = d.forward(fake)?;
    if pr.len() != pf.len() {
        return Err(Error::Shape("real and fake batches differ in size".into()));
    }
    let n = pr.len() as f64;
    let mut loss = 0.0;
    let mut clamped = 0;
    let mut d_real = Vec::with_capacity(pr.len());
    let mut d_fake = Vec::with_capacity(pf.len());
    for (&a, &b) in pr.iter().zip(&pf) {
        let l = gan_losses(a, b)?;
        loss += l.d_loss / n;
        clamped += usize::from(a < 1e-12) + usize::from(1.0 - b < 1e-12);
        d_real.push(l.d_real_logit / n);
        d_fake.push(l.d_fake_logit / n);
    }
    let mut grads = d.zeros_like();
    d.backward(&cr, &d_real, &mut grads)?;
    d.backward(&cf, &d_fake, &mut grads)?;
    Ok((
        StepResult {
            loss,
            grads,
            sigma_hat_mean: None,
            kink_distance: cr.kink_distance().min(cf.kink_distance()),
        },
        clamped,
    ))
}
