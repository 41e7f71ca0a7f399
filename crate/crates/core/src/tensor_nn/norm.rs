use super::module::{join, Module};
use super::{Mode, Tensor};
use crate::{Error, Result};

const EPS: f64 = 1e-5;
const MOMENTUM: f64 = 0.1;

/// Per-channel affine normalisation over batch statistics.
///
/// Training mode normalises with the statistics of the current batch (over
/// batch, height and width); evaluation mode uses the running estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

#[derive(Clone, Debug)]
pub struct NormCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
    count: usize,
    mode: Mode,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, NormCache)> {
        let [n, c, h, w] = x.dims4()?;
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "norm expects {} channels, got {c}",
                self.channels()
            )));
        }
        let count = n * h * w;
        let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
            Mode::Train => (0..c)
                .map(|ci| {
                    let vals = (0..n).flat_map(|b| x.plane(b, ci).iter());
                    let m = vals.clone().sum::<f64>() / count as f64;
                    let v = vals.map(|v| (v - m) * (v - m)).sum::<f64>() / count as f64;
                    (m, v)
                })
                .unzip(),
            Mode::Eval => (
                self.running_mean.data().to_vec(),
                self.running_var.data().to_vec(),
            ),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + EPS).sqrt()).collect();
        let mut x_hat = x.clone();
        let mut y = x.clone();
        for b in 0..n {
            for ci in 0..c {
                let (g, be) = (self.gamma.data()[ci], self.beta.data()[ci]);
                let xh = x_hat.plane_mut(b, ci);
                for v in xh.iter_mut() {
                    *v = (*v - mean[ci]) * inv_std[ci];
                }
                let xh = x_hat.plane(b, ci).to_vec();
                for (o, v) in y.plane_mut(b, ci).iter_mut().zip(xh) {
                    *o = g * v + be;
                }
            }
        }
        Ok((
            y,
            NormCache {
                x_hat,
                inv_std,
                mean,
                var,
                count,
                mode,
            },
        ))
    }

    /// Accumulates `d_gamma`, `d_beta` into `grads`, returns `d_input`.
    pub fn backward(&self, cache: &NormCache, d_out: &Tensor, grads: &mut BatchNorm) -> Result<Tensor> {
        if d_out.shape() != cache.x_hat.shape() {
            return Err(Error::Shape("norm backward shape mismatch".into()));
        }
        let [n, c, _, _] = d_out.dims4()?;
        let m = cache.count as f64;
        let mut dx = Tensor::zeros(d_out.shape());
        for ci in 0..c {
            let g = self.gamma.data()[ci];
            let mut sum_dy = 0.0;
            let mut sum_dy_xh = 0.0;
            for b in 0..n {
                for (dy, xh) in d_out.plane(b, ci).iter().zip(cache.x_hat.plane(b, ci)) {
                    sum_dy += dy;
                    sum_dy_xh += dy * xh;
                }
            }
            grads.gamma.data_mut()[ci] += sum_dy_xh;
            grads.beta.data_mut()[ci] += sum_dy;
            let k = g * cache.inv_std[ci];
            for b in 0..n {
                let dy = d_out.plane(b, ci);
                let xh = cache.x_hat.plane(b, ci);
                let out = dx.plane_mut(b, ci);
                match cache.mode {
                    Mode::Train => {
                        for ((o, &d), &x) in out.iter_mut().zip(dy).zip(xh) {
                            *o = k * (d - sum_dy / m - x * sum_dy_xh / m);
                        }
                    }
                    Mode::Eval => {
                        for (o, &d) in out.iter_mut().zip(dy) {
                            *o = k * d;
                        }
                    }
                }
            }
        }
        Ok(dx)
    }

    /// Fold a training-mode batch into the running statistics.
    pub fn update_running(&mut self, cache: &NormCache) {
        if cache.mode != Mode::Train {
            return;
        }
        let unbias = if cache.count > 1 {
            cache.count as f64 / (cache.count - 1) as f64
        } else {
            1.0
        };
        for ci in 0..self.channels() {
            let rm = &mut self.running_mean.data_mut()[ci];
            *rm = (1.0 - MOMENTUM) * *rm + MOMENTUM * cache.mean[ci];
            let rv = &mut self.running_var.data_mut()[ci];
            *rv = (1.0 - MOMENTUM) * *rv + MOMENTUM * cache.var[ci] * unbias;
        }
    }
}

impl Module for BatchNorm {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((join(prefix, "gamma"), &self.gamma));
        out.push((join(prefix, "beta"), &self.beta));
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.gamma);
        out.push(&mut self.beta);
    }

    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((join(prefix, "running_mean"), &self.running_mean));
        out.push((join(prefix, "running_var"), &self.running_var));
    }

    fn buffers_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.running_mean);
        out.push(&mut self.running_var);
    }
}
