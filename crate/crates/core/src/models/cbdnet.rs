use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_count, KERNEL, SIGMA_FLOOR};
use crate::tensor_nn::{
    add_conv_grads, concat_channels, conv2d_backward, conv2d_forward, join, split_channels, ConvParams, Mode,
    Module, ResBlock, ResBlockCache, SoftmaxCache, SoftmaxLayer, Tensor,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CbdNetSpec {
    /// Conv+ReLU layers in the noise-level subnetwork.
    pub b_c: usize,
    /// Softmax pooling heads in the noise-level subnetwork.
    pub k_s: usize,
    /// Conv→norm→ReLU blocks in the denoising subnetwork.
    pub b_blocks: usize,
    pub features: usize,
    pub batch_norm: bool,
}

impl Default for CbdNetSpec {
    fn default() -> Self {
        CbdNetSpec {
            b_c: 5,
            k_s: 1,
            b_blocks: 12,
            features: 96,
            batch_norm: true,
        }
    }
}

impl CbdNetSpec {
    pub fn validate(&self, path: &str) -> Result<()> {
        check_count(&join(path, "b_c"), self.b_c, 256)?;
        check_count(&join(path, "k_s"), self.k_s, 256)?;
        check_count(&join(path, "b_blocks"), self.b_blocks, 256)?;
        check_count(&join(path, "features"), self.features, 1024)
    }

    /// Trainable scalars plus normalisation buffers, from the layer shapes.
    pub fn num_values(&self) -> usize {
        let f = self.features;
        let k2 = KERNEL * KERNEL;
        let conv = |o: usize, i: usize, k: usize| o * i * k + o;
        let estimator = conv(f, 1, k2) + (self.b_c - 1) * conv(f, f, k2) + self.k_s * (f + conv(1, f, 1));
        let norm = if self.batch_norm { 4 * f - f } else { 0 };
        let denoiser = conv(f, 2, k2) + (self.b_blocks - 1) * conv(f, f, k2) + self.b_blocks * norm + conv(1, f, k2);
        estimator + denoiser
    }
}

/// Noise-level subnetwork: a conv stack followed by softmax-weighted spatial
/// pooling of a per-pixel linear read-out, averaged over heads.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseEstimator {
    pub convs: Vec<ResBlock>,
    pub heads: Vec<SoftmaxLayer>,
    pub values: Vec<ConvParams>,
}

/// Non-blind denoiser on the stacked (observation, noise map) image.
#[derive(Clone, Debug, PartialEq)]
pub struct Denoiser {
    pub blocks: Vec<ResBlock>,
    pub output: ConvParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CbdNet {
    pub spec: CbdNetSpec,
    pub estimator: NoiseEstimator,
    pub denoiser: Denoiser,
}

#[derive(Clone, Debug)]
pub struct CbdOutput {
    pub h_hat: Tensor,
    pub sigma_hat: Vec<f64>,
    pub noise_map: Tensor,
}

#[derive(Clone, Debug)]
pub struct CbdCache {
    conv_caches: Vec<ResBlockCache>,
    features: Tensor,
    heads: Vec<(SoftmaxCache, Tensor, Tensor)>,
    t: Vec<f64>,
    block_caches: Vec<ResBlockCache>,
    last: Tensor,
}

impl CbdCache {
    pub fn kink_distance(&self) -> f64 {
        let relu = self
            .conv_caches
            .iter()
            .chain(&self.block_caches)
            .map(ResBlockCache::kink_distance)
            .fold(f64::INFINITY, f64::min);
        self.t.iter().map(|t| t.abs()).fold(relu, f64::min)
    }
}

impl CbdNet {
    /// All weights and biases zero; every normalisation is the identity affine.
    pub fn new(spec: CbdNetSpec) -> Self {
        let f = spec.features;
        let convs = (0..spec.b_c)
            .map(|i| ResBlock::new(f, if i == 0 { 1 } else { f }, KERNEL, false))
            .collect();
        let blocks = (0..spec.b_blocks)
            .map(|i| ResBlock::new(f, if i == 0 { 2 } else { f }, KERNEL, spec.batch_norm))
            .collect();
        CbdNet {
            spec,
            estimator: NoiseEstimator {
                convs,
                heads: (0..spec.k_s).map(|_| SoftmaxLayer::new(f)).collect(),
                values: (0..spec.k_s).map(|_| ConvParams::same(1, f, 1)).collect(),
            },
            denoiser: Denoiser {
                blocks,
                output: ConvParams::same(1, f, KERNEL),
            },
        }
    }

    /// Uniform fan-in weights everywhere except the denoiser output conv,
    /// which stays zero so the untrained model returns its input.
    pub fn init_uniform<R: Rng + ?Sized>(mut self, rng: &mut R) -> Self {
        let e = &mut self.estimator;
        for c in &mut e.convs {
            c.conv = c.conv.clone().init_uniform(rng);
        }
        for (h, v) in e.heads.iter_mut().zip(&mut e.values) {
            *h = h.clone().init_uniform(rng);
            *v = v.clone().init_uniform(rng);
        }
        let d = &mut self.denoiser;
        for b in &mut d.blocks {
            b.conv = b.conv.clone().init_uniform(rng);
        }
        self
    }

    /// `y` is a batch of packed observations, shape `(n, 1, N_b, 2N_u)`.
    pub fn forward(&self, y: &Tensor, mode: Mode) -> Result<(CbdOutput, CbdCache)> {
        let [n, c, h, w] = y.dims4()?;
        if c != 1 {
            return Err(Error::Shape(format!("observation batch must have one channel, got {c}")));
        }
        y.check_finite("input")?;

        let mut x = y.clone();
        let mut conv_caches = Vec::with_capacity(self.estimator.convs.len());
        for (i, block) in self.estimator.convs.iter().enumerate() {
            let (out, cache) = block.forward(&x, mode)?;
            out.check_finite(&format!("estimator.convs.{i}"))?;
            conv_caches.push(cache);
            x = out;
        }
        let features = x;

        let k_s = self.estimator.heads.len() as f64;
        let mut t = vec![0.0; n];
        let mut heads = Vec::with_capacity(self.estimator.heads.len());
        for (head, value) in self.estimator.heads.iter().zip(&self.estimator.values) {
            let (p, cache) = head.forward(&features)?;
            let v = conv2d_forward(&features, value)?;
            for (b, tb) in t.iter_mut().enumerate() {
                let s: f64 = p.plane(b, 0).iter().zip(v.plane(b, 0)).map(|(a, b)| a * b).sum();
                *tb += s / k_s;
            }
            heads.push((cache, p, v));
        }
        let sigma_hat: Vec<f64> = t.iter().map(|t| t.abs() + SIGMA_FLOOR).collect();
        if let Some(b) = sigma_hat.iter().position(|s| !s.is_finite()) {
            return Err(Error::numeric("estimator.heads", format!("sigma estimate of sample {b} is not finite")));
        }

        let mut noise_map = Tensor::zeros(&[n, 1, h, w]);
        for (b, s) in sigma_hat.iter().enumerate() {
            noise_map.plane_mut(b, 0).fill(*s);
        }
        let mut x = concat_channels(&[y, &noise_map])?;
        let mut block_caches = Vec::with_capacity(self.denoiser.blocks.len());
        for (i, block) in self.denoiser.blocks.iter().enumerate() {
            let (out, cache) = block.forward(&x, mode)?;
            out.check_finite(&format!("denoiser.blocks.{i}"))?;
            block_caches.push(cache);
            x = out;
        }
        let h_m = conv2d_forward(&x, &self.denoiser.output)?;
        h_m.check_finite("denoiser.output")?;
        let h_hat = y.sub(&h_m)?;

        Ok((
            CbdOutput {
                h_hat,
                sigma_hat,
                noise_map,
            },
            CbdCache {
                conv_caches,
                features,
                heads,
                t,
                block_caches,
                last: x,
            },
        ))
    }

    /// Accumulates into `grads` the gradient of a loss whose partials with
    /// respect to the estimate and the noise level are `d_h_hat`, `d_sigma`.
    pub fn backward(&self, cache: &CbdCache, d_h_hat: &Tensor, d_sigma: &[f64], grads: &mut CbdNet) -> Result<()> {
        let n = cache.t.len();
        if d_sigma.len() != n {
            return Err(Error::Shape(format!("expected {n} sigma gradients, got {}", d_sigma.len())));
        }
        let mut d_hm = d_h_hat.clone();
        d_hm.scale(-1.0);
        let g = conv2d_backward(&cache.last, &self.denoiser.output, &d_hm)?;
        add_conv_grads(&mut grads.denoiser.output, &g)?;
        let mut d = g.d_input;
        for (i, block) in self.denoiser.blocks.iter().enumerate().rev() {
            d = block.backward(&cache.block_caches[i], &d, &mut grads.denoiser.blocks[i])?;
        }
        let d_map = split_channels(&d, &[1, 1])?.pop().expect("two parts");

        let k_s = self.estimator.heads.len() as f64;
        let d_t: Vec<f64> = (0..n)
            .map(|b| {
                let total = d_sigma[b] + d_map.plane(b, 0).iter().sum::<f64>();
                total * cache.t[b].signum() / k_s
            })
            .collect();
        let mut d_features = Tensor::zeros(cache.features.shape());
        for (k, (head, value)) in self.estimator.heads.iter().zip(&self.estimator.values).enumerate() {
            let (hc, p, v) = &cache.heads[k];
            let mut d_p = v.clone();
            let mut d_v = p.clone();
            for (b, dt) in d_t.iter().enumerate() {
                d_p.plane_mut(b, 0).iter_mut().for_each(|x| *x *= dt);
                d_v.plane_mut(b, 0).iter_mut().for_each(|x| *x *= dt);
            }
            d_features.add_assign(&head.backward(hc, &d_p, &mut grads.estimator.heads[k])?)?;
            let g = conv2d_backward(&cache.features, value, &d_v)?;
            add_conv_grads(&mut grads.estimator.values[k], &g)?;
            d_features.add_assign(&g.d_input)?;
        }
        let mut d = d_features;
        for (i, block) in self.estimator.convs.iter().enumerate().rev() {
            d = block.backward(&cache.conv_caches[i], &d, &mut grads.estimator.convs[i])?;
        }
        Ok(())
    }

    pub fn update_running(&mut self, cache: &CbdCache) {
        for (b, c) in self.denoiser.blocks.iter_mut().zip(&cache.block_caches) {
            b.update_running(c);
        }
    }
}

impl Module for CbdNet {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        let e = join(prefix, "estimator");
        self.estimator.convs.params(&join(&e, "convs"), out);
        self.estimator.heads.params(&join(&e, "heads"), out);
        self.estimator.values.params(&join(&e, "values"), out);
        let d = join(prefix, "denoiser");
        self.denoiser.blocks.params(&join(&d, "blocks"), out);
        self.denoiser.output.params(&join(&d, "output"), out);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.estimator.convs.params_mut(out);
        self.estimator.heads.params_mut(out);
        self.estimator.values.params_mut(out);
        self.denoiser.blocks.params_mut(out);
        self.denoiser.output.params_mut(out);
    }

    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.denoiser
            .blocks
            .buffers(&join(&join(prefix, "denoiser"), "blocks"), out);
    }

    fn buffers_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.denoiser.blocks.buffers_mut(out);
    }
}
