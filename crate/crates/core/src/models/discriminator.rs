use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_count, KERNEL};
use crate::tensor_nn::{
    add_conv_grads, conv2d_backward, conv2d_forward, join, residual_block_backward, residual_block_forward, sigmoid,
    ConvParams, Module, ResidualCache, Tensor,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorSpec {
    pub layers: usize,
    pub features: usize,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        DiscriminatorSpec {
            layers: 4,
            features: 32,
        }
    }
}

impl DiscriminatorSpec {
    pub fn validate(&self, path: &str) -> Result<()> {
        check_count(&join(path, "layers"), self.layers, 64)?;
        check_count(&join(path, "features"), self.features, 1024)
    }

    pub fn num_values(&self) -> usize {
        let f = self.features;
        let k2 = KERNEL * KERNEL;
        (f * k2 + f) + (self.layers - 1) * (f * f * k2 + f) + (f + 1)
    }
}

/// Strided conv+ReLU stages, global average pooling, an affine read-out and a
/// logistic squashing to a probability that the input is a true channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub spec: DiscriminatorSpec,
    pub stages: Vec<ConvParams>,
    /// 1×1 map from the pooled features to one logit.
    pub head: ConvParams,
}

#[derive(Clone, Debug)]
pub struct DiscCache {
    stages: Vec<ResidualCache>,
    last_shape: Vec<usize>,
    pooled: Tensor,
    pub logits: Vec<f64>,
}

impl DiscCache {
    pub fn kink_distance(&self) -> f64 {
        self.stages
            .iter()
            .map(|c| crate::tensor_nn::kink_distance(&c.pre))
            .fold(f64::INFINITY, f64::min)
    }
}

impl Discriminator {
    pub fn new(spec: DiscriminatorSpec) -> Self {
        let f = spec.features;
        Discriminator {
            spec,
            stages: (0..spec.layers)
                .map(|i| ConvParams::zeros(f, if i == 0 { 1 } else { f }, KERNEL, 2, KERNEL / 2))
                .collect(),
            head: ConvParams::same(1, f, 1),
        }
    }

    pub fn init_uniform<R: Rng + ?Sized>(self, rng: &mut R) -> Self {
        Discriminator {
            spec: self.spec,
            stages: self.stages.into_iter().map(|s| s.init_uniform(rng)).collect(),
            head: self.head.init_uniform(rng),
        }
    }

    /// Probabilities in (0, 1), one per sample of the `(n, 1, h, w)` batch.
    pub fn forward(&self, x: &Tensor) -> Result<(Vec<f64>, DiscCache)> {
        let [n, c, _, _] = x.dims4()?;
        if c != 1 {
            return Err(Error::Shape(format!("discriminator input must have one channel, got {c}")));
        }
        x.check_finite("disc.input")?;
        let mut a = x.clone();
        let mut stages = Vec::with_capacity(self.stages.len());
        for (i, p) in self.stages.iter().enumerate() {
            let (out, cache) = residual_block_forward(&a, p)?;
            out.check_finite(&format!("disc.stages.{i}"))?;
            stages.push(cache);
            a = out;
        }
        let [_, f, h, w] = a.dims4()?;
        let area = (h * w) as f64;
        let pooled = Tensor::from_fn(&[n, f, 1, 1], |i| a.plane(i / f, i % f).iter().sum::<f64>() / area);
        let logits = conv2d_forward(&pooled, &self.head)?.into_data();
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::numeric("disc.head", "non-finite logit"));
        }
        let probs = logits.iter().map(|&l| sigmoid(l)).collect();
        Ok((
            probs,
            DiscCache {
                stages,
                last_shape: a.shape().to_vec(),
                pooled,
                logits,
            },
        ))
    }

    /// Backpropagates logit gradients; returns the gradient for the input.
    pub fn backward(&self, cache: &DiscCache, d_logits: &[f64], grads: &mut Discriminator) -> Result<Tensor> {
        let n = cache.logits.len();
        if d_logits.len() != n {
            return Err(Error::Shape(format!("expected {n} logit gradients, got {}", d_logits.len())));
        }
        let d_out = Tensor::new(vec![n, 1, 1, 1], d_logits.to_vec())?;
        let g = conv2d_backward(&cache.pooled, &self.head, &d_out)?;
        add_conv_grads(&mut grads.head, &g)?;
        let s = &cache.last_shape;
        let (f, area) = (s[1], s[2] * s[3]);
        let mut d = Tensor::zeros(s);
        for b in 0..n {
            for c in 0..f {
                let v = g.d_input.data()[b * f + c] / area as f64;
                d.plane_mut(b, c).fill(v);
            }
        }
        for (i, p) in self.stages.iter().enumerate().rev() {
            let g = residual_block_backward(p, &cache.stages[i], &d)?;
            add_conv_grads(&mut grads.stages[i], &g)?;
            d = g.d_input;
        }
        Ok(d)
    }
}

impl Module for Discriminator {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.stages.params(&join(prefix, "stages"), out);
        self.head.params(&join(prefix, "head"), out);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.stages.params_mut(out);
        self.head.params_mut(out);
    }
}
