use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_count, KERNEL};
use crate::tensor_nn::{
    add_conv_grads, conv2d_backward, conv2d_forward, join, Cbam, CbamCache, ConvParams, Module, Rdn, RdnCache,
    Tensor,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MrdnSpec {
    /// Chained residual dense blocks.
    pub n_r: usize,
    /// Dense layers inside each block.
    pub b_layers: usize,
    pub features: usize,
}

impl Default for MrdnSpec {
    fn default() -> Self {
        MrdnSpec {
            n_r: 6,
            b_layers: 4,
            features: 80,
        }
    }
}

impl MrdnSpec {
    pub fn validate(&self, path: &str) -> Result<()> {
        check_count(&join(path, "n_r"), self.n_r, 256)?;
        check_count(&join(path, "b_layers"), self.b_layers, 64)?;
        check_count(&join(path, "features"), self.features, 1024)
    }

    pub fn num_values(&self) -> usize {
        let f = self.features;
        let k2 = KERNEL * KERNEL;
        let conv = |o: usize, i: usize, k: usize| o * i * k + o;
        let dense: usize = (0..self.b_layers).map(|i| conv(f, f + i * f, k2)).sum();
        let rdn = dense + conv(f, f + self.b_layers * f, 1);
        conv(f, 1, k2) + 2 * conv(f, f, k2) + self.n_r * rdn + conv(1, f, k2)
    }
}

/// Input conv → CBAM → chained RDNs → output conv, with the prediction
/// subtracted from the observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Mrdn {
    pub spec: MrdnSpec,
    pub input: ConvParams,
    pub cbam: Cbam,
    pub rdns: Vec<Rdn>,
    pub output: ConvParams,
}

#[derive(Clone, Debug)]
pub struct MrdnCache {
    y: Tensor,
    cbam: CbamCache,
    rdns: Vec<RdnCache>,
    last: Tensor,
}

impl MrdnCache {
    pub fn kink_distance(&self) -> f64 {
        self.rdns
            .iter()
            .map(RdnCache::kink_distance)
            .fold(self.cbam.kink_distance(), f64::min)
    }
}

impl Mrdn {
    pub fn new(spec: MrdnSpec) -> Self {
        let f = spec.features;
        Mrdn {
            spec,
            input: ConvParams::same(f, 1, KERNEL),
            cbam: Cbam::new(f, KERNEL),
            rdns: (0..spec.n_r).map(|_| Rdn::new(f, f, spec.b_layers, KERNEL)).collect(),
            output: ConvParams::same(1, f, KERNEL),
        }
    }

    /// Uniform fan-in weights everywhere except the output conv, which stays
    /// zero so the untrained model returns its input.
    pub fn init_uniform<R: Rng + ?Sized>(self, rng: &mut R) -> Self {
        Mrdn {
            spec: self.spec,
            input: self.input.init_uniform(rng),
            cbam: self.cbam.init_uniform(rng),
            rdns: self.rdns.into_iter().map(|r| r.init_uniform(rng)).collect(),
            output: self.output,
        }
    }

    pub fn forward(&self, y: &Tensor) -> Result<(Tensor, MrdnCache)> {
        let [_, c, _, _] = y.dims4()?;
        if c != 1 {
            return Err(Error::Shape(format!("observation batch must have one channel, got {c}")));
        }
        y.check_finite("input")?;
        let a = conv2d_forward(y, &self.input)?;
        a.check_finite("input_conv")?;
        let (mut x, cbam) = self.cbam.forward(&a)?;
        x.check_finite("cbam")?;
        let mut rdns = Vec::with_capacity(self.rdns.len());
        for (i, rdn) in self.rdns.iter().enumerate() {
            let (out, cache) = rdn.forward(&x)?;
            out.check_finite(&format!("rdns.{i}"))?;
            rdns.push(cache);
            x = out;
        }
        let pred = conv2d_forward(&x, &self.output)?;
        pred.check_finite("output")?;
        let h_hat = y.sub(&pred)?;
        Ok((
            h_hat,
            MrdnCache {
                y: y.clone(),
                cbam,
                rdns,
                last: x,
            },
        ))
    }

    pub fn backward(&self, cache: &MrdnCache, d_h_hat: &Tensor, grads: &mut Mrdn) -> Result<()> {
        let mut d_pred = d_h_hat.clone();
        d_pred.scale(-1.0);
        let g = conv2d_backward(&cache.last, &self.output, &d_pred)?;
        add_conv_grads(&mut grads.output, &g)?;
        let mut d = g.d_input;
        for (i, rdn) in self.rdns.iter().enumerate().rev() {
            d = rdn.backward(&cache.rdns[i], &d, &mut grads.rdns[i])?;
        }
        let d = self.cbam.backward(&cache.cbam, &d, &mut grads.cbam)?;
        let g = conv2d_backward(&cache.y, &self.input, &d)?;
        add_conv_grads(&mut grads.input, &g)
    }
}

impl Module for Mrdn {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.input.params(&join(prefix, "input"), out);
        self.cbam.params(&join(prefix, "cbam"), out);
        self.rdns.params(&join(prefix, "rdns"), out);
        self.output.params(&join(prefix, "output"), out);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.input.params_mut(out);
        self.cbam.params_mut(out);
        self.rdns.params_mut(out);
        self.output.params_mut(out);
    }
}
