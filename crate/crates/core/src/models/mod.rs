//! The three channel estimators and their plumbing: CBDNet (noise-level
//! estimate plus non-blind denoiser), GAN-CBD (a CBDNet generator trained
//! against a discriminator) and MRDN (CBAM followed by chained residual dense
//! blocks).
//!
//! Every estimator maps a batch of packed observations `(n, 1, N_b, 2N_u)` to
//! an estimate of the same shape by predicting the noise image and subtracting
//! it from the observation.

mod cbdnet;
mod checkpoint;
mod complexity;
mod discriminator;
mod mrdn;

pub use cbdnet::{CbdCache, CbdNet, CbdNetSpec, CbdOutput, Denoiser, NoiseEstimator};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointHeader, TensorEntry,
    CHECKPOINT_MAGIC,
};
pub use complexity::{
    cbdnet_formula, count_ops, gan_formula, mrdn_formula, ComplexityReport, ComplexitySetting,
};
pub use discriminator::{DiscCache, Discriminator, DiscriminatorSpec};
pub use mrdn::{Mrdn, MrdnCache, MrdnSpec};

use serde::{Deserialize, Serialize};

use crate::channel_sim::unpack_real;
use crate::tensor_nn::{join, Mode, Module, Tensor};
use crate::{rng, CMatrix, Error, RMatrix, Result};

/// Kernel side of every spatial convolution.
pub const KERNEL: usize = 3;

/// Lower bound added to the noise-level estimate to keep it positive.
pub const SIGMA_FLOOR: f64 = 1e-8;

fn check_count(path: &str, v: usize, max: usize) -> Result<()> {
    if v == 0 || v > max {
        return Err(Error::config(path, format!("must lie in 1..={max}, got {v}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanSpec {
    pub generator: CbdNetSpec,
    pub disc_layers: usize,
    pub disc_features: usize,
}

impl Default for GanSpec {
    fn default() -> Self {
        let d = DiscriminatorSpec::default();
        GanSpec {
            generator: CbdNetSpec::default(),
            disc_layers: d.layers,
            disc_features: d.features,
        }
    }
}

impl GanSpec {
    pub fn discriminator(&self) -> DiscriminatorSpec {
        DiscriminatorSpec {
            layers: self.disc_layers,
            features: self.disc_features,
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        self.generator.validate(&join(path, "generator"))?;
        check_count(&join(path, "disc_layers"), self.disc_layers, 64)?;
        check_count(&join(path, "disc_features"), self.disc_features, 1024)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Cbdnet(CbdNetSpec),
    GanCbd(GanSpec),
    Mrdn(MrdnSpec),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Cbdnet(_) => "cbdnet",
            ModelSpec::GanCbd(_) => "gan_cbd",
            ModelSpec::Mrdn(_) => "mrdn",
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        match self {
            ModelSpec::Cbdnet(s) => s.validate(path),
            ModelSpec::GanCbd(s) => s.validate(path),
            ModelSpec::Mrdn(s) => s.validate(path),
        }
    }

    /// Number of stored scalars (parameters and buffers) of a model built
    /// from this spec.
    pub fn num_values(&self) -> usize {
        match self {
            ModelSpec::Cbdnet(s) => s.num_values(),
            ModelSpec::GanCbd(s) => s.generator.num_values() + s.discriminator().num_values(),
            ModelSpec::Mrdn(s) => s.num_values(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanCbd {
    pub generator: CbdNet,
    pub discriminator: Discriminator,
}

impl GanCbd {
    pub fn spec(&self) -> GanSpec {
        GanSpec {
            generator: self.generator.spec,
            disc_layers: self.discriminator.spec.layers,
            disc_features: self.discriminator.spec.features,
        }
    }
}

impl Module for GanCbd {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.generator.params(&join(prefix, "generator"), out);
        self.discriminator.params(&join(prefix, "discriminator"), out);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.generator.params_mut(out);
        self.discriminator.params_mut(out);
    }

    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.generator.buffers(&join(prefix, "generator"), out);
    }

    fn buffers_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.generator.buffers_mut(out);
    }
}

/// Ordered `(layer id, tensor)` export of every stored tensor.
pub type ModelParams = Vec<(String, Tensor)>;

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Cbdnet(CbdNet),
    GanCbd(GanCbd),
    Mrdn(Mrdn),
}

impl Model {
    /// All trainable tensors zero.
    pub fn zeros(spec: &ModelSpec) -> Self {
        match spec {
            ModelSpec::Cbdnet(s) => Model::Cbdnet(CbdNet::new(*s)),
            ModelSpec::GanCbd(s) => Model::GanCbd(GanCbd {
                generator: CbdNet::new(s.generator),
                discriminator: Discriminator::new(s.discriminator()),
            }),
            ModelSpec::Mrdn(s) => Model::Mrdn(Mrdn::new(*s)),
        }
    }

    /// Fan-in scaled uniform weights, zero biases, from a seed.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate("model")?;
        let mut r = rng::stream(seed, "model-init", 0);
        Ok(match Model::zeros(spec) {
            Model::Cbdnet(m) => Model::Cbdnet(m.init_uniform(&mut r)),
            Model::GanCbd(g) => {
                let mut d = rng::stream(seed, "discriminator-init", 0);
                Model::GanCbd(GanCbd {
                    generator: g.generator.init_uniform(&mut r),
                    discriminator: g.discriminator.init_uniform(&mut d),
                })
            }
            Model::Mrdn(m) => Model::Mrdn(m.init_uniform(&mut r)),
        })
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            Model::Cbdnet(m) => ModelSpec::Cbdnet(m.spec),
            Model::GanCbd(g) => ModelSpec::GanCbd(g.spec()),
            Model::Mrdn(m) => ModelSpec::Mrdn(m.spec),
        }
    }

    pub fn name(&self) -> &'static str {
        self.spec().name()
    }

    /// Channel estimates for a batch of packed observations, using running
    /// normalisation statistics. CBDNet-based models also return their
    /// per-sample noise-level estimates.
    pub fn estimate(&self, y: &Tensor) -> Result<(Tensor, Option<Vec<f64>>)> {
        match self {
            Model::Cbdnet(m) => {
                let (o, _) = m.forward(y, Mode::Eval)?;
                Ok((o.h_hat, Some(o.sigma_hat)))
            }
            Model::GanCbd(g) => {
                let (o, _) = g.generator.forward(y, Mode::Eval)?;
                Ok((o.h_hat, Some(o.sigma_hat)))
            }
            Model::Mrdn(m) => Ok((m.forward(y)?.0, None)),
        }
    }

    /// Complex `N_b × N_u` estimate from one packed `N_b × 2N_u` observation.
    pub fn estimate_matrix(&self, y: &RMatrix) -> Result<CMatrix> {
        let (h, _) = self.estimate(&Tensor::from_matrices([y])?)?;
        unpack_real(&h.to_matrix(0)?)
    }

    /// Parameters followed by buffers, in declaration order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut v = self.param_list();
        self.buffers("", &mut v);
        v
    }

    pub fn export_params(&self) -> ModelParams {
        self.named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect()
    }
}

impl Module for Model {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        match self {
            Model::Cbdnet(m) => m.params(prefix, out),
            Model::GanCbd(m) => m.params(prefix, out),
            Model::Mrdn(m) => m.params(prefix, out),
        }
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        match self {
            Model::Cbdnet(m) => m.params_mut(out),
            Model::GanCbd(m) => m.params_mut(out),
            Model::Mrdn(m) => m.params_mut(out),
        }
    }

    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        match self {
            Model::Cbdnet(m) => m.buffers(prefix, out),
            Model::GanCbd(m) => m.buffers(prefix, out),
            Model::Mrdn(m) => m.buffers(prefix, out),
        }
    }

    fn buffers_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        match self {
            Model::Cbdnet(m) => m.buffers_mut(out),
            Model::GanCbd(m) => m.buffers_mut(out),
            Model::Mrdn(m) => m.buffers_mut(out),
        }
    }
}
