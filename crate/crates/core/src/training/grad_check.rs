//! Central finite differences against the analytic gradients of the actual
//! training objectives, on micro-sized models.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::steps::{cbdnet_step, discriminator_step, generator_step, mrdn_step, Batch};
use super::RecLossOptions;
use crate::models::{CbdNet, CbdNetSpec, GanCbd, GanSpec, Model, ModelSpec, MrdnSpec};
use crate::tensor_nn::{conv2d_backward, conv2d_forward, ConvParams, Mode, Module, Tensor};
use crate::{rng, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckOptions {
    pub tol: f64,
    /// Finite-difference step.
    pub step: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    /// Minimum distance of every ReLU/abs input from its kink; instances
    /// closer than this are redrawn.
    pub kink_margin: f64,
    pub max_attempts: usize,
    pub n_b: usize,
    pub n_u: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            tol: 1e-5,
            step: 1e-5,
            floor: 1e-6,
            kink_margin: 1e-4,
            max_attempts: 50,
            n_b: 4,
            n_u: 4,
            batch: 2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub model: String,
    pub tol: f64,
    pub max_rel_err: f64,
    pub passed: bool,
    pub kink_distance: f64,
    pub attempts: usize,
    pub tensors: Vec<TensorCheck>,
}

/// Micro-sized architecture of the given kind: 4 features, shallow stacks.
pub fn micro_spec(kind: &str) -> Option<ModelSpec> {
    let cbd = CbdNetSpec {
        b_c: 2,
        k_s: 2,
        b_blocks: 2,
        features: 4,
        batch_norm: true,
    };
    match kind {
        "cbdnet" => Some(ModelSpec::Cbdnet(cbd)),
        "gan_cbd" => Some(ModelSpec::GanCbd(GanSpec {
            generator: cbd,
            disc_layers: 2,
            disc_features: 4,
        })),
        "mrdn" => Some(ModelSpec::Mrdn(MrdnSpec {
            n_r: 1,
            b_layers: 1,
            features: 4,
        })),
        _ => None,
    }
}

pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn compare<M: Module + Clone>(
    prefix: &str,
    model: &M,
    grads: &M,
    opts: &GradCheckOptions,
    loss: impl Fn(&M) -> Result<f64>,
) -> Result<Vec<TensorCheck>> {
    let names: Vec<String> = model.param_list().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grads.param_list().iter().map(|(_, t)| t.data().to_vec()).collect();
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(names.len());
    for (idx, name) in names.iter().enumerate() {
        let len = analytic[idx].len();
        let mut worst: f64 = 0.0;
        for i in 0..len {
            let v = probe.param_list_mut()[idx].data()[i];
            probe.param_list_mut()[idx].data_mut()[i] = v + opts.step;
            let up = loss(&probe)?;
            probe.param_list_mut()[idx].data_mut()[i] = v - opts.step;
            let down = loss(&probe)?;
            probe.param_list_mut()[idx].data_mut()[i] = v;
            let numeric = (up - down) / (2.0 * opts.step);
            worst = worst.max(rel_err(analytic[idx][i], numeric, opts.floor));
        }
        out.push(TensorCheck {
            name: format!("{prefix}{name}"),
            entries: len,
            max_rel_err: worst,
        });
    }
    Ok(out)
}

fn random_batch(opts: &GradCheckOptions, seed: u64) -> Result<Batch> {
    let mut r = rng::stream(seed, "grad-check-data", 0);
    let (h, w) = (opts.n_b, 2 * opts.n_u);
    let shape = [opts.batch, 1, h, w];
    let truth = Tensor::from_fn(&shape, |_| r.random_range(-1.0..1.0));
    let mut y = truth.clone();
    y.data_mut().iter_mut().for_each(|v| *v += r.random_range(-0.3..0.3));
    Ok(Batch {
        y,
        h: truth,
        sigma: (0..opts.batch).map(|_| r.random_range(0.1..0.5)).collect(),
        indices: (0..opts.batch).collect(),
    })
}

fn report(model: &str, opts: &GradCheckOptions, kink: f64, attempts: usize, tensors: Vec<TensorCheck>) -> GradCheckReport {
    let max_rel_err = tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max);
    GradCheckReport {
        model: model.into(),
        tol: opts.tol,
        max_rel_err,
        passed: max_rel_err < opts.tol,
        kink_distance: kink,
        attempts,
        tensors,
    }
}

/// Draws a model and batch until no nonlinearity sits within `kink_margin`
/// of its kink, then compares every parameter gradient.
pub fn grad_check(spec: &ModelSpec, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    spec.validate("model")?;
    let rec = RecLossOptions::default();
    let gan_weight = super::TrainConfig::default().gan_weight;
    for attempt in 0..opts.max_attempts {
        let seed = rng::sub_seed(opts.seed, "grad-check", attempt as u64);
        let mut model = Model::init(spec, seed)?;
        randomize_constants(&mut model, seed);
        let batch = random_batch(opts, seed)?;
        let (kink, tensors) = match &model {
            Model::Mrdn(m) => {
                let r = mrdn_step(m, &batch)?;
                if r.kink_distance < opts.kink_margin {
                    continue;
                }
                let t = compare("", m, &r.grads, opts, |p| Ok(mrdn_step(p, &batch)?.loss))?;
                (r.kink_distance, t)
            }
            Model::Cbdnet(m) => {
                let (r, _) = cbdnet_step(m, &batch, &rec)?;
                if r.kink_distance < opts.kink_margin {
                    continue;
                }
                let t = compare("", m, &r.grads, opts, |p| Ok(cbdnet_step(p, &batch, &rec)?.0.loss))?;
                (r.kink_distance, t)
            }
            Model::GanCbd(g) => {
                let (fake, _) = g.generator.forward(&batch.y, Mode::Train)?;
                let (rd, _) = discriminator_step(&g.discriminator, &batch.h, &fake.h_hat)?;
                let (rg, _, _) = generator_step(g, &batch, &rec, gan_weight)?;
                let kink = rd.kink_distance.min(rg.kink_distance);
                if kink < opts.kink_margin {
                    continue;
                }
                let gen_loss = |p: &CbdNet| -> Result<f64> {
                    let trial = GanCbd {
                        generator: p.clone(),
                        discriminator: g.discriminator.clone(),
                    };
                    Ok(generator_step(&trial, &batch, &rec, gan_weight)?.0.loss)
                };
                let mut t = compare("generator.", &g.generator, &rg.grads, opts, gen_loss)?;
                t.extend(compare("discriminator.", &g.discriminator, &rd.grads, opts, |d| {
                    Ok(discriminator_step(d, &batch.h, &fake.h_hat)?.0.loss)
                })?);
                (kink, t)
            }
        };
        return Ok(report(spec.name(), opts, kink, attempt + 1, tensors));
    }
    Err(Error::Domain(format!(
        "no instance with kink distance above {} in {} attempts",
        opts.kink_margin, opts.max_attempts
    )))
}

/// Move every parameter that initialises to a constant (output convs,
/// normalisation scales and shifts) to a generic point so the gradients of
/// all layers are exercised.
fn randomize_constants(model: &mut Model, seed: u64) {
    let mut r = rng::stream(seed, "grad-check-constants", 0);
    let (blocks, output) = match model {
        Model::Cbdnet(m) => (&mut m.denoiser.blocks, &mut m.denoiser.output),
        Model::GanCbd(g) => (&mut g.generator.denoiser.blocks, &mut g.generator.denoiser.output),
        Model::Mrdn(m) => {
            m.output = m.output.clone().init_uniform(&mut r);
            m.output.bias.data_mut().iter_mut().for_each(|v| *v = r.random_range(-0.5..0.5));
            return;
        }
    };
    *output = output.clone().init_uniform(&mut r);
    output.bias.data_mut().iter_mut().for_each(|v| *v = r.random_range(-0.5..0.5));
    for bn in blocks.iter_mut().filter_map(|b| b.norm.as_mut()) {
        bn.gamma.data_mut().iter_mut().for_each(|v| *v = r.random_range(0.5..1.5));
        bn.beta.data_mut().iter_mut().for_each(|v| *v = r.random_range(-0.5..0.5));
    }
}

/// A single convolution under the linear objective `<R, conv(x)>`. With
/// `corrupt` set, the analytic weight gradient is deliberately scaled by
/// 1.01 so the harness can be shown to fail.
pub fn grad_check_linear(opts: &GradCheckOptions, corrupt: bool) -> Result<GradCheckReport> {
    let mut r = rng::stream(opts.seed, "grad-check-linear", 0);
    let (h, w) = (opts.n_b, 2 * opts.n_u);
    let conv = ConvParams::same(2, 1, 3).init_uniform(&mut r);
    let x = Tensor::from_fn(&[opts.batch, 1, h, w], |_| r.random_range(-1.0..1.0));
    let weights = Tensor::from_fn(&[opts.batch, 2, h, w], |_| r.random_range(-1.0..1.0));
    let objective = |p: &ConvParams| -> Result<f64> {
        let y = conv2d_forward(&x, p)?;
        Ok(y.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum())
    };
    let g = conv2d_backward(&x, &conv, &weights)?;
    let mut grads = conv.zeros_like();
    grads.weight = g.d_weight;
    grads.bias = g.d_bias;
    if corrupt {
        grads.weight.scale(1.01);
    }
    let tensors = compare("", &conv, &grads, opts, objective)?;
    let name = if corrupt { "corrupted_linear" } else { "linear" };
    Ok(report(name, opts, f64::INFINITY, 1, tensors))
}
