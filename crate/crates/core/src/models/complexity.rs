use serde::{Deserialize, Serialize};

use super::{CbdNet, Discriminator, Model, ModelSpec, Mrdn, KERNEL};
use crate::tensor_nn::{ConvParams, Module};
use crate::Result;

/// Quantities the training-cost estimates depend on besides the architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexitySetting {
    /// `N` of the closed forms: number of RIS elements.
    pub ris_elements: u64,
    pub batch_size: u64,
    pub iterations: u64,
    /// Input image height and width, `(N_b, 2N_u)`.
    pub image_hw: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub model: String,
    /// Closed-form training cost `N²K²st(...)`.
    pub formula: u128,
    /// Multiply-accumulates of one forward pass on one sample, from the
    /// actual layer shapes.
    pub forward_macs: u64,
    /// `3 · s · t · forward_macs`: each conv costs one forward and two
    /// equally sized backward products (input and weight gradients).
    pub training_macs: u128,
    pub parameters: usize,
}

fn prefix(n: u64, k: u64, s: u64, t: u64) -> u128 {
    (n as u128).pow(2) * (k as u128).pow(2) * s as u128 * t as u128
}

/// `N²K²st(L_d D² + L_e E²)`.
pub fn cbdnet_formula(n: u64, k: u64, s: u64, t: u64, l_d: u64, d: u64, l_e: u64, e: u64) -> u128 {
    prefix(n, k, s, t) * (l_d as u128 * (d as u128).pow(2) + l_e as u128 * (e as u128).pow(2))
}

/// `N²K²st(L_d D² + L_e E² + L_a E_a²)`.
#[allow(clippy::too_many_arguments)]
pub fn gan_formula(n: u64, k: u64, s: u64, t: u64, l_d: u64, d: u64, l_e: u64, e: u64, l_a: u64, e_a: u64) -> u128 {
    cbdnet_formula(n, k, s, t, l_d, d, l_e, e) + prefix(n, k, s, t) * l_a as u128 * (e_a as u128).pow(2)
}

/// `N²K²st L_m² D_m²`.
pub fn mrdn_formula(n: u64, k: u64, s: u64, t: u64, l_m: u64, d_m: u64) -> u128 {
    prefix(n, k, s, t) * (l_m as u128).pow(2) * (d_m as u128).pow(2)
}

fn chain_macs<'a>(convs: impl IntoIterator<Item = &'a ConvParams>, mut hw: (usize, usize)) -> Result<u64> {
    let mut total = 0;
    for c in convs {
        total += c.macs(hw.0, hw.1)?;
        hw = c.output_hw(hw.0, hw.1)?;
    }
    Ok(total)
}

fn cbdnet_macs(m: &CbdNet, (h, w): (usize, usize)) -> Result<u64> {
    let e = &m.estimator;
    let d = &m.denoiser;
    Ok(chain_macs(e.convs.iter().map(|b| &b.conv), (h, w))?
        + chain_macs(e.heads.iter().map(|s| &s.affine), (h, w))?
        + chain_macs(&e.values, (h, w))?
        + chain_macs(d.blocks.iter().map(|b| &b.conv).chain([&d.output]), (h, w))?)
}

fn disc_macs(d: &Discriminator, hw: (usize, usize)) -> Result<u64> {
    Ok(chain_macs(&d.stages, hw)? + d.head.macs(1, 1)?)
}

fn mrdn_macs(m: &Mrdn, hw: (usize, usize)) -> Result<u64> {
    let mut total = chain_macs([&m.input, &m.cbam.first, &m.cbam.second], hw)?;
    for r in &m.rdns {
        total += chain_macs(r.layers.iter().chain([&r.fusion]), hw)?;
    }
    Ok(total + m.output.macs(hw.0, hw.1)?)
}

/// Closed-form training cost next to an exact multiply-accumulate count.
///
/// `L_d` counts every conv of the denoiser (blocks plus output), `L_e` the
/// conv layers of the noise-level subnetwork, `L_a` the discriminator stages
/// and `L_m` the RDNs of MRDN; feature counts are the configured widths.
pub fn count_ops(spec: &ModelSpec, setting: &ComplexitySetting) -> Result<ComplexityReport> {
    spec.validate("model")?;
    let &ComplexitySetting {
        ris_elements: n,
        batch_size: s,
        iterations: t,
        image_hw,
    } = setting;
    let k = KERNEL as u64;
    let model = Model::zeros(spec);
    let (formula, forward_macs) = match (&model, spec) {
        (Model::Cbdnet(m), ModelSpec::Cbdnet(c)) => (
            cbdnet_formula(n, k, s, t, c.b_blocks as u64 + 1, c.features as u64, c.b_c as u64, c.features as u64),
            cbdnet_macs(m, image_hw)?,
        ),
        (Model::GanCbd(g), ModelSpec::GanCbd(c)) => {
            let gen = c.generator;
            (
                gan_formula(
                    n,
                    k,
                    s,
                    t,
                    gen.b_blocks as u64 + 1,
                    gen.features as u64,
                    gen.b_c as u64,
                    gen.features as u64,
                    c.disc_layers as u64,
                    c.disc_features as u64,
                ),
                cbdnet_macs(&g.generator, image_hw)? + disc_macs(&g.discriminator, image_hw)?,
            )
        }
        (Model::Mrdn(m), ModelSpec::Mrdn(c)) => (
            mrdn_formula(n, k, s, t, c.n_r as u64, c.features as u64),
            mrdn_macs(m, image_hw)?,
        ),
        _ => unreachable!("model built from spec"),
    };
    Ok(ComplexityReport {
        model: spec.name().into(),
        formula,
        forward_macs,
        training_macs: 3 * s as u128 * t as u128 * forward_macs as u128,
        parameters: model.num_params(),
    })
}
