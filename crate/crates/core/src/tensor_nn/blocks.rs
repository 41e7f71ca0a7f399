use rand::Rng;

use super::activation::{kink_distance, relu_backward, relu_forward, softmax_backward, softmax_forward};
use super::conv::{conv2d_backward, conv2d_forward, ConvParams, LayerGrads};
use super::module::{join, Module};
use super::norm::{BatchNorm, NormCache};
use super::tensor::{concat_channels, split_channels};
use super::{Mode, Tensor};
use crate::Result;

pub(crate) fn add_conv_grads(acc: &mut ConvParams, g: &LayerGrads) -> Result<()> {
    acc.weight.add_assign(&g.d_weight)?;
    acc.bias.add_assign(&g.d_bias)
}

#[derive(Clone, Debug)]
pub struct ResidualCache {
    pub input: Tensor,
    pub pre: Tensor,
}

/// `g(x) = max(0, W * x + b)`.
pub fn residual_block_forward(x: &Tensor, p: &ConvParams) -> Result<(Tensor, ResidualCache)> {
    let pre = conv2d_forward(x, p)?;
    let out = relu_forward(&pre);
    Ok((
        out,
        ResidualCache {
            input: x.clone(),
            pre,
        },
    ))
}

pub fn residual_block_backward(
    p: &ConvParams,
    cache: &ResidualCache,
    d_out: &Tensor,
) -> Result<LayerGrads> {
    let d_pre = relu_backward(&cache.pre, d_out)?;
    conv2d_backward(&cache.input, p, &d_pre)
}

/// Conv → optional normalisation → ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct ResBlock {
    pub conv: ConvParams,
    pub norm: Option<BatchNorm>,
}

#[derive(Clone, Debug)]
pub struct ResBlockCache {
    input: Tensor,
    norm: Option<NormCache>,
    pre: Tensor,
}

impl ResBlockCache {
    pub fn kink_distance(&self) -> f64 {
        kink_distance(&self.pre)
    }
}

impl ResBlock {
    pub fn new(out_ch: usize, in_ch: usize, k: usize, with_norm: bool) -> Self {
        ResBlock {
            conv: ConvParams::same(out_ch, in_ch, k),
            norm: with_norm.then(|| BatchNorm::new(out_ch)),
        }
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, ResBlockCache)> {
        let z = conv2d_forward(x, &self.conv)?;
        let (pre, norm) = match &self.norm {
            Some(bn) => {
                let (y, c) = bn.forward(&z, mode)?;
                (y, Some(c))
            }
            None => (z, None),
        };
        let out = relu_forward(&pre);
        Ok((
            out,
            ResBlockCache {
                input: x.clone(),
                norm,
                pre,
            },
        ))
    }

    pub fn backward(&self, cache: &ResBlockCache, d_out: &Tensor, grads: &mut ResBlock) -> Result<Tensor> {
        let mut d = relu_backward(&cache.pre, d_out)?;
        if let (Some(bn), Some(nc), Some(gbn)) = (&self.norm, &cache.norm, grads.norm.as_mut()) {
            d = bn.backward(nc, &d, gbn)?;
        }
        let g = conv2d_backward(&cache.input, &self.conv, &d)?;
        add_conv_grads(&mut grads.conv, &g)?;
        Ok(g.d_input)
    }

    pub fn update_running(&mut self, cache: &ResBlockCache) {
        if let (Some(bn), Some(nc)) = (self.norm.as_mut(), cache.norm.as_ref()) {
            bn.update_running(nc);
        }
    }
}

// With normalisation the conv bias is cancelled by the mean subtraction, so
// it stays at zero and is not listed as a parameter.
impl Module for ResBlock {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        let conv = join(prefix, "conv");
        if self.norm.is_some() {
            out.push((join(&conv, "weight"), &self.conv.weight));
        } else {
            self.conv.params(&conv, out);
        }
        self.norm.params(&join(prefix, "norm"), out);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        if self.norm.is_some() {
            out.push(&mut self.conv.weight);
        } else {
            self.conv.params_mut(out);
        }
        self.norm.params_mut(out);
    }

    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.norm.buffers(&join(prefix, "norm"), out);
    }

    fn buffers_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.norm.buffers_mut(out);
    }
}

/// Residual dense block.
///
/// Layer `n` sees the channel concatenation of the block input and the outputs
/// of layers `1..n`; a 1×1 fusion convolution maps the full concatenation back
/// to the input width and the block input is added on top.
#[derive(Clone, Debug, PartialEq)]
pub struct Rdn {
    pub layers: Vec<ConvParams>,
    pub fusion: ConvParams,
}

#[derive(Clone, Debug)]
pub struct RdnCache {
    feats: Vec<Tensor>,
    pre: Vec<Tensor>,
}

impl RdnCache {
    pub fn kink_distance(&self) -> f64 {
        self.pre.iter().map(kink_distance).fold(f64::INFINITY, f64::min)
    }
}

impl Rdn {
    /// Zero-initialised block with `b_layers` dense layers of `growth`
    /// channels each.
    pub fn new(features: usize, growth: usize, b_layers: usize, k: usize) -> Self {
        let layers = (0..b_layers)
            .map(|n| ConvParams::same(growth, features + n * growth, k))
            .collect();
        Rdn {
            layers,
            fusion: ConvParams::same(features, features + b_layers * growth, 1),
        }
    }

    pub fn init_uniform<R: Rng + ?Sized>(self, rng: &mut R) -> Self {
        Rdn {
            layers: self.layers.into_iter().map(|l| l.init_uniform(rng)).collect(),
            fusion: self.fusion.init_uniform(rng),
        }
    }

    pub fn features(&self) -> usize {
        self.fusion.out_channels()
    }

    fn channel_sizes(&self) -> Vec<usize> {
        std::iter::once(self.features())
            .chain(self.layers.iter().map(|l| l.out_channels()))
            .collect()
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, RdnCache)> {
        let mut feats = vec![x.clone()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let inp = concat_channels(&feats.iter().collect::<Vec<_>>())?;
            let z = conv2d_forward(&inp, layer)?;
            feats.push(relu_forward(&z));
            pre.push(z);
        }
        let cat = concat_channels(&feats.iter().collect::<Vec<_>>())?;
        let mut out = conv2d_forward(&cat, &self.fusion)?;
        out.add_assign(x)?;
        Ok((out, RdnCache { feats, pre }))
    }

    pub fn backward(&self, cache: &RdnCache, d_out: &Tensor, grads: &mut Rdn) -> Result<Tensor> {
        let sizes = self.channel_sizes();
        let cat = concat_channels(&cache.feats.iter().collect::<Vec<_>>())?;
        let g = conv2d_backward(&cat, &self.fusion, d_out)?;
        add_conv_grads(&mut grads.fusion, &g)?;
        let mut d_feats = split_channels(&g.d_input, &sizes)?;
        d_feats[0].add_assign(d_out)?;
        for n in (0..self.layers.len()).rev() {
            let d_z = relu_backward(&cache.pre[n], &d_feats[n + 1])?;
            let inp = concat_channels(&cache.feats[..=n].iter().collect::<Vec<_>>())?;
            let g = conv2d_backward(&inp, &self.layers[n], &d_z)?;
            add_conv_grads(&mut grads.layers[n], &g)?;
            for (acc, part) in d_feats.iter_mut().zip(split_channels(&g.d_input, &sizes[..=n])?) {
                acc.add_assign(&part)?;
            }
        }
        Ok(d_feats.swap_remove(0))
    }
}

impl Module for Rdn {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.layers.params(&join(prefix, "layers"), out);
        self.fusion.params(&join(prefix, "fusion"), out);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.layers.params_mut(out);
        self.fusion.params_mut(out);
    }
}

/// `A(x) = c ∘ r ∘ c(x)`: two convolutions around a ReLU, no gating.
#[derive(Clone, Debug, PartialEq)]
pub struct Cbam {
    pub first: ConvParams,
    pub second: ConvParams,
}

#[derive(Clone, Debug)]
pub struct CbamCache {
    input: Tensor,
    pre: Tensor,
    hidden: Tensor,
}

impl CbamCache {
    pub fn kink_distance(&self) -> f64 {
        kink_distance(&self.pre)
    }
}

impl Cbam {
    pub fn new(features: usize, k: usize) -> Self {
        Cbam {
            first: ConvParams::same(features, features, k),
            second: ConvParams::same(features, features, k),
        }
    }

    pub fn init_uniform<R: Rng + ?Sized>(self, rng: &mut R) -> Self {
        Cbam {
            first: self.first.init_uniform(rng),
            second: self.second.init_uniform(rng),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, CbamCache)> {
        let pre = conv2d_forward(x, &self.first)?;
        let hidden = relu_forward(&pre);
        let out = conv2d_forward(&hidden, &self.second)?;
        Ok((
            out,
            CbamCache {
                input: x.clone(),
                pre,
                hidden,
            },
        ))
    }

    pub fn backward(&self, cache: &CbamCache, d_out: &Tensor, grads: &mut Cbam) -> Result<Tensor> {
        let g2 = conv2d_backward(&cache.hidden, &self.second, d_out)?;
        add_conv_grads(&mut grads.second, &g2)?;
        let d_pre = relu_backward(&cache.pre, &g2.d_input)?;
        let g1 = conv2d_backward(&cache.input, &self.first, &d_pre)?;
        add_conv_grads(&mut grads.first, &g1)?;
        Ok(g1.d_input)
    }
}

impl Module for Cbam {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.first.params(&join(prefix, "first"), out);
        self.second.params(&join(prefix, "second"), out);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.first.params_mut(out);
        self.second.params_mut(out);
    }
}

/// Per-pixel affine map to one channel followed by a softmax over all spatial
/// positions of each sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxLayer {
    pub affine: ConvParams,
}

#[derive(Clone, Debug)]
pub struct SoftmaxCache {
    input: Tensor,
    probs: Tensor,
}

impl SoftmaxLayer {
    pub fn new(in_ch: usize) -> Self {
        SoftmaxLayer {
            affine: ConvParams::same(1, in_ch, 1),
        }
    }

    pub fn init_uniform<R: Rng + ?Sized>(self, rng: &mut R) -> Self {
        SoftmaxLayer {
            affine: self.affine.init_uniform(rng),
        }
    }

    /// Returns `(n, 1, h, w)` weights summing to one per sample.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, SoftmaxCache)> {
        let logits = conv2d_forward(x, &self.affine)?;
        let shape = logits.shape().to_vec();
        let flat = logits.reshape(&[shape[0], shape[2] * shape[3]])?;
        let probs = softmax_forward(&flat, 1)?.reshape(&shape)?;
        Ok((
            probs.clone(),
            SoftmaxCache {
                input: x.clone(),
                probs,
            },
        ))
    }

    pub fn backward(&self, cache: &SoftmaxCache, d_probs: &Tensor, grads: &mut SoftmaxLayer) -> Result<Tensor> {
        let shape = cache.probs.shape().to_vec();
        let flat = [shape[0], shape[2] * shape[3]];
        let d_logits = softmax_backward(
            &cache.probs.clone().reshape(&flat)?,
            &d_probs.clone().reshape(&flat)?,
            1,
        )?
        .reshape(&shape)?;
        let g = conv2d_backward(&cache.input, &self.affine, &d_logits)?;
        add_conv_grads(&mut grads.affine, &g)?;
        Ok(g.d_input)
    }
}

// Softmax is invariant to a constant shift of its logits, so the affine bias
// has no effect and is not listed as a parameter.
impl Module for SoftmaxLayer {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((join(prefix, "affine.weight"), &self.affine.weight));
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.affine.weight);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_1x1(c: usize) -> ConvParams {
        let mut p = ConvParams::same(c, c, 1);
        for i in 0..c {
            p.weight.data_mut()[i * c + i] = 1.0;
        }
        p
    }

    #[test]
    fn identity_residual_block_passes_nonnegative_input() {
        let x = Tensor::from_fn(&[1, 2, 3, 3], |i| i as f64 * 0.5);
        let (y, _) = residual_block_forward(&x, &identity_1x1(2)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_rdn_is_pass_through() {
        let rdn = Rdn::new(3, 3, 2, 3);
        let x = Tensor::from_fn(&[2, 3, 4, 4], |i| (i as f64).sin());
        let (y, _) = rdn.forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn identity_cbam_passes_nonnegative_input() {
        let cbam = Cbam {
            first: identity_1x1(2),
            second: identity_1x1(2),
        };
        let x = Tensor::from_fn(&[1, 2, 2, 3], |i| i as f64);
        assert_eq!(cbam.forward(&x).unwrap().0, x);
    }

    #[test]
    fn softmax_layer_weights_sum_to_one() {
        let layer = SoftmaxLayer::new(2).init_uniform(&mut crate::rng::stream(0, "t", 0));
        let x = Tensor::from_fn(&[3, 2, 2, 4], |i| (i as f64 * 0.7).cos());
        let (p, _) = layer.forward(&x).unwrap();
        for b in 0..3 {
            assert!((p.plane(b, 0).iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }
}
