use rand::Rng;

use super::module::{join, Module};
use super::Tensor;
use crate::{Error, Result};

/// 2-D convolution parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    /// `(out, in, k_h, k_w)`.
    pub weight: Tensor,
    /// `(out,)`.
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

/// Gradients of one convolution with respect to its weight, bias and input.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub d_weight: Tensor,
    pub d_bias: Tensor,
    pub d_input: Tensor,
}

impl ConvParams {
    pub fn new(weight: Tensor, bias: Tensor, stride: usize, padding: usize) -> Result<Self> {
        let (o, _, kh, kw) = match weight.shape() {
            &[o, i, kh, kw] => (o, i, kh, kw),
            s => return Err(Error::Shape(format!("conv weight must be 4-D, got {s:?}"))),
        };
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Shape(format!("kernel {kh}x{kw} must be odd")));
        }
        if stride == 0 {
            return Err(Error::Shape("stride must be >= 1".into()));
        }
        if bias.shape() != [o] {
            return Err(Error::Shape(format!(
                "bias shape {:?} does not match {o} output channels",
                bias.shape()
            )));
        }
        weight.check_finite("conv weight")?;
        bias.check_finite("conv bias")?;
        Ok(ConvParams {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn zeros(out_ch: usize, in_ch: usize, k: usize, stride: usize, padding: usize) -> Self {
        ConvParams {
            weight: Tensor::zeros(&[out_ch, in_ch, k, k]),
            bias: Tensor::zeros(&[out_ch]),
            stride,
            padding,
        }
    }

    /// Size-preserving `k × k` convolution (stride 1, padding `k / 2`).
    pub fn same(out_ch: usize, in_ch: usize, k: usize) -> Self {
        Self::zeros(out_ch, in_ch, k, 1, k / 2)
    }

    /// Weights uniform in `±sqrt(6 / fan_in)`, zero bias.
    pub fn init_uniform<R: Rng + ?Sized>(mut self, rng: &mut R) -> Self {
        let fan_in = self.in_channels() * self.kernel().0 * self.kernel().1;
        let bound = (6.0 / fan_in as f64).sqrt();
        for v in self.weight.data_mut() {
            *v = rng.random_range(-bound..bound);
        }
        self.bias.fill(0.0);
        self
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.shape()[2], self.weight.shape()[3])
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel();
        let (hp, wp) = (h + 2 * self.padding, w + 2 * self.padding);
        if hp < kh || wp < kw {
            return Err(Error::Shape(format!(
                "padded input {hp}x{wp} smaller than kernel {kh}x{kw}"
            )));
        }
        Ok(((hp - kh) / self.stride + 1, (wp - kw) / self.stride + 1))
    }

    /// Multiply-accumulates for one forward pass over a `h × w` input.
    pub fn macs(&self, h: usize, w: usize) -> Result<u64> {
        let (ho, wo) = self.output_hw(h, w)?;
        let (kh, kw) = self.kernel();
        Ok((self.out_channels() * self.in_channels() * kh * kw * ho * wo) as u64)
    }

    fn check_input(&self, x: &Tensor) -> Result<[usize; 4]> {
        let d = x.dims4()?;
        if d[1] != self.in_channels() {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels(),
                d[1]
            )));
        }
        Ok(d)
    }
}

impl Module for ConvParams {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

/// Zero-pad every channel plane of sample `b`.
fn padded_sample(x: &Tensor, b: usize, pad: usize) -> Vec<f64> {
    let [_, c, h, w] = x.dims4().expect("4-D");
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0; c * hp * wp];
    for ci in 0..c {
        let src = x.plane(b, ci);
        let dst = &mut out[ci * hp * wp..(ci + 1) * hp * wp];
        for y in 0..h {
            dst[(y + pad) * wp + pad..(y + pad) * wp + pad + w]
                .copy_from_slice(&src[y * w..(y + 1) * w]);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn fill_cols(xp: &[f64], cols: &mut [f64], c: usize, plane: usize, wp: usize, kh: usize, kw: usize, span: usize) {
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let r = (ci * kh + ky) * kw + kx;
                let off = ci * plane + ky * wp + kx;
                cols[r * span..(r + 1) * span].copy_from_slice(&xp[off..off + span]);
            }
        }
    }
}

/// `c = alpha * a b + beta * c` on strided row-major views.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    assert!(m == 0 || n == 0 || c.len() > (m - 1) * rsc + (n - 1) * csc);
    assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// `z[o, k, l] = <W_o, crop of x at (k·Δ, l·Δ)> + b_o`.
pub fn conv2d_forward(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let [n, c, h, w] = p.check_input(x)?;
    let (ho, wo) = p.output_hw(h, w)?;
    let o = p.out_channels();
    let (kh, kw) = p.kernel();
    let wt = p.weight.data();
    let mut out = Tensor::zeros(&[n, o, ho, wo]);

    if p.stride == 1 {
        // Rows of the padded sample taken at the padded row pitch `wp`: each
        // kernel tap becomes one contiguous slice, and the `wp - wo` trailing
        // columns of every output row are discarded afterwards.
        let (hp, wp) = (h + 2 * p.padding, w + 2 * p.padding);
        let span = (ho - 1) * wp + wo;
        let k = c * kh * kw;
        let mut cols = vec![0.0; k * span];
        let mut acc = vec![0.0; o * span];
        for b in 0..n {
            let xp = padded_sample(x, b, p.padding);
            fill_cols(&xp, &mut cols, c, hp * wp, wp, kh, kw, span);
            gemm(o, k, span, 1.0, wt, k, 1, &cols, span, 1, 0.0, &mut acc, span, 1);
            for oc in 0..o {
                let bias = p.bias.data()[oc];
                let dst = out.plane_mut(b, oc);
                for oy in 0..ho {
                    let row = &acc[oc * span + oy * wp..oc * span + oy * wp + wo];
                    for (d, s) in dst[oy * wo..(oy + 1) * wo].iter_mut().zip(row) {
                        *d = s + bias;
                    }
                }
            }
        }
        return Ok(out);
    }

    let (s, pad) = (p.stride as isize, p.padding as isize);
    for b in 0..n {
        for oc in 0..o {
            let bias = p.bias.data()[oc];
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bias;
                    for ci in 0..c {
                        let plane = x.plane(b, ci);
                        for ky in 0..kh {
                            let iy = oy as isize * s + ky as isize - pad;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = ox as isize * s + kx as isize - pad;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += wt[((oc * c + ci) * kh + ky) * kw + kx]
                                    * plane[iy as usize * w + ix as usize];
                            }
                        }
                    }
                    out.plane_mut(b, oc)[oy * wo + ox] = acc;
                }
            }
        }
    }
    Ok(out)
}

/// Exact gradients of [`conv2d_forward`]. The input gradient is the adjoint
/// map: a full correlation of `d_out` with the flipped kernels.
pub fn conv2d_backward(x: &Tensor, p: &ConvParams, d_out: &Tensor) -> Result<LayerGrads> {
    let [n, c, h, w] = p.check_input(x)?;
    let (ho, wo) = p.output_hw(h, w)?;
    let o = p.out_channels();
    if d_out.shape() != [n, o, ho, wo] {
        return Err(Error::Shape(format!(
            "conv backward: d_out {:?}, expected {:?}",
            d_out.shape(),
            [n, o, ho, wo]
        )));
    }
    let (kh, kw) = p.kernel();
    let wt = p.weight.data();
    let mut d_weight = Tensor::zeros(p.weight.shape());
    let mut d_bias = Tensor::zeros(&[o]);
    let mut d_input = Tensor::zeros(x.shape());

    for b in 0..n {
        for oc in 0..o {
            d_bias.data_mut()[oc] += d_out.plane(b, oc).iter().sum::<f64>();
        }
    }

    if p.stride == 1 {
        let (hp, wp) = (h + 2 * p.padding, w + 2 * p.padding);
        let span = (ho - 1) * wp + wo;
        let k = c * kh * kw;
        let mut cols = vec![0.0; k * span];
        let mut d_cols = vec![0.0; k * span];
        let mut g = vec![0.0; o * span];
        let mut dxp = vec![0.0; c * hp * wp];
        let dw = d_weight.data_mut();
        for b in 0..n {
            let xp = padded_sample(x, b, p.padding);
            fill_cols(&xp, &mut cols, c, hp * wp, wp, kh, kw, span);
            for oc in 0..o {
                let src = d_out.plane(b, oc);
                for oy in 0..ho {
                    g[oc * span + oy * wp..oc * span + oy * wp + wo]
                        .copy_from_slice(&src[oy * wo..(oy + 1) * wo]);
                }
            }
            gemm(o, span, k, 1.0, &g, span, 1, &cols, 1, span, 1.0, dw, k, 1);
            gemm(k, o, span, 1.0, wt, 1, k, &g, span, 1, 0.0, &mut d_cols, span, 1);
            dxp.iter_mut().for_each(|v| *v = 0.0);
            for ci in 0..c {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let r = (ci * kh + ky) * kw + kx;
                        let off = ci * hp * wp + ky * wp + kx;
                        for (d, s) in dxp[off..off + span].iter_mut().zip(&d_cols[r * span..(r + 1) * span]) {
                            *d += s;
                        }
                    }
                }
            }
            for ci in 0..c {
                let dst = d_input.plane_mut(b, ci);
                for y in 0..h {
                    let row = ci * hp * wp + (y + p.padding) * wp + p.padding;
                    dst[y * w..(y + 1) * w].copy_from_slice(&dxp[row..row + w]);
                }
            }
        }
        return Ok(LayerGrads {
            d_weight,
            d_bias,
            d_input,
        });
    }

    let (s, pad) = (p.stride as isize, p.padding as isize);
    for b in 0..n {
        for oc in 0..o {
            for oy in 0..ho {
                for ox in 0..wo {
                    let g = d_out.plane(b, oc)[oy * wo + ox];
                    for ci in 0..c {
                        for ky in 0..kh {
                            let iy = oy as isize * s + ky as isize - pad;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = ox as isize * s + kx as isize - pad;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let widx = ((oc * c + ci) * kh + ky) * kw + kx;
                                let xi = iy as usize * w + ix as usize;
                                d_weight.data_mut()[widx] += g * x.plane(b, ci)[xi];
                                d_input.plane_mut(b, ci)[xi] += g * wt[widx];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(LayerGrads {
        d_weight,
        d_bias,
        d_input,
    })
}
