use crate::{Error, RMatrix, Result};

/// Dense row-major array of f64.
///
/// Activations are `(batch, channels, height, width)`; convolution weights are
/// `(out, in, k_h, k_w)`; biases and other vectors are one-dimensional.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dims4(&self) -> Result<[usize; 4]> {
        match self.shape[..] {
            [n, c, h, w] => Ok([n, c, h, w]),
            _ => Err(Error::Shape(format!(
                "expected a (n, c, h, w) tensor, got {:?}",
                self.shape
            ))),
        }
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Tensor::new(shape.to_vec(), self.data)
    }

    /// Channel plane `(n, c)` of a 4-D tensor.
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let [_, ch, h, w] = self.dims4().expect("4-D tensor");
        let sz = h * w;
        let off = (n * ch + c) * sz;
        &self.data[off..off + sz]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let [_, ch, h, w] = self.dims4().expect("4-D tensor");
        let sz = h * w;
        let off = (n * ch + c) * sz;
        &mut self.data[off..off + sz]
    }

    pub fn check_finite(&self, layer: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::numeric(
                layer,
                format!("entry {i} of tensor {:?} is {}", self.shape, self.data[i]),
            )),
        }
    }

    fn same_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{op}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.same_shape(other, "add")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) -> Result<()> {
        self.same_shape(other, "axpy")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other, "sub")?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Stack equally sized matrices into a `(n, 1, rows, cols)` batch.
    pub fn from_matrices<'a>(mats: impl IntoIterator<Item = &'a RMatrix>) -> Result<Tensor> {
        let mut data = Vec::new();
        let mut shape: Option<(usize, usize)> = None;
        let mut n = 0;
        for m in mats {
            match shape {
                None => shape = Some(m.shape()),
                Some(s) if s != m.shape() => {
                    return Err(Error::Shape(format!(
                        "batch mixes {s:?} and {:?} matrices",
                        m.shape()
                    )))
                }
                _ => {}
            }
            for i in 0..m.nrows() {
                data.extend(m.row(i).iter());
            }
            n += 1;
        }
        let (r, c) = shape.ok_or_else(|| Error::Shape("empty batch".into()))?;
        Tensor::new(vec![n, 1, r, c], data)
    }

    /// Sample `n` of a single-channel batch as a matrix.
    pub fn to_matrix(&self, n: usize) -> Result<RMatrix> {
        let [b, c, h, w] = self.dims4()?;
        if c != 1 || n >= b {
            return Err(Error::Shape(format!(
                "cannot take sample {n} of {:?} as a matrix",
                self.shape
            )));
        }
        Ok(RMatrix::from_row_slice(h, w, self.plane(n, 0)))
    }
}

/// Concatenate 4-D tensors along the channel axis.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Shape("concat of nothing".into()))?;
    let [n, _, h, w] = first.dims4()?;
    let mut total = 0;
    for p in parts {
        let [pn, pc, ph, pw] = p.dims4()?;
        if (pn, ph, pw) != (n, h, w) {
            return Err(Error::Shape(format!(
                "concat: {:?} vs {:?}",
                first.shape(),
                p.shape()
            )));
        }
        total += pc;
    }
    let mut data = Vec::with_capacity(n * total * h * w);
    for b in 0..n {
        for p in parts {
            let pc = p.shape()[1];
            let sz = pc * h * w;
            data.extend_from_slice(&p.data()[b * sz..(b + 1) * sz]);
        }
    }
    Tensor::new(vec![n, total, h, w], data)
}

/// Inverse of [`concat_channels`].
pub fn split_channels(t: &Tensor, sizes: &[usize]) -> Result<Vec<Tensor>> {
    let [n, c, h, w] = t.dims4()?;
    if sizes.iter().sum::<usize>() != c {
        return Err(Error::Shape(format!(
            "cannot split {c} channels into {sizes:?}"
        )));
    }
    let mut outs: Vec<Vec<f64>> = sizes.iter().map(|&s| Vec::with_capacity(n * s * h * w)).collect();
    let hw = h * w;
    for b in 0..n {
        let mut off = b * c * hw;
        for (o, &s) in outs.iter_mut().zip(sizes) {
            o.extend_from_slice(&t.data()[off..off + s * hw]);
            off += s * hw;
        }
    }
    outs.into_iter()
        .zip(sizes)
        .map(|(d, &s)| Tensor::new(vec![n, s, h, w], d))
        .collect()
}
