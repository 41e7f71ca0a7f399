use super::Tensor;
use crate::{Error, Result};

/// `max(0, x)` elementwise.
pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// `d_out · H(x)`, with the Heaviside step taken as 0 at `x = 0`.
pub fn relu_backward(x: &Tensor, d_out: &Tensor) -> Result<Tensor> {
    if x.shape() != d_out.shape() {
        return Err(Error::Shape(format!(
            "relu backward: {:?} vs {:?}",
            x.shape(),
            d_out.shape()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(d_out.data())
        .map(|(&xi, &g)| if xi > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Smallest `|x|` over a ReLU input, i.e. how close the point is to a kink.
pub fn kink_distance(x: &Tensor) -> f64 {
    x.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

fn axis_layout(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::Shape(format!("axis {axis} out of range for {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// Softmax along `axis`, stabilised by subtracting the running maximum.
pub fn softmax_forward(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, len, inner) = axis_layout(x.shape(), axis)?;
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let m = (0..len).map(|k| src[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for k in 0..len {
                let e = (src[idx(k)] - m).exp();
                out[idx(k)] = e;
                z += e;
            }
            for k in 0..len {
                out[idx(k)] /= z;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Softmax Jacobian-vector product: `dx = y ⊙ (dy − <y, dy>)`, from the
/// forward output `y`.
pub fn softmax_backward(y: &Tensor, d_out: &Tensor, axis: usize) -> Result<Tensor> {
    if y.shape() != d_out.shape() {
        return Err(Error::Shape(format!(
            "softmax backward: {:?} vs {:?}",
            y.shape(),
            d_out.shape()
        )));
    }
    let (outer, len, inner) = axis_layout(y.shape(), axis)?;
    let (yd, gd) = (y.data(), d_out.data());
    let mut out = vec![0.0; yd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let dot: f64 = (0..len).map(|k| yd[idx(k)] * gd[idx(k)]).sum();
            for k in 0..len {
                out[idx(k)] = yd[idx(k)] * (gd[idx(k)] - dot);
            }
        }
    }
    Tensor::new(y.shape().to_vec(), out)
}

/// Logistic function without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        let x = Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
        let x = Tensor::new(vec![2], vec![-1.0, 2.0]).unwrap();
        let d = Tensor::new(vec![2], vec![5.0, 5.0]).unwrap();
        assert_eq!(relu_backward(&x, &d).unwrap().data(), &[0.0, 5.0]);
        let x0 = Tensor::new(vec![1], vec![0.0]).unwrap();
        let d0 = Tensor::new(vec![1], vec![1.0]).unwrap();
        assert_eq!(relu_backward(&x0, &d0).unwrap().data(), &[0.0]);
    }

    #[test]
    fn softmax_closed_forms() {
        let c = Tensor::full(&[1, 4], 3.7);
        for v in softmax_forward(&c, 1).unwrap().data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let x = Tensor::new(vec![2], vec![0.0, 3f64.ln()]).unwrap();
        let y = softmax_forward(&x, 0).unwrap();
        assert!((y.data()[0] - 0.25).abs() < 1e-15);
        assert!((y.data()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let x = Tensor::new(vec![3], vec![1000.0, 1000.0, -1000.0]).unwrap();
        let y = softmax_forward(&x, 0).unwrap();
        assert!((y.data()[0] - 0.5).abs() < 1e-15);
        assert!(y.data()[2] < 1e-300);
    }

    #[test]
    fn softmax_rows_sum_to_one_on_inner_axis() {
        let x = Tensor::from_fn(&[2, 3, 4], |i| (i as f64 * 0.37).sin() * 3.0);
        let y = softmax_forward(&x, 1).unwrap();
        for o in 0..2 {
            for i in 0..4 {
                let s: f64 = (0..3).map(|k| y.data()[(o * 3 + k) * 4 + i]).sum();
                assert!((s - 1.0).abs() < 1e-14);
            }
        }
        assert!(softmax_forward(&x, 3).is_err());
    }

    #[test]
    fn sigmoid_range() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(-800.0) >= 0.0);
    }
}
