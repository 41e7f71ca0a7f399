use crate::tensor_nn::Module;
use crate::{Error, Result};

/// `p ← p − lr·g` for every parameter, returning the updated copy.
pub fn sgd_step<M: Module + Clone>(params: &M, grads: &M, lr: f64) -> Result<M> {
    if !(lr >= 0.0) {
        return Err(Error::Domain(format!("learning rate must be non-negative, got {lr}")));
    }
    let mut out = params.clone();
    out.accumulate(-lr, grads)?;
    Ok(out)
}

pub fn global_norm<M: Module>(grads: &M) -> f64 {
    grads
        .param_list()
        .iter()
        .map(|(_, t)| t.norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// SGD with optional heavy-ball momentum and global-norm clipping.
#[derive(Clone, Debug)]
pub struct Sgd<M> {
    pub lr: f64,
    pub momentum: Option<f64>,
    pub clip_norm: Option<f64>,
    velocity: Option<M>,
}

impl<M: Module + Clone> Sgd<M> {
    pub fn new(lr: f64, momentum: Option<f64>, clip_norm: Option<f64>) -> Self {
        Sgd {
            lr,
            momentum,
            clip_norm,
            velocity: None,
        }
    }

    /// Applies one update in place; `grads` may be rescaled by clipping.
    pub fn step(&mut self, params: &mut M, grads: &mut M) -> Result<()> {
        if let Some(c) = self.clip_norm {
            let n = global_norm(grads);
            if n > c {
                for t in grads.param_list_mut() {
                    t.scale(c / n);
                }
            }
        }
        match self.momentum {
            None => params.accumulate(-self.lr, grads),
            Some(mu) => {
                let v = self.velocity.get_or_insert_with(|| grads.zeros_like());
                for t in v.param_list_mut() {
                    t.scale(mu);
                }
                v.accumulate(1.0, grads)?;
                params.accumulate(-self.lr, v)
            }
        }
    }
}
