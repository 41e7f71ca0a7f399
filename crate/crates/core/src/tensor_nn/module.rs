use super::Tensor;
use crate::{Error, Result};

/// A collection of learnable tensors.
///
/// Gradients of a module are stored in a value of the same type (see
/// [`Module::zeros_like`]), so parameters and gradients can be walked in
/// lock-step.
pub trait Module {
    /// Trainable tensors, in declaration order, with dotted names.
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>);

    /// Same order as [`Module::params`].
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>);

    /// Non-trainable state that still belongs in a checkpoint (running
    /// normalisation statistics).
    fn buffers<'a>(&'a self, _prefix: &str, _out: &mut Vec<(String, &'a Tensor)>) {}

    fn buffers_mut<'a>(&'a mut self, _out: &mut Vec<&'a mut Tensor>) {}

    fn param_list(&self) -> Vec<(String, &Tensor)> {
        let mut v = Vec::new();
        self.params("", &mut v);
        v
    }

    fn param_list_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = Vec::new();
        self.params_mut(&mut v);
        v
    }

    fn num_params(&self) -> usize {
        self.param_list().iter().map(|(_, t)| t.len()).sum()
    }

    /// A copy with every trainable tensor zeroed, used as a gradient
    /// accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        for t in z.param_list_mut() {
            t.fill(0.0);
        }
        z
    }

    fn zero_grad(&mut self) {
        for t in self.param_list_mut() {
            t.fill(0.0);
        }
    }

    /// `self += alpha * other`, parameter-wise.
    fn accumulate(&mut self, alpha: f64, other: &Self) -> Result<()>
    where
        Self: Sized,
    {
        let theirs = other.param_list();
        let mine = self.param_list_mut();
        if mine.len() != theirs.len() {
            return Err(Error::Shape("modules have different layouts".into()));
        }
        for (a, (_, b)) in mine.into_iter().zip(theirs) {
            a.axpy(alpha, b)?;
        }
        Ok(())
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl<M: Module> Module for Vec<M> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        for (i, m) in self.iter().enumerate() {
            m.params(&join(prefix, &i.to_string()), out);
        }
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        for m in self.iter_mut() {
            m.params_mut(out);
        }
    }

    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        for (i, m) in self.iter().enumerate() {
            m.buffers(&join(prefix, &i.to_string()), out);
        }
    }

    fn buffers_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        for m in self.iter_mut() {
            m.buffers_mut(out);
        }
    }
}

impl<M: Module> Module for Option<M> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        if let Some(m) = self {
            m.params(prefix, out);
        }
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        if let Some(m) = self {
            m.params_mut(out);
        }
    }

    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        if let Some(m) = self {
            m.buffers(prefix, out);
        }
    }

    fn buffers_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        if let Some(m) = self {
            m.buffers_mut(out);
        }
    }
}
