use crate::tensor::Tensor;

/// A container of trainable tensors.
///
/// Gradients use the same type as the model: `zeros_like(&model)` yields a
/// gradient accumulator whose tensors line up with the model's, visited in
/// the same order. Optimizers and checkpoints rely on that ordering.
pub trait Module {
    /// Visits every trainable tensor with its dotted name.
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Tensor));

    /// Visits every trainable tensor mutably, in the same order as `visit`.
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor));
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// A copy of `m` with every trainable tensor zeroed.
pub fn zeros_like<M: Module + Clone>(m: &M) -> M {
    let mut z = m.clone();
    zero(&mut z);
    z
}

pub fn zero<M: Module>(m: &mut M) {
    m.visit_mut(&mut |t| t.fill(0.0));
}

pub fn tensors<M: Module>(m: &M) -> Vec<&Tensor> {
    let mut out = Vec::new();
    m.visit("", &mut |_, t| out.push(t));
    out
}

pub fn named_tensors<'a, M: Module>(m: &'a M) -> Vec<(String, &'a Tensor)> {
    let mut out = Vec::new();
    m.visit("", &mut |n, t| out.push((n.to_string(), t)));
    out
}

pub fn param_count<M: Module>(m: &M) -> usize {
    tensors(m).iter().map(|t| t.len()).sum()
}

/// Multiplies every tensor of `m` by `s`.
pub fn scale<M: Module>(m: &mut M, s: f64) {
    m.visit_mut(&mut |t| t.data_mut().iter_mut().for_each(|x| *x *= s));
}

/// Concatenated little-endian bytes of every parameter, for bit-exact
/// before/after comparisons.
pub fn param_bytes<M: Module>(m: &M) -> Vec<u8> {
    tensors(m).iter().flat_map(|t| t.to_le_bytes()).collect()
}

/// Runs `f` on one coordinate of the `tensor`-th visited tensor.
pub fn with_coord<M: Module>(m: &mut M, tensor: usize, coord: usize, f: impl FnOnce(&mut f64)) {
    let mut f = Some(f);
    let mut idx = 0;
    m.visit_mut(&mut |t| {
        if idx == tensor {
            if let Some(f) = f.take() {
                f(&mut t.data_mut()[coord]);
            }
        }
        idx += 1;
    });
}

impl Module for Tensor {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Tensor)) {
        f(prefix, self);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(self);
    }
}

impl<M: Module> Module for Vec<M> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Tensor)) {
        for (i, m) in self.iter().enumerate() {
            m.visit(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        for m in self.iter_mut() {
            m.visit_mut(f);
        }
    }
}
