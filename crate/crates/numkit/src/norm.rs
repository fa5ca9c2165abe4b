use crate::module::{join, Module};
use crate::tensor::Tensor;
use crate::{NumError, Result};

/// Per-row normalization over the last dimension with population variance.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
}

#[derive(Clone, Debug)]
pub struct NormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[dim], 1.0),
            beta: Tensor::zeros(&[dim]),
            eps: Self::DEFAULT_EPS,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, NormCache)> {
        if x.cols() != self.dim() || self.beta.len() != self.dim() {
            return Err(NumError::ShapeMismatch {
                context: "layer norm",
                expected: vec![self.dim()],
                found: x.shape().to_vec(),
            });
        }
        let d = self.dim();
        let mut y = x.clone();
        let mut xhat = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std.push(is);
            let xh = xhat.row_mut(r);
            for (h, v) in xh.iter_mut().zip(row) {
                *h = (v - mean) * is;
            }
            let xh = xhat.row(r);
            for (i, out) in y.row_mut(r).iter_mut().enumerate() {
                *out = xh[i] * self.gamma.data()[i] + self.beta.data()[i];
            }
        }
        Ok((y, NormCache { xhat, inv_std }))
    }

    pub fn backward(&self, cache: &NormCache, grad_out: &Tensor, grads: Option<&mut LayerNorm>) -> Tensor {
        let d = self.dim();
        let n = d as f64;
        let gamma = self.gamma.data();
        let mut dx = grad_out.clone();
        let mut grads = grads;
        for r in 0..grad_out.rows() {
            let g = grad_out.row(r);
            let xh = cache.xhat.row(r);
            if let Some(gr) = grads.as_deref_mut() {
                for i in 0..d {
                    gr.gamma.data_mut()[i] += g[i] * xh[i];
                    gr.beta.data_mut()[i] += g[i];
                }
            }
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for i in 0..d {
                let gg = g[i] * gamma[i];
                sum_g += gg;
                sum_gx += gg * xh[i];
            }
            let is = cache.inv_std[r];
            for (i, out) in dx.row_mut(r).iter_mut().enumerate() {
                *out = is / n * (n * g[i] * gamma[i] - sum_g - xh[i] * sum_gx);
            }
        }
        dx
    }
}

impl Module for LayerNorm {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Tensor)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    gamma.expect_shape("layer norm gamma", &[x.cols()])?;
    beta.expect_shape("layer norm beta", &[x.cols()])?;
    let ln = LayerNorm {
        gamma: gamma.clone(),
        beta: beta.clone(),
        eps,
    };
    Ok(ln.forward(x)?.0)
}
