use crate::module::{tensors, Module};
use crate::tensor::Tensor;
use crate::{NumError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam with decoupled weight decay.
///
/// Moments are allocated lazily on the first step and are matched to
/// parameters by visiting order.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Updates `model` in place from the gradient container `grads`.
    pub fn step<M: Module>(&mut self, model: &mut M, grads: &M) -> Result<()> {
        let grads = tensors(grads);
        let shapes: Vec<Vec<usize>> = tensors(model).iter().map(|t| t.shape().to_vec()).collect();
        self.prepare(&shapes, &grads)?;
        let mut idx = 0;
        model.visit_mut(&mut |p| {
            self.update(idx, p, grads[idx]);
            idx += 1;
        });
        Ok(())
    }

    pub fn step_tensors(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        let shapes: Vec<Vec<usize>> = params.iter().map(|t| t.shape().to_vec()).collect();
        self.prepare(&shapes, grads)?;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            self.update(i, p, g);
        }
        Ok(())
    }

    /// Validates gradients, allocates moments and advances the step count.
    fn prepare(&mut self, shapes: &[Vec<usize>], grads: &[&Tensor]) -> Result<()> {
        if shapes.len() != grads.len() {
            return Err(NumError::InvalidArgument(format!(
                "{} parameter tensors but {} gradients",
                shapes.len(),
                grads.len()
            )));
        }
        for (i, (s, g)) in shapes.iter().zip(grads).enumerate() {
            g.expect_shape("adamw gradient", s)?;
            if !g.is_finite() {
                return Err(NumError::NonFiniteGradient { tensor: i });
            }
        }
        if self.m.is_empty() {
            self.m = shapes.iter().map(|s| Tensor::zeros(s)).collect();
            self.v = self.m.clone();
        } else if self.m.len() != shapes.len() {
            return Err(NumError::InvalidArgument("optimizer state does not match parameters".into()));
        }
        for (s, m) in shapes.iter().zip(&self.m) {
            m.expect_shape("adamw state", s)?;
        }
        self.t += 1;
        Ok(())
    }

    fn update(&mut self, idx: usize, p: &mut Tensor, g: &Tensor) {
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let pd = p.data_mut();
        let md = self.m[idx].data_mut();
        let vd = self.v[idx].data_mut();
        for (i, &gi) in g.data().iter().enumerate() {
            md[i] = c.beta1 * md[i] + (1.0 - c.beta1) * gi;
            vd[i] = c.beta2 * vd[i] + (1.0 - c.beta2) * gi * gi;
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            pd[i] -= c.lr * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * pd[i]);
        }
    }
}

pub fn adamw_step(state: &mut AdamW, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
    state.step_tensors(params, grads)
}
