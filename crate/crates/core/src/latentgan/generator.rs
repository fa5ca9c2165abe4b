use numkit::module::join;
use numkit::{Activation, Dense, Module, Prng, Tensor};

use super::{GanError, Result};
use crate::mlp;

/// ReLU after the first two layers; the last is linear so generated
/// structure latents may be negative like encoder outputs.
pub const GENERATOR_ACTS: [Activation; 3] = [Activation::Relu, Activation::Relu, Activation::Identity];

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub layers: Vec<Dense>,
}

impl Generator {
    pub fn new(spec_dim: usize, hidden: [usize; 2], struct_dim: usize, rng: &mut Prng) -> Self {
        Generator {
            layers: mlp::build(&[spec_dim, hidden[0], hidden[1], struct_dim], rng),
        }
    }

    pub fn spec_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn struct_dim(&self) -> usize {
        self.layers[2].out_dim()
    }

    fn check(&self, spec: &[f64]) -> Result<()> {
        if spec.len() != self.spec_dim() {
            return Err(GanError::Dimension {
                what: "generator input",
                expected: self.spec_dim(),
                found: spec.len(),
            });
        }
        Ok(())
    }

    pub fn generate(&self, spec: &[f64]) -> Result<Vec<f64>> {
        self.check(spec)?;
        let (y, _) = mlp::forward(&self.layers, &GENERATOR_ACTS, &Tensor::vector(spec.to_vec()), None)?;
        Ok(y.into_data())
    }

    /// Generates a batch, keeping what [`Generator::backward`] needs.
    pub(crate) fn forward_batch(&self, specs: &[&[f64]]) -> Result<(Tensor, Tensor, Vec<mlp::LayerCache>)> {
        for s in specs {
            self.check(s)?;
        }
        let x = Tensor::matrix(specs.len(), self.spec_dim(), specs.concat())?;
        let (y, caches) = mlp::forward(&self.layers, &GENERATOR_ACTS, &x, None)?;
        Ok((x, y, caches))
    }

    /// Batch output; the parameter gradient of `sum(upstream * output)`
    /// accumulates into `grads`.
    pub fn output_grad(&self, specs: &[&[f64]], upstream: &Tensor, grads: &mut Generator) -> Result<Tensor> {
        let (_, y, caches) = self.forward_batch(specs)?;
        self.backward(&caches, upstream, grads);
        Ok(y)
    }

    pub(crate) fn backward(&self, caches: &[mlp::LayerCache], grad_out: &Tensor, grads: &mut Generator) {
        mlp::backward(&self.layers, &GENERATOR_ACTS, caches, grad_out, Some(grads.layers.as_mut_slice()));
    }
}

impl Module for Generator {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Tensor)) {
        self.layers.visit(&join(prefix, "layers"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.layers.visit_mut(f);
    }
}
