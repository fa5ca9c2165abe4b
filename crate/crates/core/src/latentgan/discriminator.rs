use numkit::module::join;
use numkit::{Activation, AttentionBlock, AttentionCache, Dense, LayerNorm, Module, NormCache, Prng, Tensor};

use super::{GanError, Result};

pub const DISCRIMINATOR_DEPTH: usize = 16;
/// Scores at or above this count as "true match".
pub const THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorConfig {
    pub tokens: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub layers: usize,
}

/// Transformer critic over a concatenated (spectrum, structure) latent.
///
/// The input is cut into `tokens` equal slices plus a learned positional
/// embedding, run through the attention stack and a layer norm, mapped by
/// one shared dense+tanh per token, mean-pooled and reduced to a scalar by a
/// final dense layer with ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub position: Tensor,
    pub layers: Vec<AttentionBlock>,
    pub norm: LayerNorm,
    pub shared: Dense,
    pub head: Dense,
}

pub(crate) struct DiscCache {
    layers: Vec<AttentionCache>,
    norm: NormCache,
    normed: Tensor,
    shared: Tensor,
    pooled: Tensor,
}

impl Discriminator {
    pub fn new(input_dim: usize, cfg: &DiscriminatorConfig, rng: &mut Prng) -> Result<Self> {
        if cfg.tokens == 0 || input_dim % cfg.tokens != 0 {
            return Err(GanError::Config(format!(
                "latent width {input_dim} does not split into {} tokens",
                cfg.tokens
            )));
        }
        let w = input_dim / cfg.tokens;
        let layers = (0..cfg.layers)
            .map(|_| AttentionBlock::new(w, cfg.heads, cfg.ff_dim, rng))
            .collect::<numkit::Result<Vec<_>>>()?;
        let mut head = Dense::new(w, 1, rng);
        // start in the middle of the 0/1 target range so the ReLU is live
        head.bias.as_mut().expect("dense bias").fill(0.5);
        Ok(Discriminator {
            position: Tensor::uniform(&[cfg.tokens, w], 0.1, rng),
            layers,
            norm: LayerNorm::new(w),
            shared: Dense::new(w, w, rng),
            head,
        })
    }

    pub fn tokens(&self) -> usize {
        self.position.shape()[0]
    }

    pub fn input_dim(&self) -> usize {
        self.position.len()
    }

    pub(crate) fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(GanError::Dimension {
                what: "discriminator input",
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Pre-ReLU output and the cache for [`Discriminator::backward`].
    pub(crate) fn forward_raw(&self, x: &[f64]) -> Result<(f64, DiscCache)> {
        self.check(x)?;
        let mut h = Tensor::new(self.position.shape().to_vec(), x.to_vec())?;
        h.add_assign(&self.position)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (next, c) = l.forward(&h, None)?;
            layers.push(c);
            h = next;
        }
        let (normed, norm) = self.norm.forward(&h)?;
        let shared = Activation::Tanh.forward(&self.shared.forward(&normed)?);
        let pooled = shared.mean_rows();
        let z = self.head.forward(&pooled)?.data()[0];
        Ok((
            z,
            DiscCache {
                layers,
                norm,
                normed,
                shared,
                pooled,
            },
        ))
    }

    /// Pre-ReLU output.
    pub fn raw_output(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward_raw(x)?.0)
    }

    /// Pre-ReLU output and its input gradient; parameter gradients
    /// accumulate into `grads`.
    pub fn raw_output_grad(&self, x: &[f64], grads: &mut Discriminator) -> Result<(f64, Vec<f64>)> {
        let (z, cache) = self.forward_raw(x)?;
        Ok((z, self.backward(&cache, 1.0, Some(grads))))
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward_raw(x)?.0.max(0.0))
    }

    /// Gradient of the pre-ReLU output `z` (scaled by `g_z`) with respect to
    /// the input; parameter gradients accumulate into `grads` when given.
    pub(crate) fn backward(&self, cache: &DiscCache, g_z: f64, mut grads: Option<&mut Discriminator>) -> Vec<f64> {
        let g_pool = self.head.backward(
            &cache.pooled,
            &Tensor::vector(vec![g_z]),
            grads.as_deref_mut().map(|g| &mut g.head),
        );
        let t = self.tokens();
        let per_token: Vec<f64> = g_pool.data().iter().map(|g| g / t as f64).collect();
        let g_shared = Tensor::new(cache.shared.shape().to_vec(), per_token.repeat(t)).expect("pool shape");
        let g_pre = Activation::Tanh.backward(&cache.shared, &cache.shared, &g_shared);
        let g_normed = self
            .shared
            .backward(&cache.normed, &g_pre, grads.as_deref_mut().map(|g| &mut g.shared));
        let mut g = self
            .norm
            .backward(&cache.norm, &g_normed, grads.as_deref_mut().map(|g| &mut g.norm));
        for i in (0..self.layers.len()).rev() {
            let slot = grads.as_deref_mut().map(|gs| &mut gs.layers[i]);
            g = self.layers[i].backward(&cache.layers[i], &g, slot).0;
        }
        if let Some(gr) = grads {
            gr.position.add_assign(&g).expect("position shape");
        }
        g.into_data()
    }
}

impl Module for Discriminator {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Tensor)) {
        f(&join(prefix, "position"), &self.position);
        self.layers.visit(&join(prefix, "layers"), f);
        self.norm.visit(&join(prefix, "norm"), f);
        self.shared.visit(&join(prefix, "shared"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.position);
        self.layers.visit_mut(f);
        self.norm.visit_mut(f);
        self.shared.visit_mut(f);
        self.head.visit_mut(f);
    }
}
