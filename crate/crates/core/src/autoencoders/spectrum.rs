use numkit::module::join;
use numkit::{Activation, Dense, Module, Prng, Tensor};

use super::{AeError, Autoencoder, LatentFamily, LatentVector, Result, Sinks, FinetuneConfig};
use crate::mlp;
use crate::spectra::{downsample_adjacent, pool_blocks, BinnedSpectrum};

const ENCODER_ACTS: [Activation; 3] = [Activation::Tanh, Activation::Tanh, Activation::Identity];
const DECODER_ACTS: [Activation; 7] = [
    Activation::Tanh,
    Activation::Tanh,
    Activation::Tanh,
    Activation::Tanh,
    Activation::Tanh,
    Activation::Tanh,
    Activation::Relu,
];

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumAeConfig {
    pub input_dim: usize,
    /// Two widths between the input and the latent.
    pub encoder_hidden: [usize; 2],
    pub latent_dim: usize,
    /// Six widths between the latent and the reconstruction.
    pub decoder_hidden: [usize; 6],
    pub dropout: f64,
}

impl SpectrumAeConfig {
    pub fn paper() -> Self {
        SpectrumAeConfig {
            input_dim: 7500,
            encoder_hidden: [4000, 2500],
            latent_dim: 1500,
            decoder_hidden: [2000, 2800, 3600, 4500, 5500, 6500],
            dropout: 1e-4,
        }
    }

    pub fn desk() -> Self {
        SpectrumAeConfig {
            input_dim: 64,
            encoder_hidden: [32, 16],
            latent_dim: 8,
            decoder_hidden: [12, 16, 24, 32, 40, 52],
            dropout: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumEncoder {
    pub layers: Vec<Dense>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumDecoder {
    pub layers: Vec<Dense>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumAutoencoder {
    pub encoder: SpectrumEncoder,
    pub decoder: SpectrumDecoder,
    pub dropout: f64,
    trained: bool,
}

/// Encoder input for a binned spectrum: adjacent pairs summed
/// (15,000 → 7,500), then block-summed further when the model is narrower.
pub fn spectrum_input(b: &BinnedSpectrum, input_dim: usize) -> Result<Vec<f64>> {
    let half = downsample_adjacent(&b.bins)?;
    if input_dim == half.len() {
        Ok(half)
    } else {
        Ok(pool_blocks(&half, input_dim)?)
    }
}

impl SpectrumEncoder {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(mlp::forward(&self.layers, &ENCODER_ACTS, x, None)?.0)
    }
}

impl SpectrumDecoder {
    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        Ok(mlp::forward(&self.layers, &DECODER_ACTS, z, None)?.0)
    }
}

impl SpectrumAutoencoder {
    pub fn new(cfg: &SpectrumAeConfig, rng: &mut Prng) -> Result<Self> {
        if !(0.0..1.0).contains(&cfg.dropout) {
            return Err(AeError::Config(format!("dropout {} outside [0, 1)", cfg.dropout)));
        }
        let mut enc = vec![cfg.input_dim];
        enc.extend(cfg.encoder_hidden);
        enc.push(cfg.latent_dim);
        let mut dec = vec![cfg.latent_dim];
        dec.extend(cfg.decoder_hidden);
        dec.push(cfg.input_dim);
        if enc.iter().chain(&dec).any(|&w| w == 0) {
            return Err(AeError::Config("layer widths must be positive".into()));
        }
        Ok(SpectrumAutoencoder {
            encoder: SpectrumEncoder {
                layers: mlp::build(&enc, rng),
            },
            decoder: SpectrumDecoder {
                layers: mlp::build(&dec, rng),
            },
            dropout: cfg.dropout,
            trained: false,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.layers[0].in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.layers[2].out_dim()
    }

    /// Declares externally supplied weights (e.g. a loaded checkpoint) ready
    /// for encoding.
    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.encoder.forward(&Tensor::vector(x.to_vec()))?;
        Ok(self.decoder.forward(&z)?.into_data())
    }
}

/// Encodes a binned spectrum, optionally fine-tuning a private encoder
/// copy first. Dropout is inactive for the returned latent.
pub fn encode_spectrum(
    b: &BinnedSpectrum,
    ae: &SpectrumAutoencoder,
    finetune: &FinetuneConfig,
) -> Result<LatentVector> {
    let x = spectrum_input(b, ae.input_dim())?;
    super::finetune_encode(&x, &b.source_id, ae, finetune)
}

impl Autoencoder for SpectrumAutoencoder {
    type Sample = Vec<f64>;
    type Encoder = SpectrumEncoder;
    type Decoder = SpectrumDecoder;

    fn encoder(&self) -> &SpectrumEncoder {
        &self.encoder
    }

    fn decoder(&self) -> &SpectrumDecoder {
        &self.decoder
    }

    fn split_mut(&mut self) -> (&mut SpectrumEncoder, &mut SpectrumDecoder) {
        (&mut self.encoder, &mut self.decoder)
    }

    fn family(&self) -> LatentFamily {
        LatentFamily::Spectrum
    }

    fn is_trained(&self) -> bool {
        self.trained
    }

    fn set_trained(&mut self, trained: bool) {
        self.trained = trained;
    }

    fn validate(&self, index: usize, sample: &Vec<f64>) -> Result<()> {
        if sample.len() != self.input_dim() {
            return Err(AeError::Dimension {
                index,
                expected: self.input_dim(),
                found: sample.len(),
            });
        }
        Ok(())
    }

    fn batch_loss(
        &self,
        encoder: &SpectrumEncoder,
        samples: &[&Vec<f64>],
        mut rng: Option<&mut Prng>,
        sinks: Sinks<'_, SpectrumEncoder, SpectrumDecoder>,
    ) -> Result<f64> {
        let d = self.input_dim();
        let data: Vec<f64> = samples.iter().flat_map(|s| s.iter().copied()).collect();
        let x = Tensor::matrix(samples.len(), d, data)?;
        let p = self.dropout;
        let (z, enc_cache) = mlp::forward(&encoder.layers, &ENCODER_ACTS, &x, rng.as_deref_mut().map(|r| (p, r)))?;
        let (y, dec_cache) = mlp::forward(&self.decoder.layers, &DECODER_ACTS, &z, rng.map(|r| (p, r)))?;
        let loss = super::mse(&y, &x)?;
        if sinks.encoder.is_none() && sinks.decoder.is_none() {
            return Ok(loss);
        }
        let n = x.len() as f64;
        let g = Tensor::new(
            y.shape().to_vec(),
            y.data().iter().zip(x.data()).map(|(a, b)| 2.0 * (a - b) / n).collect(),
        )?;
        let dec_slots = sinks.decoder.map(|gd| gd.layers.as_mut_slice());
        let gz = mlp::backward(&self.decoder.layers, &DECODER_ACTS, &dec_cache, &g, dec_slots);
        if let Some(ge) = sinks.encoder {
            mlp::backward(&encoder.layers, &ENCODER_ACTS, &enc_cache, &gz, Some(ge.layers.as_mut_slice()));
        }
        Ok(loss)
    }

    fn encode_with(&self, encoder: &SpectrumEncoder, sample: &Vec<f64>) -> Result<Vec<f64>> {
        Ok(encoder.forward(&Tensor::vector(sample.clone()))?.into_data())
    }
}

impl Module for SpectrumEncoder {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Tensor)) {
        self.layers.visit(&join(prefix, "layers"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.layers.visit_mut(f);
    }
}

impl Module for SpectrumDecoder {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Tensor)) {
        self.layers.visit(&join(prefix, "layers"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.layers.visit_mut(f);
    }
}

impl Module for SpectrumAutoencoder {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a Tensor)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.encoder.visit_mut(f);
        self.decoder.visit_mut(f);
    }
}
