//! Spectrum and structure autoencoders: global training of encoder and
//! decoder, then per-sample encoder fine-tuning against the frozen decoder.

mod spectrum;
mod structure;

pub use spectrum::{encode_spectrum, spectrum_input, SpectrumAeConfig, SpectrumAutoencoder, SpectrumDecoder, SpectrumEncoder};
pub use structure::{encode_structure, GraphEncoding, GraphSample, DECODER_DEPTH, NODE_TARGETS, StructureAeConfig, StructureAutoencoder, StructureDecoder, StructureEncoder};

use numkit::{zeros_like, AdamW, AdamWConfig, Module, NumError, Prng, Tensor};
use thiserror::Error;

use crate::spectra::SpectraError;

#[derive(Debug, Error)]
pub enum AeError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("sample {index} has width {found}, model expects {expected}")]
    Dimension { index: usize, expected: usize, found: usize },
    #[error("model has not been trained")]
    Untrained,
    #[error("molecule has no atoms")]
    EmptyGraph,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
}

pub type Result<T, E = AeError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LatentFamily {
    Spectrum,
    Structure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentVector {
    pub values: Vec<f64>,
    pub family: LatentFamily,
    pub source_id: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 16,
            optimizer: AdamWConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneConfig {
    pub steps: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            steps: 0,
            optimizer: AdamWConfig::default(),
            seed: 0,
        }
    }
}

/// Gradient sinks for one loss evaluation. A `None` decoder sink means the
/// decoder is frozen: its gradients are never formed.
pub struct Sinks<'a, E, D> {
    pub encoder: Option<&'a mut E>,
    pub decoder: Option<&'a mut D>,
}

impl<E, D> Sinks<'_, E, D> {
    pub fn none() -> Self {
        Sinks {
            encoder: None,
            decoder: None,
        }
    }
}

/// Shared surface of both autoencoders.
pub trait Autoencoder: Module + Clone {
    type Sample;
    type Encoder: Module + Clone;
    type Decoder: Module + Clone;

    fn encoder(&self) -> &Self::Encoder;
    fn decoder(&self) -> &Self::Decoder;
    fn split_mut(&mut self) -> (&mut Self::Encoder, &mut Self::Decoder);
    fn family(&self) -> LatentFamily;
    fn is_trained(&self) -> bool;
    fn set_trained(&mut self, trained: bool);

    fn validate(&self, index: usize, sample: &Self::Sample) -> Result<()>;

    /// Mean per-sample reconstruction error of `samples` through `encoder`
    /// and this model's decoder. `rng` enables training-time dropout.
    fn batch_loss(
        &self,
        encoder: &Self::Encoder,
        samples: &[&Self::Sample],
        rng: Option<&mut Prng>,
        sinks: Sinks<'_, Self::Encoder, Self::Decoder>,
    ) -> Result<f64>;

    fn encode_with(&self, encoder: &Self::Encoder, sample: &Self::Sample) -> Result<Vec<f64>>;
}

/// Mean squared difference of two equally shaped tensors.
pub fn mse(output: &Tensor, target: &Tensor) -> Result<f64> {
    if output.shape() != target.shape() {
        return Err(NumError::ShapeMismatch {
            context: "reconstruction target",
            expected: output.shape().to_vec(),
            found: target.shape().to_vec(),
        }
        .into());
    }
    if output.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = output
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / output.len() as f64)
}

pub fn reconstruction_loss<A: Autoencoder>(model: &A, sample: &A::Sample) -> Result<f64> {
    model.validate(0, sample)?;
    model.batch_loss(model.encoder(), &[sample], None, Sinks::none())
}

/// Trains encoder and decoder jointly with AdamW on mini-batches; returns
/// the mean training loss of each epoch (measured before that epoch's
/// updates are applied to later batches).
pub fn train_stage1<A: Autoencoder>(
    model: &mut A,
    dataset: &[A::Sample],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    if dataset.is_empty() {
        return Err(AeError::EmptyDataset);
    }
    for (i, s) in dataset.iter().enumerate() {
        model.validate(i, s)?;
    }
    if cfg.batch_size == 0 {
        return Err(AeError::Config("batch size must be positive".into()));
    }
    let mut rng = Prng::new(cfg.seed);
    let mut opt = AdamW::new(cfg.optimizer.clone());
    let mut grads = zeros_like(model);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&A::Sample> = chunk.iter().map(|&i| &dataset[i]).collect();
            numkit::module::zero(&mut grads);
            let (ge, gd) = grads.split_mut();
            let loss = model.batch_loss(
                model.encoder(),
                &batch,
                Some(&mut rng),
                Sinks {
                    encoder: Some(ge),
                    decoder: Some(gd),
                },
            )?;
            total += loss * batch.len() as f64;
            opt.step(model, &grads)?;
        }
        curve.push(total / dataset.len() as f64);
        log::debug!("stage-1 epoch {} loss {:.6}", curve.len(), curve.last().unwrap());
    }
    if cfg.epochs > 0 {
        model.set_trained(true);
    }
    Ok(curve)
}

/// Fine-tunes a private copy of the encoder on one sample with the decoder
/// frozen and returns that encoder. `base` is not modified.
pub fn finetune_encoder<A: Autoencoder>(
    sample: &A::Sample,
    base: &A,
    cfg: &FinetuneConfig,
) -> Result<A::Encoder> {
    base.validate(0, sample)?;
    let mut encoder = base.encoder().clone();
    let mut grads = zeros_like(&encoder);
    let mut opt = AdamW::new(cfg.optimizer.clone());
    let mut rng = Prng::new(cfg.seed);
    for _ in 0..cfg.steps {
        numkit::module::zero(&mut grads);
        base.batch_loss(
            &encoder,
            &[sample],
            Some(&mut rng),
            Sinks {
                encoder: Some(&mut grads),
                decoder: None,
            },
        )?;
        opt.step(&mut encoder, &grads)?;
    }
    Ok(encoder)
}

pub fn finetune_encode<A: Autoencoder>(
    sample: &A::Sample,
    source_id: &str,
    base: &A,
    cfg: &FinetuneConfig,
) -> Result<LatentVector> {
    if !base.is_trained() {
        return Err(AeError::Untrained);
    }
    let encoder = finetune_encoder(sample, base, cfg)?;
    Ok(LatentVector {
        values: base.encode_with(&encoder, sample)?,
        family: base.family(),
        source_id: source_id.to_string(),
    })
}
