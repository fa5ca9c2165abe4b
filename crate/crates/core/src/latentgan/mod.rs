//! Conditional latent generator, metabolite-spectrum-match discriminator and
//! the alternating round protocol that yields GAN-0 through GAN-R.

mod discriminator;
mod generator;

pub use discriminator::{Discriminator, DiscriminatorConfig, DISCRIMINATOR_DEPTH, THRESHOLD};
pub use generator::{Generator, GENERATOR_ACTS};

use std::fmt;

use numkit::{zeros_like, AdamW, AdamWConfig, NumError, Prng, Tensor};
use thiserror::Error;

use crate::autoencoders::{LatentFamily, LatentVector};

#[derive(Debug, Error)]
pub enum GanError {
    #[error("{what} has width {found}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("round requires negatives")]
    NoNegatives,
    #[error("{0} set is empty")]
    Empty(&'static str),
    #[error("latent family mismatch: {0}")]
    Family(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<GanError>,
    },
    #[error(transparent)]
    Num(#[from] NumError),
}

pub type Result<T, E = GanError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsmLabel {
    TrueMatch,
    Decoy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentMsm {
    pub spectrum: LatentVector,
    pub structure: LatentVector,
    pub label: MsmLabel,
}

impl LatentMsm {
    pub fn concat(&self) -> Vec<f64> {
        let mut v = self.spectrum.values.clone();
        v.extend_from_slice(&self.structure.values);
        v
    }
}

pub fn concat(spec: &[f64], structure: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(spec.len() + structure.len());
    v.extend_from_slice(spec);
    v.extend_from_slice(structure);
    v
}

pub fn discriminate(d: &Discriminator, msm: &LatentMsm) -> Result<f64> {
    if msm.spectrum.family != LatentFamily::Spectrum {
        return Err(GanError::Family("first half must be a spectrum latent"));
    }
    if msm.structure.family != LatentFamily::Structure {
        return Err(GanError::Family("second half must be a structure latent"));
    }
    d.score(&msm.concat())
}

pub fn generate(g: &Generator, spec: &LatentVector) -> Result<LatentVector> {
    if spec.family != LatentFamily::Spectrum {
        return Err(GanError::Family("generator input must be a spectrum latent"));
    }
    Ok(LatentVector {
        values: g.generate(&spec.values)?,
        family: LatentFamily::Structure,
        source_id: spec.source_id.clone(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundConfig {
    pub rounds: usize,
    pub disc_accuracy_target: f64,
    pub gen_fool_target: f64,
    pub final_round_gen_target: f64,
    /// Update epochs allowed per phase before giving up.
    pub max_epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
}

impl Default for RoundConfig {
    fn default() -> Self {
        RoundConfig {
            rounds: 9,
            disc_accuracy_target: 0.99,
            gen_fool_target: 0.99,
            final_round_gen_target: 0.9875,
            max_epochs: 5000,
            batch_size: 32,
            optimizer: AdamWConfig::default(),
            seed: 0,
        }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("disc_accuracy_target", self.disc_accuracy_target),
            ("gen_fool_target", self.gen_fool_target),
            ("final_round_gen_target", self.final_round_gen_target),
        ] {
            if !(t > 0.0 && t <= 1.0) {
                return Err(GanError::Config(format!("{name} {t} outside (0, 1]")));
            }
        }
        if self.batch_size == 0 {
            return Err(GanError::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxEpochs,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Converged => "converged",
            StopReason::MaxEpochs => "max_epochs",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseReport {
    /// Update epochs performed.
    pub epochs: usize,
    /// Accuracy or fooling rate at the final evaluation.
    pub metric: f64,
    pub initial_metric: f64,
    pub stop: StopReason,
}

/// Fraction classified correctly: true matches need a score of at least
/// [`THRESHOLD`], decoys a score below it.
pub fn accuracy(d: &Discriminator, trues: &[Vec<f64>], decoys: &[Vec<f64>]) -> Result<f64> {
    let mut correct = 0usize;
    for x in trues {
        correct += usize::from(d.score(x)? >= THRESHOLD);
    }
    for x in decoys {
        correct += usize::from(d.score(x)? < THRESHOLD);
    }
    Ok(correct as f64 / (trues.len() + decoys.len()) as f64)
}

pub fn fooling_rate(g: &Generator, d: &Discriminator, specs: &[Vec<f64>]) -> Result<f64> {
    let mut fooled = 0usize;
    for s in specs {
        let x = concat(s, &g.generate(s)?);
        fooled += usize::from(d.score(&x)? >= THRESHOLD);
    }
    Ok(fooled as f64 / specs.len() as f64)
}

/// Squared error of one sample and its derivative in the pre-ReLU output.
/// True matches are pulled towards 1 through the raw output so a sample
/// stuck below zero still receives a gradient; decoys use the clipped score.
fn target_loss(z: f64, positive: bool) -> (f64, f64) {
    if positive {
        ((z - 1.0) * (z - 1.0), 2.0 * (z - 1.0))
    } else {
        let s = z.max(0.0);
        (s * s, 2.0 * s)
    }
}

/// Evaluate-then-update loop shared by both phases.
fn run_phase<S: ?Sized>(
    state: &mut S,
    max_epochs: usize,
    target: f64,
    evaluate: impl Fn(&S) -> Result<f64>,
    mut update_epoch: impl FnMut(&mut S) -> Result<()>,
) -> Result<PhaseReport> {
    let initial = evaluate(state)?;
    let mut metric = initial;
    let mut epoch = 0;
    loop {
        if metric >= target {
            return Ok(PhaseReport {
                epochs: epoch,
                metric,
                initial_metric: initial,
                stop: StopReason::Converged,
            });
        }
        if epoch == max_epochs {
            return Ok(PhaseReport {
                epochs: epoch,
                metric,
                initial_metric: initial,
                stop: StopReason::MaxEpochs,
            });
        }
        update_epoch(state)?;
        epoch += 1;
        metric = evaluate(state)?;
    }
}

pub fn train_discriminator_phase(
    d: &mut Discriminator,
    trues: &[Vec<f64>],
    decoys: &[Vec<f64>],
    cfg: &RoundConfig,
    rng: &mut Prng,
) -> Result<PhaseReport> {
    cfg.validate()?;
    if decoys.is_empty() {
        return Err(GanError::NoNegatives);
    }
    if trues.is_empty() {
        return Err(GanError::Empty("true MSM"));
    }
    for x in trues.iter().chain(decoys) {
        d.check(x)?;
    }
    let samples: Vec<(&[f64], bool)> = trues
        .iter()
        .map(|x| (x.as_slice(), true))
        .chain(decoys.iter().map(|x| (x.as_slice(), false)))
        .collect();
    // Each class carries half of the total weight whatever the imbalance.
    let n = samples.len() as f64;
    let w_true = n / (2.0 * trues.len() as f64);
    let w_decoy = n / (2.0 * decoys.len() as f64);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut opt = AdamW::new(cfg.optimizer.clone());
    let mut grads = zeros_like(d);
    run_phase(
        d,
        cfg.max_epochs,
        cfg.disc_accuracy_target,
        |d| accuracy(d, trues, decoys),
        |d| {
            rng.shuffle(&mut order);
            for chunk in order.chunks(cfg.batch_size) {
                numkit::module::zero(&mut grads);
                let b = chunk.len() as f64;
                for &i in chunk {
                    let (x, positive) = samples[i];
                    let (z, cache) = d.forward_raw(x)?;
                    let (_, gz) = target_loss(z, positive);
                    let w = if positive { w_true } else { w_decoy };
                    if gz != 0.0 {
                        d.backward(&cache, w * gz / b, Some(&mut grads));
                    }
                }
                opt.step(d, &grads)?;
            }
            Ok(())
        },
    )
}

/// Trains `g` so that `d` scores generated pairs as true matches; `d` is
/// only read.
pub fn train_generator_phase(
    g: &mut Generator,
    d: &Discriminator,
    specs: &[Vec<f64>],
    cfg: &RoundConfig,
    is_final_round: bool,
    rng: &mut Prng,
) -> Result<PhaseReport> {
    cfg.validate()?;
    if specs.is_empty() {
        return Err(GanError::Empty("spectrum latent"));
    }
    if g.spec_dim() + g.struct_dim() != d.input_dim() {
        return Err(GanError::Dimension {
            what: "generator output plus spectrum latent",
            expected: d.input_dim(),
            found: g.spec_dim() + g.struct_dim(),
        });
    }
    let target = if is_final_round {
        cfg.final_round_gen_target
    } else {
        cfg.gen_fool_target
    };
    let spec_dim = g.spec_dim();
    let mut order: Vec<usize> = (0..specs.len()).collect();
    let mut opt = AdamW::new(cfg.optimizer.clone());
    let mut grads = zeros_like(g);
    run_phase(
        g,
        cfg.max_epochs,
        target,
        |g| fooling_rate(g, d, specs),
        |g| {
            rng.shuffle(&mut order);
            for chunk in order.chunks(cfg.batch_size) {
                numkit::module::zero(&mut grads);
                let batch: Vec<&[f64]> = chunk.iter().map(|&i| specs[i].as_slice()).collect();
                let (_, fake, caches) = g.forward_batch(&batch)?;
                let mut g_fake = Tensor::zeros(fake.shape());
                let b = chunk.len() as f64;
                for (r, spec) in batch.iter().enumerate() {
                    let x = concat(spec, fake.row(r));
                    let (z, cache) = d.forward_raw(&x)?;
                    let (_, gz) = target_loss(z, true);
                    let gx = d.backward(&cache, gz / b, None);
                    g_fake.row_mut(r).copy_from_slice(&gx[spec_dim..]);
                }
                g.backward(&caches, &g_fake, &mut grads);
                opt.step(g, &grads)?;
            }
            Ok(())
        },
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Discriminator,
    Generator,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Discriminator => "discriminator",
            Phase::Generator => "generator",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseLog {
    pub round: usize,
    pub phase: Phase,
    pub report: PhaseReport,
}

#[derive(Clone, Debug)]
pub struct ProtocolOutput {
    /// `("GAN-k", discriminator after round k)` for k = 0..=rounds.
    pub checkpoints: Vec<(String, Discriminator)>,
    pub generator: Generator,
    pub log: Vec<PhaseLog>,
}

pub fn checkpoint_name(round: usize) -> String {
    format!("GAN-{round}")
}

pub fn checkpoint_file_name(round: usize) -> String {
    format!("gan-{round}.msgw")
}

/// Round 0 trains the discriminator on true matches against isomer decoys.
/// Each later round first trains the generator against the previous
/// round's discriminator, then continues training the discriminator with
/// generated structures as the decoys.
pub fn run_protocol(
    mut d: Discriminator,
    mut g: Generator,
    trues: &[Vec<f64>],
    isomer_decoys: &[Vec<f64>],
    specs: &[Vec<f64>],
    cfg: &RoundConfig,
) -> Result<ProtocolOutput> {
    cfg.validate()?;
    let at = |round: usize| move |e: GanError| GanError::Round {
        round,
        source: Box::new(e),
    };
    let mut rng = Prng::new(cfg.seed);
    let mut log = Vec::new();
    let report = train_discriminator_phase(&mut d, trues, isomer_decoys, cfg, &mut rng).map_err(at(0))?;
    log::info!("round 0 discriminator: {} epochs, accuracy {:.4} ({})", report.epochs, report.metric, report.stop);
    log.push(PhaseLog {
        round: 0,
        phase: Phase::Discriminator,
        report,
    });
    let mut checkpoints = vec![(checkpoint_name(0), d.clone())];
    for round in 1..=cfg.rounds {
        let report =
            train_generator_phase(&mut g, &d, specs, cfg, round == cfg.rounds, &mut rng).map_err(at(round))?;
        log::info!("round {round} generator: {} epochs, fooling {:.4} ({})", report.epochs, report.metric, report.stop);
        log.push(PhaseLog {
            round,
            phase: Phase::Generator,
            report,
        });
        let fakes = specs
            .iter()
            .map(|s| Ok(concat(s, &g.generate(s)?)))
            .collect::<Result<Vec<_>>>()
            .map_err(at(round))?;
        let report = train_discriminator_phase(&mut d, trues, &fakes, cfg, &mut rng).map_err(at(round))?;
        log::info!("round {round} discriminator: {} epochs, accuracy {:.4} ({})", report.epochs, report.metric, report.stop);
        log.push(PhaseLog {
            round,
            phase: Phase::Discriminator,
            report,
        });
        checkpoints.push((checkpoint_name(round), d.clone()));
    }
    Ok(ProtocolOutput {
        checkpoints,
        generator: g,
        log,
    })
}

pub fn protocol_log_tsv(log: &[PhaseLog]) -> String {
    let mut out = String::from("round\tphase\tepochs\tmetric\tstop\n");
    for l in log {
        out.push_str(&format!(
            "{}\t{}\t{}\t{:.6}\t{}\n",
            l.round, l.phase, l.report.epochs, l.report.metric, l.report.stop
        ));
    }
    out
}

#[cfg(test)]
mod tests;
