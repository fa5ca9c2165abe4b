//! Run configuration: a strict JSON schema layered over a named preset.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use ms2metgan::autoencoders::{SpectrumAeConfig, StructureAeConfig};
use ms2metgan::latentgan::{DiscriminatorConfig, RoundConfig};
use ms2metgan::spectra::BIN_COUNT;
use numkit::AdamWConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Paper,
    Desk,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(format!("unknown preset {other:?} (expected paper or desk)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub spectrum_input: usize,
    pub spectrum_encoder_hidden: [usize; 2],
    pub d_spec: usize,
    pub spectrum_decoder_hidden: [usize; 6],
    pub dropout: f64,
    pub structure_width: usize,
    pub structure_heads: usize,
    pub structure_ff: usize,
    pub structure_layers: usize,
    pub d_struct: usize,
    pub distance_cap: usize,
    pub max_degree: usize,
    pub generator_hidden: [usize; 2],
    pub tokens: usize,
    pub discriminator_heads: usize,
    pub discriminator_ff: usize,
    pub discriminator_layers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Optimizer {
    pub lr: f64,
    pub betas: [f64; 2],
    pub eps: f64,
    pub weight_decay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Training {
    pub ae_epochs: usize,
    pub ae_batch_size: usize,
    /// Per-sample encoder steps with the decoder frozen.
    pub finetune_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    pub rounds: usize,
    pub disc_accuracy_target: f64,
    pub gen_fool_target: f64,
    pub final_round_gen_target: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decoys {
    pub test_cap: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub spectra: PathBuf,
    pub corpus: PathBuf,
    pub cache: PathBuf,
    pub checkpoints: PathBuf,
    pub reports: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dims: Dims,
    pub optimizer: Optimizer,
    pub training: Training,
    pub protocol: Protocol,
    pub decoys: Decoys,
    pub paths: Paths,
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        let s = match p {
            Preset::Paper => SpectrumAeConfig::paper(),
            Preset::Desk => SpectrumAeConfig::desk(),
        };
        let c = match p {
            Preset::Paper => StructureAeConfig::paper(),
            Preset::Desk => StructureAeConfig::desk(),
        };
        let (generator_hidden, tokens, discriminator_ff) = match p {
            Preset::Paper => ([2000, 1600], 20, 556),
            Preset::Desk => ([16, 16], 4, 20),
        };
        let opt = AdamWConfig::default();
        let rounds = RoundConfig::default();
        RunConfig {
            seed: 0,
            dims: Dims {
                spectrum_input: s.input_dim,
                spectrum_encoder_hidden: s.encoder_hidden,
                d_spec: s.latent_dim,
                spectrum_decoder_hidden: s.decoder_hidden,
                dropout: s.dropout,
                structure_width: c.width,
                structure_heads: c.heads,
                structure_ff: c.ff_dim,
                structure_layers: c.encoder_layers,
                d_struct: c.latent_dim,
                distance_cap: c.distance_cap,
                max_degree: c.max_degree,
                generator_hidden,
                tokens,
                discriminator_heads: 1,
                discriminator_ff,
                discriminator_layers: 16,
            },
            optimizer: Optimizer {
                lr: opt.lr,
                betas: [opt.beta1, opt.beta2],
                eps: opt.eps,
                weight_decay: opt.weight_decay,
            },
            training: Training {
                ae_epochs: if p == Preset::Paper { 100 } else { 150 },
                ae_batch_size: 16,
                finetune_steps: 20,
            },
            protocol: Protocol {
                rounds: if p == Preset::Paper { rounds.rounds } else { 3 },
                disc_accuracy_target: rounds.disc_accuracy_target,
                gen_fool_target: rounds.gen_fool_target,
                final_round_gen_target: rounds.final_round_gen_target,
                max_epochs: if p == Preset::Paper { rounds.max_epochs } else { 2000 },
                batch_size: rounds.batch_size,
            },
            decoys: Decoys { test_cap: 10 },
            paths: Paths {
                spectra: "spectra.mgf".into(),
                corpus: "corpus.tsv".into(),
                cache: "cache.lmsm".into(),
                checkpoints: "checkpoints".into(),
                reports: "reports".into(),
            },
        }
    }

    /// Overlays `overrides` on the preset; keys missing from the schema are
    /// rejected.
    pub fn from_value(preset: Preset, overrides: Value) -> Result<Self> {
        if !overrides.is_object() {
            bail!("configuration must be a JSON object");
        }
        let mut base = serde_json::to_value(Self::preset(preset))?;
        merge(&mut base, overrides);
        let cfg: RunConfig = serde_json::from_value(base).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        let positive = [
            ("spectrum_input", d.spectrum_input),
            ("d_spec", d.d_spec),
            ("structure_width", d.structure_width),
            ("structure_heads", d.structure_heads),
            ("structure_ff", d.structure_ff),
            ("d_struct", d.d_struct),
            ("distance_cap", d.distance_cap),
            ("tokens", d.tokens),
            ("discriminator_heads", d.discriminator_heads),
            ("discriminator_ff", d.discriminator_ff),
            ("ae_batch_size", self.training.ae_batch_size),
            ("protocol.batch_size", self.protocol.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                bail!("{name} must be positive");
            }
        }
        if d.spectrum_encoder_hidden.contains(&0)
            || d.spectrum_decoder_hidden.contains(&0)
            || d.generator_hidden.contains(&0)
        {
            bail!("hidden widths must be positive");
        }
        if d.spectrum_input > BIN_COUNT / 2 {
            bail!("spectrum_input {} exceeds the {} downsampled bins", d.spectrum_input, BIN_COUNT / 2);
        }
        if d.structure_width % d.structure_heads != 0 {
            bail!(
                "structure_width {} is not divisible by structure_heads {}",
                d.structure_width,
                d.structure_heads
            );
        }
        let joint = d.d_spec + d.d_struct;
        if joint % d.tokens != 0 {
            bail!("d_spec + d_struct = {joint} is not divisible by tokens {}", d.tokens);
        }
        if (joint / d.tokens) % d.discriminator_heads != 0 {
            bail!(
                "token width {} is not divisible by discriminator_heads {}",
                joint / d.tokens,
                d.discriminator_heads
            );
        }
        if !(0.0..1.0).contains(&d.dropout) {
            bail!("dropout {} outside [0, 1)", d.dropout);
        }
        self.round_config().validate()?;
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        let o = &self.optimizer;
        AdamWConfig {
            lr: o.lr,
            beta1: o.betas[0],
            beta2: o.betas[1],
            eps: o.eps,
            weight_decay: o.weight_decay,
        }
    }

    pub fn spectrum_ae(&self) -> SpectrumAeConfig {
        let d = &self.dims;
        SpectrumAeConfig {
            input_dim: d.spectrum_input,
            encoder_hidden: d.spectrum_encoder_hidden,
            latent_dim: d.d_spec,
            decoder_hidden: d.spectrum_decoder_hidden,
            dropout: d.dropout,
        }
    }

    pub fn structure_ae(&self) -> StructureAeConfig {
        let d = &self.dims;
        StructureAeConfig {
            width: d.structure_width,
            heads: d.structure_heads,
            ff_dim: d.structure_ff,
            encoder_layers: d.structure_layers,
            latent_dim: d.d_struct,
            distance_cap: d.distance_cap,
            max_degree: d.max_degree,
        }
    }

    pub fn discriminator(&self) -> DiscriminatorConfig {
        let d = &self.dims;
        DiscriminatorConfig {
            tokens: d.tokens,
            heads: d.discriminator_heads,
            ff_dim: d.discriminator_ff,
            layers: d.discriminator_layers,
        }
    }

    pub fn round_config(&self) -> RoundConfig {
        let p = &self.protocol;
        RoundConfig {
            rounds: p.rounds,
            disc_accuracy_target: p.disc_accuracy_target,
            gen_fool_target: p.gen_fool_target,
            final_round_gen_target: p.final_round_gen_target,
            max_epochs: p.max_epochs,
            batch_size: p.batch_size,
            optimizer: self.adamw(),
            seed: sub_seed(self.seed, 5),
        }
    }
}

/// Independent seed for one pipeline component.
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Reads a configuration file. A top-level `"preset"` key selects the base
/// unless `preset` is given explicitly.
pub fn load_config(path: Option<&Path>, preset: Option<Preset>) -> Result<RunConfig> {
    let mut value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<Value>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => Value::Object(Default::default()),
    };
    let named = match value.as_object_mut().and_then(|o| o.remove("preset")) {
        Some(Value::String(s)) => Some(s.parse::<Preset>().map_err(anyhow::Error::msg)?),
        Some(other) => bail!("preset must be a string, got {other}"),
        None => None,
    };
    RunConfig::from_value(preset.or(named).unwrap_or(Preset::Paper), value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_paper() {
        let c = RunConfig::from_value(Preset::Paper, json!({})).unwrap();
        assert_eq!(c.dims.d_spec, 1500);
        assert_eq!(c.dims.d_struct, 1280);
        assert_eq!(c.protocol.rounds, 9);
        assert_eq!(c.protocol.disc_accuracy_target, 0.99);
        assert_eq!(c.protocol.final_round_gen_target, 0.9875);
        assert_eq!(c.dims.dropout, 1e-4);
        assert_eq!((c.dims.d_spec + c.dims.d_struct) / c.dims.tokens, 139);
    }

    #[test]
    fn desk_same_schema() {
        let paper = serde_json::to_value(RunConfig::preset(Preset::Paper)).unwrap();
        let desk = serde_json::to_value(RunConfig::preset(Preset::Desk)).unwrap();
        fn keys(v: &Value, prefix: &str, out: &mut Vec<String>) {
            if let Value::Object(o) = v {
                for (k, v) in o {
                    let p = format!("{prefix}.{k}");
                    out.push(p.clone());
                    keys(v, &p, out);
                }
            }
        }
        let (mut a, mut b) = (Vec::new(), Vec::new());
        keys(&paper, "", &mut a);
        keys(&desk, "", &mut b);
        assert_eq!(a, b);
        RunConfig::preset(Preset::Desk).validate().unwrap();
        assert_eq!(RunConfig::preset(Preset::Desk).dims.d_spec, 8);
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = RunConfig::from_value(Preset::Paper, json!({"optimizer": {"lr_decay": 0.5}})).unwrap_err();
        assert!(format!("{e:#}").contains("lr_decay"), "{e:#}");
        assert!(RunConfig::from_value(Preset::Paper, json!({"lr_decay": 0.5})).is_err());
    }

    #[test]
    fn partial_override() {
        let c = RunConfig::from_value(Preset::Desk, json!({"optimizer": {"lr": 0.01}, "seed": 9})).unwrap();
        assert_eq!(c.optimizer.lr, 0.01);
        assert_eq!(c.optimizer.betas, [0.9, 0.999]);
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn conflicting_dims() {
        let e = RunConfig::from_value(Preset::Desk, json!({"dims": {"tokens": 3}})).unwrap_err();
        assert!(e.to_string().contains("divisible"), "{e}");
        assert!(RunConfig::from_value(Preset::Desk, json!({"dims": {"structure_heads": 3}})).is_err());
        assert!(RunConfig::from_value(Preset::Desk, json!({"dims": {"d_spec": 0}})).is_err());
        assert!(RunConfig::from_value(Preset::Desk, json!({"protocol": {"gen_fool_target": 1.5}})).is_err());
    }

    #[test]
    fn malformed_json_has_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, "{\n  \"seed\": 1,\n  oops\n}").unwrap();
        let e = load_config(Some(&p), None).unwrap_err();
        assert!(format!("{e:#}").contains("line 3"), "{e:#}");
    }

    #[test]
    fn preset_key_in_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"preset": "desk"}"#).unwrap();
        assert_eq!(load_config(Some(&p), None).unwrap().dims.d_spec, 8);
        assert_eq!(load_config(Some(&p), Some(Preset::Paper)).unwrap().dims.d_spec, 1500);
    }
}
