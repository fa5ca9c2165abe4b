//! On-disk artifacts shared between subcommands.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ms2metgan::decoygen::CompoundCorpus;
use ms2metgan::molecules::parse_corpus;
use ms2metgan::spectra::{BinnedSpectrum, BIN_COUNT};
use numkit::{Checkpoint, Module};
use serde::{Deserialize, Serialize};

/// Marks an error as a usage or configuration problem (exit status 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(e: anyhow::Error) -> anyhow::Error {
    anyhow::Error::new(UsageError(format!("{e:#}")))
}

pub fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(anyhow::anyhow!("input {} does not exist", path.display())))
    }
}

/// Refuses to clobber existing outputs unless forced; creates parent
/// directories.
pub fn claim(outputs: &[PathBuf], force: bool) -> Result<()> {
    for p in outputs {
        if p.exists() && !force {
            return Err(usage(anyhow::anyhow!(
                "{} already exists (pass --force to overwrite)",
                p.display()
            )));
        }
    }
    for p in outputs {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    require(path)?;
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn load_corpus(path: &Path) -> Result<CompoundCorpus> {
    let records = parse_corpus(&read_text(path)?).with_context(|| format!("in {}", path.display()))?;
    CompoundCorpus::from_records(records).with_context(|| format!("in {}", path.display()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparedSpectrum {
    pub id: String,
    pub compound_id: String,
    pub precursor_mz: f64,
    /// Non-zero `(bin, intensity)` pairs.
    pub bins: Vec<(u32, f64)>,
}

impl PreparedSpectrum {
    pub fn from_binned(b: &BinnedSpectrum, compound_id: &str, precursor_mz: f64) -> Self {
        PreparedSpectrum {
            id: b.source_id.clone(),
            compound_id: compound_id.to_string(),
            precursor_mz,
            bins: b
                .bins
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i as u32, *v))
                .collect(),
        }
    }

    pub fn to_binned(&self) -> Result<BinnedSpectrum> {
        let mut bins = vec![0.0; BIN_COUNT];
        for &(i, v) in &self.bins {
            let slot = bins
                .get_mut(i as usize)
                .with_context(|| format!("spectrum {}: bin {i} out of range", self.id))?;
            *slot = v;
        }
        Ok(BinnedSpectrum {
            source_id: self.id.clone(),
            bins,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prepared {
    pub spectra: Vec<PreparedSpectrum>,
}

impl Prepared {
    pub fn read(path: &Path) -> Result<Self> {
        serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &serde_json::to_string(self)?)
    }
}

pub fn save_model<M: Module>(m: &M, path: &Path) -> Result<()> {
    Checkpoint::from_module(m)
        .write(path)
        .with_context(|| format!("writing {}", path.display()))
}

/// Overwrites the freshly initialised `m` with the parameters in `path`.
pub fn load_model<M: Module>(m: &mut M, path: &Path) -> Result<()> {
    require(path)?;
    Checkpoint::read(path)
        .and_then(|c| c.load_into(m))
        .with_context(|| format!("loading {}", path.display()))
}
