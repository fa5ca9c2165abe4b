//! Database search: precursor-mass candidate filtering, latent lookup,
//! discriminator scoring and ranking of the true compound.

mod cache;

pub use cache::{LatentCache, CACHE_MAGIC, CACHE_VERSION};

use std::fmt::Write as _;

use thiserror::Error;

use crate::autoencoders::AeError;
use crate::decoygen::CompoundCorpus;
use crate::latentgan::{concat, Discriminator, GanError};
use crate::molecules::PROTON_MASS;

/// Half-width of the neutral-mass window, in daltons.
pub const MASS_TOLERANCE: f64 = 0.02;

// Absorbs representation error so that a difference of exactly 0.02 stays inside.
const WINDOW_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported cache version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated cache: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("{0} trailing bytes after the last cache entry")]
    TrailingBytes(usize),
    #[error("latent dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("cache dimension must be positive")]
    ZeroDim,
    #[error("non-finite latent for {0:?}")]
    NonFinite(String),
    #[error("compound id of {0} bytes does not fit the cache format")]
    IdTooLong(usize),
    #[error("invalid UTF-8 in cache id")]
    BadId,
    #[error("duplicate cache entry {0:?}")]
    DuplicateEntry(String),
    #[error("no latent for candidate {0:?} and no encoder available")]
    MissingLatent(String),
    #[error("true compound {0:?} is not among the scored candidates")]
    TrueAbsent(String),
    #[error("encoding {id:?}: {source}")]
    Encode {
        id: String,
        #[source]
        source: AeError,
    },
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SearchError> = std::result::Result<T, E>;

/// Corpus ids whose neutral monoisotopic mass lies within
/// [`MASS_TOLERANCE`] of the [M+H]+ precursor, in id order.
pub fn filter_candidates(precursor_mz: f64, corpus: &CompoundCorpus) -> Vec<String> {
    let target = precursor_mz - PROTON_MASS;
    corpus
        .iter()
        .filter(|(_, e)| (e.mass - target).abs() <= MASS_TOLERANCE + WINDOW_SLACK)
        .map(|(id, _)| id.to_string())
        .collect()
}

pub type Encoder<'a> = &'a (dyn Fn(&str) -> Result<Vec<f64>, AeError> + Sync);

/// Where candidate structure latents come from: the cache first, then the
/// encoder if one is supplied.
#[derive(Clone, Copy)]
pub struct LatentSource<'a> {
    pub cache: Option<&'a LatentCache>,
    pub encoder: Option<Encoder<'a>>,
}

impl<'a> LatentSource<'a> {
    pub fn cache(cache: &'a LatentCache) -> Self {
        Self {
            cache: Some(cache),
            encoder: None,
        }
    }

    pub fn latent(&self, id: &str) -> Result<Vec<f64>> {
        if let Some(v) = self.cache.and_then(|c| c.get_f64(id)) {
            return Ok(v);
        }
        match self.encoder {
            Some(enc) => enc(id).map_err(|source| SearchError::Encode {
                id: id.to_string(),
                source,
            }),
            None => Err(SearchError::MissingLatent(id.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub id: String,
    pub score: f64,
}

/// Scores each candidate in input order.
pub fn score_candidates(
    spec_latent: &[f64],
    candidates: &[String],
    source: &LatentSource<'_>,
    d: &Discriminator,
) -> Result<Vec<Scored>> {
    candidates
        .iter()
        .map(|id| {
            let s = source.latent(id)?;
            let score = d.score(&concat(spec_latent, &s))?;
            Ok(Scored {
                id: id.clone(),
                score,
            })
        })
        .collect()
}

/// One plus the number of other candidates scoring at least as high as the
/// true compound; ties count against it.
pub fn rank_true(scored: &[Scored], true_id: &str) -> Result<usize> {
    let t = scored
        .iter()
        .find(|s| s.id == true_id)
        .ok_or_else(|| SearchError::TrueAbsent(true_id.to_string()))?;
    Ok(1 + scored
        .iter()
        .filter(|s| s.id != true_id && s.score >= t.score)
        .count())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub spectrum_id: String,
    pub ranked: Vec<Scored>,
    pub true_rank: Option<usize>,
}

/// Sorts by descending score (ties by id) and ranks `true_id` if given.
pub fn finish_search(
    spectrum_id: &str,
    mut scored: Vec<Scored>,
    true_id: Option<&str>,
) -> Result<SearchResult> {
    let true_rank = true_id.map(|t| rank_true(&scored, t)).transpose()?;
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    Ok(SearchResult {
        spectrum_id: spectrum_id.to_string(),
        ranked: scored,
        true_rank,
    })
}

pub fn search_spectrum(
    spectrum_id: &str,
    spec_latent: &[f64],
    candidates: &[String],
    true_id: Option<&str>,
    source: &LatentSource<'_>,
    d: &Discriminator,
) -> Result<SearchResult> {
    let scored = score_candidates(spec_latent, candidates, source, d)?;
    finish_search(spectrum_id, scored, true_id)
}

pub const RESULTS_HEADER: &str = "spectrum_id\trank\tcandidate_id\tscore";

pub fn results_tsv(results: &[SearchResult]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in results {
        for (i, s) in r.ranked.iter().enumerate() {
            let _ = writeln!(out, "{}\t{}\t{}\t{:.6}", r.spectrum_id, i + 1, s.id, s.score);
        }
    }
    out
}
