//! MS/MS spectrum ingestion, per-compound merging and fixed-width binning.

mod binning;
mod mgf;

pub use binning::{bin_spectrum, downsample_adjacent, pool_blocks, BinnedSpectrum, BIN_COUNT, BIN_WIDTH, MAX_MZ};
pub use mgf::{parse_mgf, write_mgf};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpectraError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unterminated block starting at line {line}")]
    Unterminated { line: usize },
    #[error("cannot merge an empty group of spectra")]
    EmptyGroup,
    #[error("cannot merge spectra of different compounds: {first:?} and {other:?}")]
    MixedCompounds { first: String, other: String },
    #[error("vector length {0} is odd")]
    OddLength(usize),
    #[error("cannot pool {from} values into {to} blocks")]
    BadPoolWidth { from: usize, to: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub mz: f64,
    pub intensity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub id: String,
    pub compound_id: String,
    pub precursor_mz: f64,
    pub peaks: Vec<Peak>,
}

/// Concatenates the peak lists of spectra recorded for the same compound.
/// Peaks are appended in input order, never merged or summed; the
/// precursor and id come from the first spectrum.
pub fn merge_spectra(group: &[Spectrum]) -> Result<Spectrum, SpectraError> {
    let first = group.first().ok_or(SpectraError::EmptyGroup)?;
    if let Some(other) = group.iter().find(|s| s.compound_id != first.compound_id) {
        return Err(SpectraError::MixedCompounds {
            first: first.compound_id.clone(),
            other: other.compound_id.clone(),
        });
    }
    Ok(Spectrum {
        id: first.id.clone(),
        compound_id: first.compound_id.clone(),
        precursor_mz: first.precursor_mz,
        peaks: group.iter().flat_map(|s| s.peaks.iter().copied()).collect(),
    })
}

/// Groups spectra by compound (first-seen order) and merges each group.
pub fn merge_by_compound(spectra: &[Spectrum]) -> Vec<Spectrum> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: std::collections::HashMap<&str, Vec<Spectrum>> = Default::default();
    for s in spectra {
        let key = s.compound_id.as_str();
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(s.clone());
    }
    order
        .into_iter()
        .map(|k| merge_spectra(&groups[k]).expect("group shares one compound"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum(compound: &str, n: usize, offset: f64) -> Spectrum {
        Spectrum {
            id: format!("{compound}-{offset}"),
            compound_id: compound.into(),
            precursor_mz: 200.0 + offset,
            peaks: (0..n)
                .map(|i| Peak {
                    mz: 50.0 + offset + i as f64,
                    intensity: i as f64,
                })
                .collect(),
        }
    }

    #[test]
    fn single_spectrum_merges_to_itself() {
        let s = spectrum("a", 4, 0.0);
        assert_eq!(merge_spectra(std::slice::from_ref(&s)).unwrap(), s);
    }

    #[test]
    fn merge_concatenates_in_order() {
        let a = spectrum("a", 3, 0.0);
        let b = spectrum("a", 5, 100.0);
        let m = merge_spectra(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(m.peaks.len(), 8);
        assert_eq!(&m.peaks[..3], &a.peaks[..]);
        assert_eq!(&m.peaks[3..], &b.peaks[..]);
        assert_eq!(m.precursor_mz, a.precursor_mz);
    }

    #[test]
    fn merge_rejects_mixed_and_empty_groups() {
        let err = merge_spectra(&[spectrum("a", 1, 0.0), spectrum("b", 1, 0.0)]);
        assert!(matches!(err, Err(SpectraError::MixedCompounds { .. })));
        assert_eq!(merge_spectra(&[]), Err(SpectraError::EmptyGroup));
    }

    #[test]
    fn grouping_keeps_first_seen_order() {
        let all = [spectrum("b", 1, 0.0), spectrum("a", 2, 0.0), spectrum("b", 3, 1.0)];
        let merged = merge_by_compound(&all);
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0].compound_id, "b");
        assert_eq!(merged[0].peaks.len(), 4);
        assert_eq!(merged[1].peaks.len(), 2);
    }
}
