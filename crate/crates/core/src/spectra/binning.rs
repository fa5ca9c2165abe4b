use super::{SpectraError, Spectrum};

pub const BIN_WIDTH: f64 = 0.1;
pub const MAX_MZ: f64 = 1500.0;
/// `ceil(MAX_MZ / BIN_WIDTH)`
pub const BIN_COUNT: usize = 15_000;

/// Max-normalized summed intensities on half-open `0.1` m/z bins.
#[derive(Clone, Debug, PartialEq)]
pub struct BinnedSpectrum {
    pub source_id: String,
    pub bins: Vec<f64>,
}

/// Bins a spectrum onto the fixed grid.
///
/// Bin index is `floor(mz * 10)`; anything landing at index `BIN_COUNT` or
/// above (i.e. `mz >= 1500`) is dropped. The summed vector is divided by its
/// maximum; a spectrum with no surviving intensity stays all-zero.
pub fn bin_spectrum(s: &Spectrum) -> BinnedSpectrum {
    let mut bins = vec![0.0; BIN_COUNT];
    for p in &s.peaks {
        let idx = (p.mz * 10.0).floor();
        if idx >= 0.0 && (idx as usize) < BIN_COUNT {
            bins[idx as usize] += p.intensity;
        }
    }
    let max = bins.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        bins.iter_mut().for_each(|b| *b /= max);
    }
    BinnedSpectrum {
        source_id: s.id.clone(),
        bins,
    }
}

/// `out[i] = v[2i] + v[2i+1]`
pub fn downsample_adjacent(v: &[f64]) -> Result<Vec<f64>, SpectraError> {
    if v.len() % 2 != 0 {
        return Err(SpectraError::OddLength(v.len()));
    }
    Ok(v.chunks_exact(2).map(|c| c[0] + c[1]).collect())
}

/// Sums contiguous blocks so `v` shrinks to `width` entries. Block `j`
/// covers `[j*n/width, (j+1)*n/width)`, so uneven splits are spread evenly.
/// `width == v.len()` is the identity.
pub fn pool_blocks(v: &[f64], width: usize) -> Result<Vec<f64>, SpectraError> {
    let n = v.len();
    if width == 0 || width > n {
        return Err(SpectraError::BadPoolWidth { from: n, to: width });
    }
    Ok((0..width)
        .map(|j| v[j * n / width..(j + 1) * n / width].iter().sum())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::super::Peak;
    use super::*;

    fn spectrum(peaks: &[(f64, f64)]) -> Spectrum {
        Spectrum {
            id: "s".into(),
            compound_id: "c".into(),
            precursor_mz: 300.0,
            peaks: peaks
                .iter()
                .map(|&(mz, intensity)| Peak { mz, intensity })
                .collect(),
        }
    }

    #[test]
    fn peaks_sum_within_a_bin_then_normalize() {
        let b = bin_spectrum(&spectrum(&[(100.05, 3.0), (100.09, 1.0), (250.00, 2.0)]));
        assert_eq!(b.bins.len(), BIN_COUNT);
        assert_eq!(b.bins[1000], 1.0);
        assert_eq!(b.bins[2500], 0.5);
        let nonzero = b.bins.iter().filter(|&&x| x != 0.0).count();
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn no_peaks_gives_zero_vector() {
        let b = bin_spectrum(&spectrum(&[]));
        assert!(b.bins.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn peaks_above_cutoff_are_ignored() {
        let b = bin_spectrum(&spectrum(&[(1500.2, 5.0)]));
        assert!(b.bins.iter().all(|&x| x == 0.0));
        // the grid is half-open, so 1500.0 itself falls off the end
        let b = bin_spectrum(&spectrum(&[(1500.0, 5.0)]));
        assert!(b.bins.iter().all(|&x| x == 0.0));
        let b = bin_spectrum(&spectrum(&[(1499.99, 5.0)]));
        assert_eq!(b.bins[BIN_COUNT - 1], 1.0);
    }

    #[test]
    fn downsample_pairs() {
        assert_eq!(downsample_adjacent(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![3.0, 7.0]);
        let z = downsample_adjacent(&vec![0.0; BIN_COUNT]).unwrap();
        assert_eq!(z.len(), 7500);
        assert!(z.iter().all(|&x| x == 0.0));
        assert_eq!(downsample_adjacent(&[0.0; 7]), Err(SpectraError::OddLength(7)));
    }

    #[test]
    fn pooling_blocks() {
        let v: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(pool_blocks(&v, 10).unwrap(), v);
        assert_eq!(pool_blocks(&v, 2).unwrap(), vec![10.0, 35.0]);
        assert_eq!(pool_blocks(&v, 3).unwrap(), vec![3.0, 12.0, 30.0]);
        assert!(pool_blocks(&v, 11).is_err());
        assert!(pool_blocks(&v, 0).is_err());
    }
}
