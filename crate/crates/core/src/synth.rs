//! Synthetic [M+H]+ fragment spectra.
//!
//! Every acyclic bond is cleaved once; each side becomes a protonated
//! fragment whose intensity is its share of the heavy atoms. The intact
//! precursor is added at full intensity. Ring bonds are never cleaved.

use std::collections::BTreeMap;

use crate::molecules::{element_mass, MolGraph, MolError, PROTON_MASS};
use crate::spectra::{Peak, Spectrum};

fn component(m: &MolGraph, adj: &[Vec<(usize, usize)>], start: usize, skip: usize) -> Vec<usize> {
    let mut seen = vec![false; m.atoms.len()];
    let mut stack = vec![start];
    seen[start] = true;
    let mut out = Vec::new();
    while let Some(a) = stack.pop() {
        out.push(a);
        for &(n, b) in &adj[a] {
            if b != skip && !seen[n] {
                seen[n] = true;
                stack.push(n);
            }
        }
    }
    out
}

fn atoms_mass(m: &MolGraph, atoms: &[usize]) -> Result<f64, MolError> {
    let h = element_mass("H").expect("hydrogen in mass table");
    atoms.iter().try_fold(0.0, |acc, &i| {
        let a = &m.atoms[i];
        let mass = element_mass(&a.element).ok_or_else(|| MolError::UnknownElement(a.element.clone()))?;
        Ok(acc + mass + f64::from(a.hydrogens) * h)
    })
}

pub fn fragment_spectrum(m: &MolGraph, spectrum_id: &str) -> Result<Spectrum, MolError> {
    let n = m.atoms.len();
    let all: Vec<usize> = (0..n).collect();
    let precursor = atoms_mass(m, &all)? + PROTON_MASS;
    let adj = m.adjacency();
    // keyed by m/z in 1e-6 Da steps so coinciding fragments add up
    let mut peaks: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    let mut add = |mz: f64, intensity: f64| {
        let e = peaks.entry((mz * 1e6).round() as i64).or_insert((mz, 0.0));
        e.1 += intensity;
    };
    add(precursor, 1.0);
    for (b, bond) in m.bonds.iter().enumerate() {
        let side = component(m, &adj, bond.a, b);
        if side.len() == n {
            continue;
        }
        let mut other: Vec<usize> = (0..n).filter(|i| !side.contains(i)).collect();
        other.sort_unstable();
        for part in [&side, &other] {
            add(atoms_mass(m, part)? + PROTON_MASS, part.len() as f64 / n as f64);
        }
    }
    Ok(Spectrum {
        id: spectrum_id.to_string(),
        compound_id: m.id.clone(),
        precursor_mz: precursor,
        peaks: peaks
            .into_values()
            .map(|(mz, intensity)| Peak { mz, intensity })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molecules::{formula_of, monoisotopic_mass, parse_smiles, protonated_mz};

    #[test]
    fn ethanol() {
        let m = parse_smiles("CCO").unwrap().with_id("etoh");
        let s = fragment_spectrum(&m, "s1").unwrap();
        let mass = monoisotopic_mass(&formula_of(&m)).unwrap();
        assert!((s.precursor_mz - protonated_mz(mass)).abs() < 1e-9);
        assert_eq!(s.compound_id, "etoh");
        // CH3 | CH2OH and CH3CH2 | OH
        assert_eq!(s.peaks.len(), 5);
        assert!(s.peaks.windows(2).all(|w| w[0].mz < w[1].mz));
    }

    #[test]
    fn rings_are_kept() {
        let m = parse_smiles("C1CCCCC1").unwrap();
        assert_eq!(fragment_spectrum(&m, "s").unwrap().peaks.len(), 1);
    }
}
