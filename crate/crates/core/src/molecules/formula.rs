use std::collections::BTreeMap;
use std::fmt;

use super::{MolError, MolGraph};

pub const PROTON_MASS: f64 = 1.007_276_466_88;

/// Monoisotopic masses of the most abundant isotope, table version 1.
const MASSES: &[(&str, f64)] = &[
    ("H", 1.007_825_0),
    ("B", 11.009_305_4),
    ("C", 12.0),
    ("N", 14.003_074_0),
    ("O", 15.994_914_6),
    ("F", 18.998_403_2),
    ("Na", 22.989_769_3),
    ("Si", 27.976_926_5),
    ("P", 30.973_762_0),
    ("S", 31.972_070_7),
    ("Cl", 34.968_852_7),
    ("K", 38.963_706_5),
    ("Se", 79.916_521_3),
    ("Br", 78.918_337_1),
    ("I", 126.904_471_9),
];

pub fn element_mass(symbol: &str) -> Option<f64> {
    MASSES.iter().find(|(e, _)| *e == symbol).map(|(_, m)| *m)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Formula {
    pub counts: BTreeMap<String, u32>,
}

impl Formula {
    pub fn add(&mut self, element: &str, n: u32) {
        if n > 0 {
            *self.counts.entry(element.to_string()).or_default() += n;
        }
    }

    pub fn count(&self, element: &str) -> u32 {
        self.counts.get(element).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Parses a Hill-style string such as `C6H12O6`.
    pub fn parse(s: &str) -> Option<Formula> {
        let mut f = Formula::default();
        let b = s.as_bytes();
        let mut i = 0;
        while i < b.len() {
            if !b[i].is_ascii_uppercase() {
                return None;
            }
            let mut j = i + 1;
            while j < b.len() && b[j].is_ascii_lowercase() {
                j += 1;
            }
            let sym = &s[i..j];
            let mut k = j;
            while k < b.len() && b[k].is_ascii_digit() {
                k += 1;
            }
            let n = if k == j { 1 } else { s[j..k].parse().ok()? };
            f.add(sym, n);
            i = k;
        }
        (!f.is_empty()).then_some(f)
    }
}

/// Hill order: carbon, hydrogen, then alphabetical; strictly alphabetical
/// when there is no carbon.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut order: Vec<&str> = Vec::new();
        let has_c = self.counts.contains_key("C");
        if has_c {
            order.push("C");
            if self.counts.contains_key("H") {
                order.push("H");
            }
        }
        order.extend(
            self.counts
                .keys()
                .map(String::as_str)
                .filter(|e| !(has_c && (*e == "C" || *e == "H"))),
        );
        for e in order {
            match self.counts[e] {
                1 => write!(f, "{e}")?,
                n => write!(f, "{e}{n}")?,
            }
        }
        Ok(())
    }
}

pub fn formula_of(m: &MolGraph) -> Formula {
    let mut f = Formula::default();
    for a in &m.atoms {
        f.add(&a.element, 1);
        f.add("H", a.hydrogens);
    }
    f
}

pub fn monoisotopic_mass(f: &Formula) -> Result<f64, MolError> {
    if f.is_empty() {
        return Err(MolError::EmptyFormula);
    }
    f.counts.iter().try_fold(0.0, |acc, (e, &n)| {
        let m = element_mass(e).ok_or_else(|| MolError::UnknownElement(e.clone()))?;
        Ok(acc + f64::from(n) * m)
    })
}

/// Theoretical `[M+H]+` m/z.
pub fn protonated_mz(neutral_mass: f64) -> f64 {
    neutral_mass + PROTON_MASS
}

#[cfg(test)]
mod tests {
    use super::super::parse_smiles;
    use super::*;

    fn formula(smiles: &str) -> String {
        formula_of(&parse_smiles(smiles).unwrap()).to_string()
    }

    #[test]
    fn formulas() {
        assert_eq!(formula("CCO"), "C2H6O");
        assert_eq!(formula("O"), "H2O");
        assert_eq!(formula("[NH4+]"), "H4N");
        assert_eq!(formula("C"), "CH4");
        assert_eq!(formula("c1ccccc1"), "C6H6");
        assert_eq!(formula("OCC(O)C(O)C(O)C(O)C=O"), "C6H12O6");
        assert_eq!(formula("ClC(Cl)Cl"), "CHCl3");
        assert_eq!(formula("[Na+].[Cl-]"), "ClNa");
    }

    #[test]
    fn parse_round_trips() {
        for s in ["C6H12O6", "H2O", "CHCl3", "C10H14N5O7P"] {
            assert_eq!(Formula::parse(s).unwrap().to_string(), s);
        }
        assert!(Formula::parse("").is_none());
        assert!(Formula::parse("c6").is_none());
    }

    #[test]
    fn masses() {
        let glucose = Formula::parse("C6H12O6").unwrap();
        let oracle = 6.0 * 12.0 + 12.0 * 1.007_825_031_9 + 6.0 * 15.994_914_622_1;
        let m = monoisotopic_mass(&glucose).unwrap();
        assert!((m - oracle).abs() < 1e-4);
        assert!((m - 180.06339).abs() < 1e-4);
        assert!((protonated_mz(m) - 181.07066).abs() < 1e-4);
        let water = monoisotopic_mass(&Formula::parse("H2O").unwrap()).unwrap();
        assert!((water - 18.010_564_6).abs() < 1e-6);
    }

    #[test]
    fn mass_errors() {
        assert_eq!(monoisotopic_mass(&Formula::default()), Err(MolError::EmptyFormula));
        let mut f = Formula::default();
        f.add("Xe", 1);
        assert_eq!(monoisotopic_mass(&f), Err(MolError::UnknownElement("Xe".into())));
    }
}
