//! Training negatives and per-spectrum test decoy sets drawn from a local
//! compound corpus.
//!
//! A decoy is a structural isomer of the true compound (same formula) whose
//! fingerprint similarity to it does not exceed [`SIMILARITY_LIMIT`].

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::molecules::{
    formula_of, monoisotopic_mass, path_fingerprint, tanimoto, CompoundRecord, Fingerprint,
    Formula, MolError, MolGraph,
};

pub const SIMILARITY_LIMIT: f64 = 0.75;
pub const TEST_DECOY_CAP: usize = 10;

#[derive(Debug, Error)]
pub enum DecoyError {
    #[error("duplicate compound id {0:?}")]
    DuplicateId(String),
    #[error("unknown compound id {0:?}")]
    UnknownId(String),
    #[error("compound {id:?}: {source}")]
    Chemistry {
        id: String,
        #[source]
        source: MolError,
    },
    #[error("assignment line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = DecoyError> = std::result::Result<T, E>;

#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub graph: MolGraph,
    pub formula: Formula,
    pub mass: f64,
    pub fingerprint: Fingerprint,
}

/// Immutable after construction; every lookup is read-only.
#[derive(Clone, Debug, Default)]
pub struct CompoundCorpus {
    records: BTreeMap<String, CorpusEntry>,
    by_formula: HashMap<Formula, Vec<String>>,
}

impl CompoundCorpus {
    pub fn from_records(records: Vec<CompoundRecord>) -> Result<Self> {
        let mut corpus = Self::default();
        for r in records {
            if corpus.records.contains_key(&r.id) {
                return Err(DecoyError::DuplicateId(r.id));
            }
            let formula = formula_of(&r.graph);
            let mass = monoisotopic_mass(&formula).map_err(|source| DecoyError::Chemistry {
                id: r.id.clone(),
                source,
            })?;
            let fingerprint = path_fingerprint(&r.graph);
            corpus
                .by_formula
                .entry(formula.clone())
                .or_default()
                .push(r.id.clone());
            corpus.records.insert(
                r.id,
                CorpusEntry {
                    graph: r.graph,
                    formula,
                    mass,
                    fingerprint,
                },
            );
        }
        for ids in corpus.by_formula.values_mut() {
            ids.sort();
        }
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CorpusEntry> {
        self.records.get(id)
    }

    /// Entries in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &CorpusEntry)> {
        self.records.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn isomers_of(&self, f: &Formula) -> &[String] {
        self.by_formula.get(f).map_or(&[], Vec::as_slice)
    }

    fn entry(&self, id: &str) -> Result<&CorpusEntry> {
        self.records
            .get(id)
            .ok_or_else(|| DecoyError::UnknownId(id.to_string()))
    }

    /// Qualifying isomers of `true_id`, least similar first, ties by id.
    pub fn ranked_isomers(&self, true_id: &str) -> Result<Vec<(String, f64)>> {
        let t = self.entry(true_id)?;
        let mut out: Vec<(String, f64)> = self
            .isomers_of(&t.formula)
            .iter()
            .filter(|id| id.as_str() != true_id)
            .map(|id| {
                let s = tanimoto(&t.fingerprint, &self.records[id].fingerprint);
                (id.clone(), s)
            })
            .filter(|&(_, s)| s <= SIMILARITY_LIMIT)
            .collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        Ok(out)
    }
}

pub fn select_training_decoy(true_id: &str, corpus: &CompoundCorpus) -> Result<Option<String>> {
    Ok(corpus
        .ranked_isomers(true_id)?
        .into_iter()
        .next()
        .map(|(id, _)| id))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecoyAssignment {
    pub spectrum_id: String,
    pub true_compound_id: String,
    pub decoy_ids: Vec<String>,
}

pub fn build_test_decoy_set(
    spectrum_id: &str,
    true_id: &str,
    corpus: &CompoundCorpus,
    cap: usize,
) -> Result<DecoyAssignment> {
    let mut ranked = corpus.ranked_isomers(true_id)?;
    ranked.truncate(cap);
    Ok(DecoyAssignment {
        spectrum_id: spectrum_id.to_string(),
        true_compound_id: true_id.to_string(),
        decoy_ids: ranked.into_iter().map(|(id, _)| id).collect(),
    })
}

pub fn assignments_tsv(rows: &[DecoyAssignment]) -> String {
    let mut out = String::new();
    for a in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            a.spectrum_id,
            a.true_compound_id,
            a.decoy_ids.join(",")
        );
    }
    out
}

pub fn parse_assignments(text: &str) -> Result<Vec<DecoyAssignment>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 || cols[0].is_empty() || cols[1].is_empty() {
            return Err(DecoyError::Parse {
                line: i + 1,
                message: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        }
        let decoy_ids = if cols[2].is_empty() {
            Vec::new()
        } else {
            cols[2].split(',').map(str::to_string).collect()
        };
        out.push(DecoyAssignment {
            spectrum_id: cols[0].to_string(),
            true_compound_id: cols[1].to_string(),
            decoy_ids,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molecules::parse_smiles;

    fn corpus(rows: &[(&str, &str)]) -> CompoundCorpus {
        let recs = rows
            .iter()
            .map(|(id, smi)| CompoundRecord {
                id: id.to_string(),
                smiles: smi.to_string(),
                name: String::new(),
                graph: parse_smiles(smi).unwrap(),
            })
            .collect();
        CompoundCorpus::from_records(recs).unwrap()
    }

    #[test]
    fn picks_dissimilar_isomer() {
        let c = corpus(&[("ethanol", "CCO"), ("dme", "COC"), ("water", "O")]);
        let s = tanimoto(
            &c.get("ethanol").unwrap().fingerprint,
            &c.get("dme").unwrap().fingerprint,
        );
        assert!(s <= SIMILARITY_LIMIT, "{s}");
        assert_eq!(
            select_training_decoy("ethanol", &c).unwrap().as_deref(),
            Some("dme")
        );
    }

    #[test]
    fn similar_isomer_rejected() {
        let c = corpus(&[("propanol", "CCCO"), ("ipa", "CC(C)O")]);
        let s = tanimoto(
            &c.get("propanol").unwrap().fingerprint,
            &c.get("ipa").unwrap().fingerprint,
        );
        assert!(s > SIMILARITY_LIMIT, "{s}");
        assert_eq!(select_training_decoy("propanol", &c).unwrap(), None);
    }

    #[test]
    fn no_isomers() {
        let c = corpus(&[("water", "O"), ("methane", "C")]);
        assert_eq!(select_training_decoy("water", &c).unwrap(), None);
        let a = build_test_decoy_set("s1", "water", &c, TEST_DECOY_CAP).unwrap();
        assert!(a.decoy_ids.is_empty());
    }

    #[test]
    fn unknown_id() {
        let c = corpus(&[("water", "O")]);
        assert!(matches!(
            select_training_decoy("x", &c),
            Err(DecoyError::UnknownId(_))
        ));
    }

    #[test]
    fn duplicate_id() {
        let g = parse_smiles("O").unwrap();
        let rec = |id: &str| CompoundRecord {
            id: id.into(),
            smiles: "O".into(),
            name: String::new(),
            graph: g.clone(),
        };
        assert!(matches!(
            CompoundCorpus::from_records(vec![rec("a"), rec("a")]),
            Err(DecoyError::DuplicateId(_))
        ));
    }

    #[test]
    fn cap_respected() {
        let mut rows = vec![("target".to_string(), "CCCCCCCCO".to_string())];
        let isomers = [
            "CCCCCCCOC", "CCCCCCOCC", "CCCCCOCCC", "CCCCOCCCC", "CC(C)CCCCCO", "CC(C)(C)CCCCO", "CCC(C)(C)CCCO",
            "CC(C)OC(C)CCC", "CC(C)(C)OCCCC", "CC(C)CC(C)(C)CO", "COC(C)(C)C(C)(C)C", "CCC(C)(C)C(C)(C)O",
            "CC(C)(C)C(C)(C)CO", "CC(C)C(C)C(C)CO", "CCC(CC)(CC)CO", "CCC(CC)C(C)CO",
        ];
        for (i, s) in isomers.iter().enumerate() {
            rows.push((format!("iso{i:02}"), s.to_string()));
        }
        let refs: Vec<(&str, &str)> = rows.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let c = corpus(&refs);
        let all = c.ranked_isomers("target").unwrap();
        let a = build_test_decoy_set("s", "target", &c, TEST_DECOY_CAP).unwrap();
        assert_eq!(a.decoy_ids.len(), all.len().min(TEST_DECOY_CAP));
        assert!(all.len() > TEST_DECOY_CAP, "only {} qualify", all.len());
        let t = c.get("target").unwrap();
        for (w, id) in a.decoy_ids.windows(2).zip(&a.decoy_ids) {
            let s0 = tanimoto(&t.fingerprint, &c.get(&w[0]).unwrap().fingerprint);
            let s1 = tanimoto(&t.fingerprint, &c.get(&w[1]).unwrap().fingerprint);
            assert!(s0 <= s1);
            assert_eq!(c.get(id).unwrap().formula, t.formula);
        }
    }

    #[test]
    fn tsv_round_trip() {
        let rows = vec![
            DecoyAssignment {
                spectrum_id: "s1".into(),
                true_compound_id: "a".into(),
                decoy_ids: vec!["b".into(), "c".into()],
            },
            DecoyAssignment {
                spectrum_id: "s2".into(),
                true_compound_id: "d".into(),
                decoy_ids: vec![],
            },
        ];
        let text = assignments_tsv(&rows);
        assert_eq!(text, "s1\ta\tb,c\ns2\td\t\n");
        assert_eq!(parse_assignments(&text).unwrap(), rows);
        assert!(parse_assignments("a\tb\n").is_err());
    }
}
