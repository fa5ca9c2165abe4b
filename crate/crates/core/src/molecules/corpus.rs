use super::{parse_smiles, MolError, MolGraph};

#[derive(Clone, Debug, PartialEq)]
pub struct CompoundRecord {
    pub id: String,
    pub smiles: String,
    pub name: String,
    pub graph: MolGraph,
}

/// Reads `id<TAB>smiles<TAB>name` lines; the name column is optional.
pub fn parse_corpus(text: &str) -> Result<Vec<CompoundRecord>, MolError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 2 || cols.len() > 3 || cols[0].is_empty() {
            return Err(MolError::Corpus {
                line: lineno,
                message: "expected `id<TAB>smiles<TAB>name`".into(),
            });
        }
        let graph = parse_smiles(cols[1]).map_err(|e| MolError::Corpus {
            line: lineno,
            message: e.to_string(),
        })?;
        out.push(CompoundRecord {
            id: cols[0].to_string(),
            smiles: cols[1].to_string(),
            name: cols.get(2).unwrap_or(&"").to_string(),
            graph: graph.with_id(cols[0]),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_records() {
        let c = parse_corpus("# header\nm1\tCCO\tethanol\n\nm2\tO\n").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].name, "ethanol");
        assert_eq!(c[0].graph.id, "m1");
        assert_eq!(c[1].name, "");
    }

    #[test]
    fn reports_bad_lines() {
        assert!(matches!(
            parse_corpus("m1 CCO\n"),
            Err(MolError::Corpus { line: 1, .. })
        ));
        assert!(matches!(
            parse_corpus("\nm1\tC1CC\tx\n"),
            Err(MolError::Corpus { line: 2, .. })
        ));
    }
}
