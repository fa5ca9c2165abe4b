use super::{Peak, SpectraError, Spectrum};

fn parse_err(line: usize, message: impl Into<String>) -> SpectraError {
    SpectraError::Parse {
        line,
        message: message.into(),
    }
}

struct Block {
    start: usize,
    title: Option<String>,
    compound: Option<String>,
    precursor: Option<f64>,
    peaks: Vec<Peak>,
}

impl Block {
    fn finish(self, end_line: usize, index: usize) -> Result<Spectrum, SpectraError> {
        let precursor_mz = self
            .precursor
            .ok_or_else(|| parse_err(end_line, format!("block starting at line {} has no PEPMASS", self.start)))?;
        let id = self.title.unwrap_or_else(|| format!("spectrum-{index}"));
        Ok(Spectrum {
            compound_id: self.compound.unwrap_or_else(|| id.clone()),
            id,
            precursor_mz,
            peaks: self.peaks,
        })
    }
}

fn parse_number(token: &str, line: usize, what: &str) -> Result<f64, SpectraError> {
    token
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_err(line, format!("invalid {what} {token:?}")))
}

/// Parses MGF text. Line numbers in errors are 1-based.
///
/// A block without `TITLE=` gets id `spectrum-<n>` (n counts blocks from 0);
/// a block without `COMPOUND=` uses its id as compound id. Header lines
/// outside blocks and unknown headers inside blocks are ignored.
pub fn parse_mgf(text: &str) -> Result<Vec<Spectrum>, SpectraError> {
    let mut out = Vec::new();
    let mut current: Option<Block> = None;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.eq_ignore_ascii_case("BEGIN IONS") {
            if let Some(b) = &current {
                return Err(SpectraError::Unterminated { line: b.start });
            }
            current = Some(Block {
                start: lineno,
                title: None,
                compound: None,
                precursor: None,
                peaks: Vec::new(),
            });
            continue;
        }
        if line.eq_ignore_ascii_case("END IONS") {
            let block = current
                .take()
                .ok_or_else(|| parse_err(lineno, "END IONS without BEGIN IONS"))?;
            out.push(block.finish(lineno, out.len())?);
            continue;
        }
        let Some(block) = current.as_mut() else {
            continue;
        };
        if let Some((key, value)) = line.split_once('=') {
            let value = value.trim();
            match key.trim().to_ascii_uppercase().as_str() {
                "TITLE" => block.title = Some(value.to_string()),
                "COMPOUND" => block.compound = Some(value.to_string()),
                "PEPMASS" => {
                    let first = value.split_whitespace().next().unwrap_or("");
                    let mz = parse_number(first, lineno, "PEPMASS")?;
                    if mz <= 0.0 {
                        return Err(parse_err(lineno, "PEPMASS must be positive"));
                    }
                    block.precursor = Some(mz);
                }
                _ => {}
            }
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(parse_err(lineno, format!("expected `mz intensity`, got {line:?}")));
        }
        let mz = parse_number(tokens[0], lineno, "m/z")?;
        let intensity = parse_number(tokens[1], lineno, "intensity")?;
        if mz <= 0.0 || intensity < 0.0 {
            return Err(parse_err(lineno, "peaks need mz > 0 and intensity >= 0"));
        }
        block.peaks.push(Peak { mz, intensity });
    }
    match current {
        Some(b) => Err(SpectraError::Unterminated { line: b.start }),
        None => Ok(out),
    }
}

/// Renders spectra as MGF. Reals use the shortest representation that
/// parses back to the same value.
pub fn write_mgf(spectra: &[Spectrum]) -> String {
    let mut out = String::new();
    for s in spectra {
        out.push_str("BEGIN IONS\n");
        out.push_str(&format!("TITLE={}\nCOMPOUND={}\nPEPMASS={}\n", s.id, s.compound_id, s.precursor_mz));
        for p in &s.peaks {
            out.push_str(&format!("{} {}\n", p.mz, p.intensity));
        }
        out.push_str("END IONS\n");
    }
    out
}
