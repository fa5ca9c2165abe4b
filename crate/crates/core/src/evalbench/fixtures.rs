//! Readers for the transcribed benchmark tables under `fixtures/`.
//!
//! Every file starts with a `# key=value ...` line followed by a
//! tab-separated header. Percentages are kept as integer hundredths and
//! standard deviations as integer ten-thousandths.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{EvalError, RankDistribution, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RankRow {
    pub benchmark: String,
    pub distribution: RankDistribution,
    /// Printed top-1, top-2 and top-5 in hundredths of a percent.
    pub printed_topk: [i64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankTable {
    pub meta: BTreeMap<String, String>,
    pub rows: Vec<RankRow>,
}

impl RankTable {
    pub fn label(&self) -> String {
        let get = |k: &str| self.meta.get(k).map_or("?", String::as_str);
        format!("{} {} {}", get("table"), get("tool"), get("database"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyTable {
    pub meta: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub benchmarks: Vec<String>,
    /// `values[b][c]` in hundredths of a percent.
    pub values: Vec<Vec<i64>>,
    pub printed_mean: Option<Vec<i64>>,
    /// Ten-thousandths of a fraction.
    pub printed_sd: Option<Vec<i64>>,
}

impl AccuracyTable {
    /// Per-benchmark accuracies of one column, as fractions.
    pub fn column(&self, name: &str) -> Result<BTreeMap<String, f64>> {
        let c = self
            .columns
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| EvalError::KeyMismatch(name.to_string()))?;
        Ok(self
            .benchmarks
            .iter()
            .zip(&self.values)
            .map(|(b, row)| (b.clone(), row[c] as f64 / 10_000.0))
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WinrateTable {
    pub meta: BTreeMap<String, String>,
    pub columns: Vec<String>,
    /// (database, hundredths per column)
    pub rows: Vec<(String, Vec<i64>)>,
}

fn fail(line: usize, message: impl Into<String>) -> EvalError {
    EvalError::Fixture {
        line,
        message: message.into(),
    }
}

/// Parses a decimal like `95.08` into an integer scaled by `10^decimals`.
/// The number of fractional digits must match exactly.
pub(crate) fn parse_scaled(s: &str, decimals: u32) -> Option<i64> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.len() != decimals as usize
        || int.is_empty()
        || !int.bytes().all(|b| b.is_ascii_digit())
        || !frac.bytes().all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let i: i64 = int.parse().ok()?;
    let f: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    Some(i * 10i64.pow(decimals) + f)
}

struct Lines<'a> {
    meta: BTreeMap<String, String>,
    header: Vec<&'a str>,
    body: Vec<(usize, Vec<&'a str>)>,
}

fn split(text: &str) -> Result<Lines<'_>> {
    let mut meta = BTreeMap::new();
    let mut header = None;
    let mut body = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            for kv in rest.split_whitespace() {
                if let Some((k, v)) = kv.split_once('=') {
                    meta.insert(k.to_string(), v.to_string());
                }
            }
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        match &header {
            None => header = Some(cells),
            Some(h) => {
                if cells.len() != h.len() {
                    return Err(fail(
                        i + 1,
                        format!("{} cells, header has {}", cells.len(), h.len()),
                    ));
                }
                body.push((i + 1, cells));
            }
        }
    }
    let header = header.ok_or_else(|| fail(0, "missing header"))?;
    Ok(Lines { meta, header, body })
}

pub fn parse_rank_table(text: &str) -> Result<RankTable> {
    let l = split(text)?;
    let expected = [
        "benchmark", "total", "r1", "r2", "r3", "r4", "r5", "r6plus", "top1", "top2", "top5",
    ];
    if l.header != expected {
        return Err(fail(0, format!("unexpected header {:?}", l.header)));
    }
    let mut rows = Vec::new();
    for (line, cells) in l.body {
        let mut counts = [0u64; 7];
        for (slot, c) in counts.iter_mut().zip(&cells[1..8]) {
            *slot = c
                .parse()
                .map_err(|_| fail(line, format!("bad count {c:?}")))?;
        }
        let mut printed = [0i64; 3];
        for (slot, c) in printed.iter_mut().zip(&cells[8..11]) {
            *slot = parse_scaled(c, 2).ok_or_else(|| fail(line, format!("bad percentage {c:?}")))?;
        }
        let distribution = RankDistribution {
            total: counts[0],
            ranks: [counts[1], counts[2], counts[3], counts[4], counts[5]],
            r6plus: counts[6],
        };
        if !distribution.is_consistent() {
            return Err(fail(line, "rank counts do not sum to total"));
        }
        rows.push(RankRow {
            benchmark: cells[0].to_string(),
            distribution,
            printed_topk: printed,
        });
    }
    Ok(RankTable { meta: l.meta, rows })
}

pub fn parse_accuracy_table(text: &str) -> Result<AccuracyTable> {
    let l = split(text)?;
    if l.header.first() != Some(&"benchmark") || l.header.len() < 2 {
        return Err(fail(0, "header must start with `benchmark`"));
    }
    let columns: Vec<String> = l.header[1..].iter().map(|s| s.to_string()).collect();
    let mut t = AccuracyTable {
        meta: l.meta,
        columns,
        benchmarks: Vec::new(),
        values: Vec::new(),
        printed_mean: None,
        printed_sd: None,
    };
    for (line, cells) in l.body {
        let decimals = if cells[0] == "SD" { 4 } else { 2 };
        let vals = cells[1..]
            .iter()
            .map(|c| parse_scaled(c, decimals).ok_or_else(|| fail(line, format!("bad value {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        match cells[0] {
            "Mean" => t.printed_mean = Some(vals),
            "SD" => t.printed_sd = Some(vals),
            b => {
                t.benchmarks.push(b.to_string());
                t.values.push(vals);
            }
        }
    }
    Ok(t)
}

pub fn parse_winrate_table(text: &str) -> Result<WinrateTable> {
    let l = split(text)?;
    if l.header.first() != Some(&"database") {
        return Err(fail(0, "header must start with `database`"));
    }
    let mut rows = Vec::new();
    for (line, cells) in l.body {
        let vals = cells[1..]
            .iter()
            .map(|c| parse_scaled(c, 2).ok_or_else(|| fail(line, format!("bad value {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push((cells[0].to_string(), vals));
    }
    Ok(WinrateTable {
        meta: l.meta,
        columns: l.header[1..].iter().map(|s| s.to_string()).collect(),
        rows,
    })
}

/// Every `*.tsv` in `dir`, in file-name order.
pub fn load_rank_tables(dir: &Path) -> Result<Vec<RankTable>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            parse_rank_table(&fs::read_to_string(p)?).map_err(|e| EvalError::File {
                path: p.display().to_string(),
                source: Box::new(e),
            })
        })
        .collect()
}
