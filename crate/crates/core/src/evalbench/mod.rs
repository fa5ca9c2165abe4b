//! Aggregation of per-spectrum ranks into benchmark tables: rank
//! distributions, top-k percentages, column means and standard deviations,
//! and pairwise win rates.
//!
//! Percentages are carried as integer hundredths wherever they are compared
//! against printed values, so rounding is exact.

mod fixtures;

pub use fixtures::{
    load_rank_tables, parse_accuracy_table, parse_rank_table, parse_winrate_table, AccuracyTable,
    RankRow, RankTable, WinrateTable,
};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("rank must be at least 1, got {0}")]
    InvalidRank(i64),
    #[error("top-k of an empty distribution")]
    EmptyDistribution,
    #[error("top-k is defined for k in 1..=5, got {0}")]
    UnsupportedK(usize),
    #[error("need at least {needed} values, got {found}")]
    TooFew { needed: usize, found: usize },
    #[error("benchmark sets differ at {0:?}")]
    KeyMismatch(String),
    #[error("row {row} has {found} cells, header has {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {message}")]
    Fixture { line: usize, message: String },
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: Box<EvalError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Counts of true-compound ranks 1 through 5 and beyond.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RankDistribution {
    pub total: u64,
    /// `ranks[i]` counts spectra whose true compound is at rank `i + 1`.
    pub ranks: [u64; 5],
    pub r6plus: u64,
}

impl RankDistribution {
    pub fn from_counts(ranks: [u64; 5], r6plus: u64) -> Self {
        Self {
            total: ranks.iter().sum::<u64>() + r6plus,
            ranks,
            r6plus,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.ranks.iter().sum::<u64>() + self.r6plus == self.total
    }
}

pub fn rank_distribution(ranks: &[i64]) -> Result<RankDistribution> {
    let mut d = RankDistribution::default();
    for &r in ranks {
        match r {
            i64::MIN..=0 => return Err(EvalError::InvalidRank(r)),
            1..=5 => d.ranks[r as usize - 1] += 1,
            _ => d.r6plus += 1,
        }
        d.total += 1;
    }
    Ok(d)
}

/// Half-up rounding of `100 * num / den` to integer hundredths.
pub fn percent_hundredths(num: u64, den: u64) -> i64 {
    assert!(den > 0);
    ((20_000 * num as u128 + den as u128) / (2 * den as u128)) as i64
}

pub fn topk_hundredths(d: &RankDistribution, k: usize) -> Result<i64> {
    if !(1..=5).contains(&k) {
        return Err(EvalError::UnsupportedK(k));
    }
    if d.total == 0 {
        return Err(EvalError::EmptyDistribution);
    }
    Ok(percent_hundredths(d.ranks[..k].iter().sum(), d.total))
}

pub fn topk_percent(d: &RankDistribution, k: usize) -> Result<f64> {
    Ok(topk_hundredths(d, k)? as f64 / 100.0)
}

/// `x` scaled by `10^decimals` and rounded half-up, as an integer.
pub fn round_half_up(x: f64, decimals: u32) -> i64 {
    let s = x * 10f64.powi(decimals as i32);
    // Scaled table values sit a few ulps off their exact decimal.
    (s + 0.5 + 1e-9 * s.abs().max(1.0)).floor() as i64
}

/// Renders a scaled integer with `decimals` digits after the point.
pub fn format_scaled(v: i64, decimals: u32) -> String {
    let p = 10i64.pow(decimals);
    let sign = if v < 0 { "-" } else { "" };
    let a = v.abs();
    if decimals == 0 {
        return format!("{sign}{a}");
    }
    format!("{sign}{}.{:0w$}", a / p, a % p, w = decimals as usize)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkSummary {
    pub values: BTreeMap<String, f64>,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub sd: f64,
}

pub fn summarize(values: &BTreeMap<String, f64>) -> Result<BenchmarkSummary> {
    let n = values.len();
    if n < 2 {
        return Err(EvalError::TooFew { needed: 2, found: n });
    }
    let rough = values.values().sum::<f64>() / n as f64;
    let mean = rough + values.values().map(|v| v - rough).sum::<f64>() / n as f64;
    let ss: f64 = values.values().map(|v| (v - mean).powi(2)).sum();
    Ok(BenchmarkSummary {
        values: values.clone(),
        mean,
        sd: (ss / (n - 1) as f64).sqrt(),
    })
}

/// Share of benchmarks, in hundredths of a percent, on which `a` is at
/// least as accurate as `b`. Ties count for `a`.
pub fn pairwise_winrate_hundredths(
    a: &BTreeMap<String, f64>,
    b: &BTreeMap<String, f64>,
) -> Result<i64> {
    if let Some(k) = a.keys().find(|k| !b.contains_key(*k)) {
        return Err(EvalError::KeyMismatch(k.clone()));
    }
    if let Some(k) = b.keys().find(|k| !a.contains_key(*k)) {
        return Err(EvalError::KeyMismatch(k.clone()));
    }
    if a.is_empty() {
        return Err(EvalError::TooFew { needed: 1, found: 0 });
    }
    let wins = a.iter().filter(|(k, v)| **v >= b[*k]).count();
    Ok(percent_hundredths(wins as u64, a.len() as u64))
}

pub fn pairwise_winrate(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> Result<f64> {
    Ok(pairwise_winrate_hundredths(a, b)? as f64 / 100.0)
}

pub const DISTRIBUTION_COLUMNS: [&str; 10] = [
    "total", "r1", "r2", "r3", "r4", "r5", "r6plus", "top1", "top2", "top5",
];

pub fn distribution_row(d: &RankDistribution) -> Result<Vec<String>> {
    let mut row = vec![d.total.to_string()];
    row.extend(d.ranks.iter().map(u64::to_string));
    row.push(d.r6plus.to_string());
    for k in [1, 2, 5] {
        row.push(format_scaled(topk_hundredths(d, k)?, 2));
    }
    Ok(row)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_tsv(&self) -> Result<String> {
        let mut out = self.header.join("\t");
        out.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != self.header.len() {
                return Err(EvalError::Ragged {
                    row: i,
                    expected: self.header.len(),
                    found: r.len(),
                });
            }
            out.push_str(&r.join("\t"));
            out.push('\n');
        }
        Ok(out)
    }
}

pub fn emit_table(table: &Table, path: &Path) -> Result<()> {
    fs::write(path, table.to_tsv()?)?;
    Ok(())
}

/// Win rates of `reference` against every other column of both accuracy
/// tables, one row per table.
pub fn winrate_table(reference: &str, tables: &[(&str, &AccuracyTable)]) -> Result<Table> {
    let Some((_, first)) = tables.first() else {
        return Ok(Table::new(["database"]));
    };
    let others: Vec<&String> = first.columns.iter().filter(|c| *c != reference).collect();
    let mut t = Table::new(std::iter::once("database".to_string()).chain(others.iter().map(|c| c.to_string())));
    for (name, table) in tables {
        let r = table.column(reference)?;
        let mut row = vec![name.to_string()];
        for c in &others {
            row.push(format_scaled(pairwise_winrate_hundredths(&r, &table.column(c)?)?, 2));
        }
        t.rows.push(row);
    }
    Ok(t)
}

/// Mean (percent, 2 decimals) and SD (fraction, 4 decimals) per column.
pub fn summary_table(table: &AccuracyTable) -> Result<Table> {
    let mut t = Table::new(std::iter::once("statistic".to_string()).chain(table.columns.iter().cloned()));
    let mut means = vec!["Mean".to_string()];
    let mut sds = vec!["SD".to_string()];
    for c in &table.columns {
        let s = summarize(&table.column(c)?)?;
        means.push(format_scaled(round_half_up(s.mean * 100.0, 2), 2));
        sds.push(format_scaled(round_half_up(s.sd, 4), 4));
    }
    t.rows.push(means);
    t.rows.push(sds);
    Ok(t)
}
