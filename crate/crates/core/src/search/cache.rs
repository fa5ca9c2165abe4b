//! Pre-encoded structure latents on disk.
//!
//! ```text
//! "LMSM" | u32 version | u32 dim | u64 count
//! per entry: u16 id length | UTF-8 id | dim × f32
//! ```
//!
//! All integers and reals are little-endian. Entries are written in id
//! order, so identical caches serialize to identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{Result, SearchError};

pub const CACHE_MAGIC: &[u8; 4] = b"LMSM";
pub const CACHE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct LatentCache {
    dim: usize,
    entries: BTreeMap<String, Vec<f32>>,
}

impl LatentCache {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(SearchError::ZeroDim);
        }
        Ok(Self {
            dim,
            entries: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stores `values` narrowed to 32 bits, replacing any previous entry.
    pub fn insert(&mut self, id: &str, values: &[f64]) -> Result<()> {
        if values.len() != self.dim {
            return Err(SearchError::DimMismatch {
                expected: self.dim,
                found: values.len(),
            });
        }
        if id.len() > u16::MAX as usize {
            return Err(SearchError::IdTooLong(id.len()));
        }
        let narrowed: Vec<f32> = values.iter().map(|&v| v as f32).collect();
        if narrowed.iter().any(|v| !v.is_finite()) {
            return Err(SearchError::NonFinite(id.to_string()));
        }
        self.entries.insert(id.to_string(), narrowed);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.entries.get(id).map(Vec::as_slice)
    }

    /// Widened copy of an entry.
    pub fn get_f64(&self, id: &str) -> Option<Vec<f64>> {
        self.get(id).map(|v| v.iter().map(|&x| f64::from(x)).collect())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn merge(&mut self, other: &LatentCache) -> Result<()> {
        if other.dim != self.dim {
            return Err(SearchError::DimMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(20 + self.entries.len() * (8 + 4 * self.dim));
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for (id, v) in &self.entries {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(SearchError::NonFinite(id.clone()));
            }
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CACHE_MAGIC {
            return Err(SearchError::BadMagic);
        }
        let version = u32::from_le_bytes(r.array()?);
        if version != CACHE_VERSION {
            return Err(SearchError::UnsupportedVersion(version));
        }
        let dim = u32::from_le_bytes(r.array()?) as usize;
        let mut cache = Self::new(dim)?;
        let count = u64::from_le_bytes(r.array()?);
        for _ in 0..count {
            let len = u16::from_le_bytes(r.array()?) as usize;
            let id = std::str::from_utf8(r.take(len)?)
                .map_err(|_| SearchError::BadId)?
                .to_string();
            let mut v = Vec::with_capacity(dim);
            for _ in 0..dim {
                let x = f32::from_le_bytes(r.array()?);
                if !x.is_finite() {
                    return Err(SearchError::NonFinite(id));
                }
                v.push(x);
            }
            if cache.entries.insert(id.clone(), v).is_some() {
                return Err(SearchError::DuplicateEntry(id));
            }
        }
        if r.pos != bytes.len() {
            return Err(SearchError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(cache)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(SearchError::Truncated {
                offset: self.pos,
                needed: end - self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}
