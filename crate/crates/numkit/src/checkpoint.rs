//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "MSGW" | u32 version | u32 section count
//! per section: u16 name length | UTF-8 name | u32 rank | rank × u32 dim | f64 values
//! ```

use std::fs;
use std::path::Path;

use crate::module::{named_tensors, Module};
use crate::tensor::Tensor;
use crate::{NumError, Result};

pub const MAGIC: &[u8; 4] = b"MSGW";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub sections: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_module<M: Module>(m: &M) -> Self {
        Self {
            sections: named_tensors(m)
                .into_iter()
                .map(|(n, t)| (n, t.clone()))
                .collect(),
        }
    }

    /// Copies every section into the matching tensor of `m`. Names and
    /// shapes must match exactly, with no sections left over.
    pub fn load_into<M: Module>(&self, m: &mut M) -> Result<()> {
        let expected: Vec<(String, Vec<usize>)> = named_tensors(m)
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        for (i, (name, shape)) in expected.iter().enumerate() {
            let Some((sname, t)) = self.sections.get(i) else {
                return Err(NumError::MissingSection(name.clone()));
            };
            if sname != name {
                return Err(NumError::MissingSection(name.clone()));
            }
            if t.shape() != shape.as_slice() {
                return Err(NumError::SectionShape {
                    name: name.clone(),
                    expected: shape.clone(),
                    found: t.shape().to_vec(),
                });
            }
        }
        if let Some((extra, _)) = self.sections.get(expected.len()) {
            return Err(NumError::UnexpectedSection(extra.clone()));
        }
        let mut idx = 0;
        m.visit_mut(&mut |t| {
            *t = self.sections[idx].1.clone();
            idx += 1;
        });
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, t) in &self.sections {
            let len = u16::try_from(name.len())
                .map_err(|_| NumError::InvalidArgument(format!("section name too long: {name}")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(NumError::BadMagic { expected: "MSGW" });
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(NumError::UnsupportedVersion(version));
        }
        let count = r.u32()?;
        let mut sections = Vec::new();
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| NumError::BadName)?
                .to_string();
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(8).ok_or(NumError::Truncated {
                offset: r.pos,
                needed: usize::MAX,
            })?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            sections.push((name, Tensor::new(shape, data)?));
        }
        Ok(Self { sections })
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
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(NumError::Truncated {
                offset: self.pos,
                needed: n - (self.bytes.len() - self.pos).min(n),
            });
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
