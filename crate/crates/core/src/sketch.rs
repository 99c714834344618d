//! The `t x k` counter matrix: one row per hash function, one counter per cell.
//!
//! Every arrival increments exactly one counter in each row, so each row is
//! the stream's histogram aggregated over the partition its hash induces.

use std::io::{Read, Write};

use thiserror::Error;

use crate::hashing::{HashError, HashFamily, ItemId};
use crate::histogram::ProbabilityVector;
use crate::scalar::Real;

/// File magic of the binary sketch format.
pub const SKETCH_MAGIC: [u8; 4] = *b"SKMX";
pub const SKETCH_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SketchError {
    #[error("sketches were built with different hash families ({left:016x} vs {right:016x})")]
    FamilyMismatch { left: u64, right: u64 },
    #[error("sketch is empty")]
    Empty,
    #[error("counter overflow after 2^64 - 1 arrivals")]
    Overflow,
    #[error("row {row} out of range for t = {t}")]
    RowOutOfRange { row: usize, t: usize },
    #[error("sketch file: {0}")]
    Format(String),
    #[error(transparent)]
    Hash(#[from] HashError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SketchMatrix {
    family: HashFamily,
    fingerprint: u64,
    counters: Vec<u64>,
    total: u64,
}

impl SketchMatrix {
    pub fn new(family: HashFamily) -> Self {
        let fingerprint = family.fingerprint();
        let counters = vec![0; family.t() * family.k()];
        Self { family, fingerprint, counters, total: 0 }
    }

    /// Sketches a whole stream in one pass.
    pub fn from_stream<I: IntoIterator<Item = ItemId>>(family: HashFamily, items: I) -> Result<Self, SketchError> {
        let mut s = Self::new(family);
        s.extend(items)?;
        Ok(s)
    }

    #[inline]
    pub fn update(&mut self, item: ItemId) -> Result<(), SketchError> {
        self.total = self.total.checked_add(1).ok_or(SketchError::Overflow)?;
        let k = self.family.k();
        // Each counter is bounded by `total`, so none of these can overflow.
        for (row, h) in self.counters.chunks_exact_mut(k).zip(self.family.functions()) {
            row[h.evaluate(item)] += 1;
        }
        Ok(())
    }

    pub fn extend<I: IntoIterator<Item = ItemId>>(&mut self, items: I) -> Result<(), SketchError> {
        items.into_iter().try_for_each(|v| self.update(v))
    }

    /// Cellwise sum; equals the sketch of the concatenated streams.
    pub fn merge(&self, other: &Self) -> Result<Self, SketchError> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }

    pub fn merge_from(&mut self, other: &Self) -> Result<(), SketchError> {
        self.check_compatible(other)?;
        self.total = self.total.checked_add(other.total).ok_or(SketchError::Overflow)?;
        for (a, b) in self.counters.iter_mut().zip(&other.counters) {
            *a += b;
        }
        Ok(())
    }

    pub fn check_compatible(&self, other: &Self) -> Result<(), SketchError> {
        if self.fingerprint != other.fingerprint || self.family != other.family {
            return Err(SketchError::FamilyMismatch { left: self.fingerprint, right: other.fingerprint });
        }
        Ok(())
    }

    pub fn family(&self) -> &HashFamily {
        &self.family
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn t(&self) -> usize {
        self.family.t()
    }

    pub fn k(&self) -> usize {
        self.family.k()
    }

    /// Number of items absorbed.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn row(&self, i: usize) -> Result<&[u64], SketchError> {
        let k = self.k();
        self.counters.get(i * k..(i + 1) * k).ok_or(SketchError::RowOutOfRange { row: i, t: self.t() })
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counters.chunks_exact(self.k())
    }

    /// Row `i` divided by the stream length.
    pub fn row_distribution<T: Real>(&self, i: usize) -> Result<ProbabilityVector<T>, SketchError> {
        if self.total == 0 {
            return Err(SketchError::Empty);
        }
        Ok(ProbabilityVector::from_counts(self.row(i)?, self.total))
    }

    /// Size in bytes of [`SketchMatrix::write_to`] output.
    pub fn serialized_len(&self) -> usize {
        4 + 4 + 4 + self.family.to_text().len() + 4 + 4 + 8 + 8 * self.counters.len()
    }

    /// Little-endian binary: magic, version, family text (length-prefixed), `t`, `k`, total,
    /// then the counters row by row.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), SketchError> {
        let family = self.family.to_text();
        w.write_all(&SKETCH_MAGIC)?;
        w.write_all(&SKETCH_VERSION.to_le_bytes())?;
        w.write_all(&(family.len() as u32).to_le_bytes())?;
        w.write_all(family.as_bytes())?;
        w.write_all(&(self.t() as u32).to_le_bytes())?;
        w.write_all(&(self.k() as u32).to_le_bytes())?;
        w.write_all(&self.total.to_le_bytes())?;
        for c in &self.counters {
            w.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, SketchError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != SKETCH_MAGIC {
            return Err(SketchError::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != SKETCH_VERSION {
            return Err(SketchError::Format(format!("unsupported version {version}")));
        }
        let len = read_u32(&mut r)? as usize;
        let mut text = vec![0u8; len];
        r.read_exact(&mut text)?;
        let text = String::from_utf8(text).map_err(|e| SketchError::Format(e.to_string()))?;
        let family = HashFamily::from_text(&text)?;
        let (t, k) = (read_u32(&mut r)? as usize, read_u32(&mut r)? as usize);
        if t != family.t() || k != family.k() {
            return Err(SketchError::Format(format!("dimensions {t}x{k} disagree with family {family}")));
        }
        let total = read_u64(&mut r)?;
        let mut s = Self::new(family);
        for c in s.counters.iter_mut() {
            *c = read_u64(&mut r)?;
        }
        s.total = total;
        if s.rows().any(|row| row.iter().sum::<u64>() != total) {
            return Err(SketchError::Format("a row does not sum to the stream length".into()));
        }
        Ok(s)
    }
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
