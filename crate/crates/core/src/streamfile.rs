//! Binary stream files shared by `generate` and `ingest`.
//!
//! Layout, little-endian: magic `SKST`, `u32` version, `u64` universe size,
//! `u64` item count, `u32` descriptor length and UTF-8 descriptor, then one
//! `u64` per item.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::hashing::ItemId;

pub const STREAM_MAGIC: [u8; 4] = *b"SKST";
pub const STREAM_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StreamFileError {
    #[error("stream file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamFile {
    /// Universe size for synthetic streams, distinct-item count for ingested ones.
    pub universe: u64,
    /// Free-form provenance, e.g. `zipf(alpha=1) seed=7`.
    pub descriptor: String,
    pub items: Vec<ItemId>,
}

impl StreamFile {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), StreamFileError> {
        w.write_all(&STREAM_MAGIC)?;
        w.write_all(&STREAM_VERSION.to_le_bytes())?;
        w.write_all(&self.universe.to_le_bytes())?;
        w.write_all(&(self.items.len() as u64).to_le_bytes())?;
        w.write_all(&(self.descriptor.len() as u32).to_le_bytes())?;
        w.write_all(self.descriptor.as_bytes())?;
        for item in &self.items {
            w.write_all(&item.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, StreamFileError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != STREAM_MAGIC {
            return Err(StreamFileError::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != STREAM_VERSION {
            return Err(StreamFileError::Format(format!("unsupported version {version}")));
        }
        r.read_exact(&mut b8)?;
        let universe = u64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let m = u64::from_le_bytes(b8);
        r.read_exact(&mut b4)?;
        let mut desc = vec![0u8; u32::from_le_bytes(b4) as usize];
        r.read_exact(&mut desc)?;
        let descriptor = String::from_utf8(desc).map_err(|e| StreamFileError::Format(e.to_string()))?;
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        if raw.len() as u64 != m * 8 {
            return Err(StreamFileError::Format(format!("header declares {m} items, body holds {} bytes", raw.len())));
        }
        let items = raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
        Ok(Self { universe, descriptor, items })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StreamFileError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StreamFileError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
