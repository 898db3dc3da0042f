//! Raw binary arrays.
//!
//! Layout: magic `RBA1`, one byte dtype (`1` = little-endian f64), one byte
//! rank, `rank` little-endian u64 extents, then the row-major payload.

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RBA1";
pub const DTYPE_F64: u8 = 1;
/// Largest accepted rank.
pub const MAX_RANK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Array {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n = element_count(&dims)?;
        if n != data.len() {
            return Err(Error::Format(format!(
                "shape {dims:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Array { dims, data })
    }

    /// Packs equally long rows into a 2D array.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Format("ragged rows".into()));
        }
        Array::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn rows(&self) -> Result<Vec<Vec<f64>>> {
        if self.dims.len() != 2 {
            return Err(Error::Format(format!("expected a 2D array, got shape {:?}", self.dims)));
        }
        if self.dims[1] == 0 {
            return Ok(vec![Vec::new(); self.dims[0]]);
        }
        Ok(self.data.chunks_exact(self.dims[1]).map(<[f64]>::to_vec).collect())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 8 * (self.dims.len() + self.data.len()));
        out.extend_from_slice(MAGIC);
        out.push(DTYPE_F64);
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 6 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing RBA1 magic".into()));
        }
        if bytes[4] != DTYPE_F64 {
            return Err(Error::Format(format!("unsupported dtype code {}", bytes[4])));
        }
        let rank = bytes[5] as usize;
        if rank > MAX_RANK {
            return Err(Error::Format(format!("rank {rank} exceeds {MAX_RANK}")));
        }
        let header = 6 + 8 * rank;
        if bytes.len() < header {
            return Err(Error::Format("truncated header".into()));
        }
        let dims = bytes[6..header]
            .chunks_exact(8)
            .map(|c| usize::try_from(u64::from_le_bytes(c.try_into().unwrap())))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Format("extent does not fit in memory".into()))?;
        let n = element_count(&dims)?;
        let payload = &bytes[header..];
        if n.checked_mul(8) != Some(payload.len()) {
            return Err(Error::Format(format!(
                "shape {dims:?} needs {} payload bytes, found {}",
                n.saturating_mul(8),
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Array { dims, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Array::decode(&std::fs::read(path)?)
    }
}

fn element_count(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(*d))
        .ok_or_else(|| Error::Format(format!("shape {dims:?} overflows")))
}
