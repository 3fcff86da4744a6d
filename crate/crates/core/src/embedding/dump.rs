//! Binary spectrum cache.
//!
//! Layout, all integers and floats little-endian:
//!
//! | offset | size   | content                      |
//! |--------|--------|------------------------------|
//! | 0      | 4      | magic `b"OSC1"`              |
//! | 4      | 4      | `d` as u32                   |
//! | 8      | 8 d    | `m_1 .. m_d` as u64          |
//! | ..     | 8 d    | `J_1 .. J_d` as u64          |
//! | ..     | 8      | `s` as u64                   |
//! | ..     | 8 s    | eigenvalues as f64           |

use std::io::{Read, Write};
use std::path::Path;

use super::{EmbeddingOperator, GridSpec};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"OSC1";

/// Spectrum of an embedding together with the grid and padding it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumDump {
    pub m: Vec<usize>,
    pub padding: Vec<usize>,
    pub eigenvalues: Vec<f64>,
}

impl SpectrumDump {
    /// Captures the untruncated spectrum of `op`.
    pub fn of(op: &EmbeddingOperator) -> Self {
        Self {
            m: op.grid().m().to_vec(),
            padding: op.padding().to_vec(),
            eigenvalues: op.full_spectrum().to_vec(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 16 * self.m.len() + 8 * self.eigenvalues.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.m.len() as u32).to_le_bytes());
        for &v in self.m.iter().chain(&self.padding) {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out.extend_from_slice(&(self.eigenvalues.len() as u64).to_le_bytes());
        for v in &self.eigenvalues {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |what: &str| Error::Config(format!("malformed spectrum dump: {what}"));
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf).map_err(|_| bad("truncated header"))?;
        let d = u32::from_le_bytes(u32buf) as usize;
        if !(1..=2).contains(&d) {
            return Err(bad("dimension out of range"));
        }
        let read_u64 = |r: &mut &[u8]| -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| bad("truncated header"))?;
            Ok(u64::from_le_bytes(b))
        };
        let m = (0..d).map(|_| read_u64(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let padding = (0..d).map(|_| read_u64(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let s = read_u64(&mut r)? as usize;
        let expect: usize = m.iter().zip(&padding).map(|(m, j)| 2 * (m + j)).product();
        if s != expect || r.len() != 8 * s {
            return Err(bad("size mismatch"));
        }
        let eigenvalues = r
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self { m, padding, eigenvalues })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Rebuilds the operator; `sigma2` is recovered from the trace identity.
    pub fn into_operator(self) -> Result<EmbeddingOperator> {
        let grid = GridSpec::new(&self.m)?;
        let s = self.eigenvalues.len() as f64;
        let sigma2 = self.eigenvalues.iter().sum::<f64>() / s;
        EmbeddingOperator::from_spectrum(grid, self.padding, self.eigenvalues, sigma2)
    }
}
