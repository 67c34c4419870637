//! MAT1 binary grid dumps: `b"MAT1"`, then little-endian `u32` n, grid and
//! entries-per-point, then the row-major `f64` values (point-major, entries
//! innermost).

use std::io::{self, Read, Write};
use std::sync::Arc;

use kahlerlab_core::{ScalarField, Torus};

use crate::error::CliError;

pub const MAGIC: &[u8; 4] = b"MAT1";

#[derive(Clone, Debug, PartialEq)]
pub struct Mat1 {
    pub n: u32,
    pub grid: u32,
    pub entries: u32,
    pub values: Vec<f64>,
}

impl Mat1 {
    pub fn point_count(&self) -> usize {
        (self.grid as usize).pow(2 * self.n)
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.n, self.grid, self.entries] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, CliError> {
        let bad = |m: &str| CliError::Config(format!("MAT1: {m}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic bytes"));
        }
        let mut word = [0u8; 4];
        let mut header = [0u32; 3];
        for h in header.iter_mut() {
            r.read_exact(&mut word).map_err(|_| bad("truncated header"))?;
            *h = u32::from_le_bytes(word);
        }
        let [n, grid, entries] = header;
        if !(1..=3).contains(&n) || grid == 0 || entries == 0 {
            return Err(bad(&format!("invalid header n={n} grid={grid} entries={entries}")));
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let expected = (grid as usize)
            .checked_pow(2 * n)
            .and_then(|p| p.checked_mul(entries as usize))
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| bad("size overflow"))?;
        if bytes.len() != expected {
            return Err(bad(&format!("expected {expected} payload bytes, found {}", bytes.len())));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { n, grid, entries, values })
    }

    pub fn from_field(field: &ScalarField) -> Result<Self, CliError> {
        let t = field.torus();
        Ok(Self {
            n: t.n() as u32,
            grid: t.grid() as u32,
            entries: 1,
            values: field.grid_values()?,
        })
    }

    pub fn to_field(&self, torus: &Arc<Torus>) -> Result<ScalarField, CliError> {
        if self.n as usize != torus.n() || self.grid as usize != torus.grid() || self.entries != 1 {
            return Err(CliError::Config(format!(
                "MAT1 field (n={}, grid={}, entries={}) does not match geometry (n={}, grid={})",
                self.n,
                self.grid,
                self.entries,
                torus.n(),
                torus.grid()
            )));
        }
        Ok(ScalarField::from_grid(torus, self.values.clone())?)
    }
}
