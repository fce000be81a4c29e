//! Extractor seed files.
//!
//! Layout: magic `QRNGSEED`, one algorithm tag byte (0 Toeplitz,
//! 1 Trevisan), `n`, `m`, `d` as 8-byte little-endian integers, then the
//! `d` seed bits packed MSB-first with the last byte zero-padded.

use std::io::{Read, Write};
use std::path::Path;

use super::{Algorithm, ExtractError, TrevisanParams};
use crate::bits::BitString;

pub const SEED_MAGIC: &[u8; 8] = b"QRNGSEED";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedFile {
    pub algorithm: Algorithm,
    pub n: usize,
    pub m: usize,
    pub seed: BitString,
}

impl SeedFile {
    pub fn new(algorithm: Algorithm, n: usize, m: usize, seed: BitString) -> Result<Self, ExtractError> {
        let file = Self { algorithm, n, m, seed };
        file.validate()?;
        Ok(file)
    }

    pub fn d(&self) -> usize {
        self.seed.len()
    }

    pub fn validate(&self) -> Result<(), ExtractError> {
        if self.n == 0 || self.m == 0 {
            return Err(ExtractError::SeedFormat("n and m must be positive".into()));
        }
        match self.algorithm {
            Algorithm::Toeplitz => {
                if self.m > self.n {
                    return Err(ExtractError::SeedFormat(format!("m = {} exceeds n = {}", self.m, self.n)));
                }
                if self.d() != self.n + self.m - 1 {
                    return Err(ExtractError::SeedFormat(format!(
                        "toeplitz seed must have n + m - 1 = {} bits, found {}",
                        self.n + self.m - 1,
                        self.d()
                    )));
                }
            }
            Algorithm::Trevisan => {
                TrevisanParams::width_for_seed_len(self.d())
                    .map_err(|e| ExtractError::SeedFormat(e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ExtractError> {
        w.write_all(SEED_MAGIC)?;
        w.write_all(&[match self.algorithm {
            Algorithm::Toeplitz => 0,
            Algorithm::Trevisan => 1,
        }])?;
        for v in [self.n, self.m, self.d()] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&self.seed.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, ExtractError> {
        let mut header = [0u8; 33];
        r.read_exact(&mut header)
            .map_err(|_| ExtractError::SeedFormat("truncated header".into()))?;
        if &header[..8] != SEED_MAGIC {
            return Err(ExtractError::SeedFormat("bad magic".into()));
        }
        let algorithm = match header[8] {
            0 => Algorithm::Toeplitz,
            1 => Algorithm::Trevisan,
            t => return Err(ExtractError::SeedFormat(format!("unknown algorithm tag {t}"))),
        };
        let field = |i: usize| {
            let v = u64::from_le_bytes(header[9 + 8 * i..17 + 8 * i].try_into().unwrap());
            usize::try_from(v).map_err(|_| ExtractError::SeedFormat("size overflow".into()))
        };
        let (n, m, d) = (field(0)?, field(1)?, field(2)?);
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() != d.div_ceil(8) {
            return Err(ExtractError::SeedFormat(format!(
                "expected {} seed bytes, found {}",
                d.div_ceil(8),
                body.len()
            )));
        }
        Self::new(algorithm, n, m, BitString::from_bytes(&body, d))
    }

    pub fn save(&self, path: &Path) -> Result<(), ExtractError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ExtractError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
