//! Randomness extractors: output-length accounting, Toeplitz hashing and
//! Trevisan's construction, plus blockwise application to sample streams.
//!
//! Conventions shared by every extractor here:
//! - bit strings are packed MSB-first (see [`crate::bits`]);
//! - raw samples become bits code by code, most significant bit first;
//! - a long stream is cut into consecutive `n`-bit blocks that are all
//!   hashed with the same seed.

mod design;
mod gf2w;
mod seed_file;
mod small_field;
mod stream;
mod toeplitz;
mod trevisan;

pub use design::{weak_design, WeakDesign, BASIC_DESIGN_RHO};
pub use gf2w::{Gf2w, SUPPORTED_WIDTHS};
pub use seed_file::{SeedFile, SEED_MAGIC};
pub use small_field::{prime_power, SmallField};
pub use stream::{
    demo_seed, extract_bits, stream_extract, Algorithm, ExtractionMetadata, Extractor,
    StreamOutput,
};
pub use toeplitz::{toeplitz_extract, ToeplitzExtractor, ToeplitzSeed};
pub use trevisan::{
    one_bit_error, trevisan_error_bound, trevisan_extract, trevisan_output_length,
    TrevisanExtractor, TrevisanParams, TrevisanSeed,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Security parameter matching a 200-bit leftover-hash penalty.
pub const DEFAULT_EPSILON: f64 = 7.888609052210118e-31; // 2^-100

#[derive(Debug, Error, PartialEq)]
pub enum ExtractError {
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("entropy deficit: k = {k} bits leaves no output after a {penalty}-bit security penalty")]
    EntropyDeficit { k: usize, penalty: usize },
    #[error("design has {sets} sets but {needed} output bits were requested")]
    DesignMismatch { sets: usize, needed: usize },
    #[error("unsupported field size {0}")]
    InvalidFieldSize(usize),
    #[error("invalid extractor parameters: {0}")]
    InvalidParams(String),
    #[error("input has {got} bits, fewer than one {needed}-bit block")]
    InsufficientInput { needed: usize, got: usize },
    #[error("seed file: {0}")]
    SeedFormat(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for ExtractError {
    fn from(e: std::io::Error) -> Self {
        ExtractError::Io(e.to_string())
    }
}

/// Sizes of one extraction `{0,1}^n x {0,1}^d -> {0,1}^m` applied to a
/// source with `k` bits of min-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractorParams {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub epsilon: f64,
    pub d: usize,
}

impl ExtractorParams {
    /// Toeplitz sizing for explicit `n` and `m` (`k` set to `n`, `epsilon`
    /// to 1). Useful for benchmarks and tests that do not need the
    /// security accounting.
    pub fn toeplitz(n: usize, m: usize) -> Result<Self, ExtractError> {
        if n == 0 || m == 0 || m > n {
            return Err(ExtractError::InvalidParams(format!("need 0 < m <= n, got n={n} m={m}")));
        }
        Ok(Self {
            n,
            k: n,
            m,
            epsilon: 1.0,
            d: n + m - 1,
        })
    }
}

/// `ceil(2 * log2(1 / epsilon))`.
pub fn leftover_hash_penalty(epsilon: f64) -> usize {
    (2.0 * -epsilon.log2()).ceil().max(0.0) as usize
}

/// Leftover-hash sizing: `k = floor(n * h_min_rate)`,
/// `m = k - ceil(2 log2(1/epsilon))`, `d = n + m - 1`.
pub fn output_length(n: usize, h_min_rate: f64, epsilon: f64) -> Result<ExtractorParams, ExtractError> {
    if n == 0 {
        return Err(ExtractError::InvalidParams("n must be positive".into()));
    }
    if !(h_min_rate > 0.0 && h_min_rate <= 1.0) {
        return Err(ExtractError::InvalidParams(format!(
            "min-entropy rate must lie in (0, 1], got {h_min_rate}"
        )));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(ExtractError::InvalidParams(format!(
            "epsilon must lie in (0, 1], got {epsilon}"
        )));
    }
    let k = (n as f64 * h_min_rate).floor() as usize;
    let penalty = leftover_hash_penalty(epsilon);
    if k <= penalty {
        return Err(ExtractError::EntropyDeficit { k, penalty });
    }
    let m = k - penalty;
    Ok(ExtractorParams {
        n,
        k,
        m,
        epsilon,
        d: n + m - 1,
    })
}
