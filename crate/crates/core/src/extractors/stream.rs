//! Blockwise extraction over long bit streams with a reused seed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    ExtractError, ExtractorParams, SeedFile, ToeplitzExtractor, ToeplitzSeed, TrevisanExtractor,
    TrevisanParams, TrevisanSeed,
};
use crate::bits::BitString;
use crate::source_sim::RawSampleStream;

pub const SEED_REUSE_NOTE: &str = "one seed is reused for every block; the total distance from \
uniform is bounded by blocks * epsilon";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Toeplitz,
    Trevisan,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Toeplitz => "toeplitz",
            Algorithm::Trevisan => "trevisan",
        })
    }
}

#[derive(Debug, Clone)]
enum Engine {
    Toeplitz(ToeplitzExtractor),
    Trevisan(TrevisanExtractor),
}

/// A ready-to-use extractor with its sizing and seed fingerprint.
#[derive(Debug, Clone)]
pub struct Extractor {
    engine: Engine,
    seed_sha256: String,
}

impl Extractor {
    pub fn toeplitz(params: &ExtractorParams, seed: BitString) -> Result<Self, ExtractError> {
        let seed_sha256 = fingerprint(&seed);
        let seed = ToeplitzSeed::new(seed, params)?;
        Ok(Self {
            engine: Engine::Toeplitz(ToeplitzExtractor::new(&seed, params)?),
            seed_sha256,
        })
    }

    pub fn trevisan(params: &TrevisanParams, seed: BitString) -> Result<Self, ExtractError> {
        let seed_sha256 = fingerprint(&seed);
        let seed = TrevisanSeed::new(seed, params)?;
        Ok(Self {
            engine: Engine::Trevisan(TrevisanExtractor::new(&seed, params)?),
            seed_sha256,
        })
    }

    /// Builds the extractor stored in a seed file for a source with `k` bits
    /// of min-entropy per block. For Toeplitz hashing the reported epsilon
    /// is `2^(-(k-m)/2)`, capped at 1.
    pub fn from_seed_file(file: &SeedFile, k: usize) -> Result<Self, ExtractError> {
        file.validate()?;
        match file.algorithm {
            Algorithm::Toeplitz => {
                let epsilon = (-((k as f64 - file.m as f64) / 2.0)).exp2().min(1.0);
                let params = ExtractorParams {
                    n: file.n,
                    k,
                    m: file.m,
                    epsilon,
                    d: file.d(),
                };
                Self::toeplitz(&params, file.seed.clone())
            }
            Algorithm::Trevisan => {
                let w = TrevisanParams::width_for_seed_len(file.d())?;
                let params = TrevisanParams::for_sizes(file.n, k, file.m, w)?;
                Self::trevisan(&params, file.seed.clone())
            }
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self.engine {
            Engine::Toeplitz(_) => Algorithm::Toeplitz,
            Engine::Trevisan(_) => Algorithm::Trevisan,
        }
    }

    pub fn params(&self) -> ExtractorParams {
        match &self.engine {
            Engine::Toeplitz(e) => *e.params(),
            Engine::Trevisan(e) => e.params().base,
        }
    }

    pub fn seed_sha256(&self) -> &str {
        &self.seed_sha256
    }

    pub fn extract_block(&self, block: &BitString) -> Result<BitString, ExtractError> {
        match &self.engine {
            Engine::Toeplitz(e) => e.extract(block),
            Engine::Trevisan(e) => e.extract(block),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionMetadata {
    pub algorithm: Algorithm,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub d: usize,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub field_bits: Option<u32>,
    pub seed_sha256: String,
    pub input_bits: usize,
    pub blocks: usize,
    pub discarded_bits: usize,
    pub output_bits: usize,
    /// `blocks * epsilon`, capped at 1.
    pub epsilon_total: f64,
    pub seed_reuse: String,
}

#[derive(Debug, Clone)]
pub struct StreamOutput {
    pub bits: BitString,
    pub metadata: ExtractionMetadata,
}

/// Hashes every full `n`-bit block of `bits` with the same seed and
/// concatenates the outputs in block order.
pub fn extract_bits(bits: &BitString, extractor: &Extractor) -> Result<StreamOutput, ExtractError> {
    let params = extractor.params();
    let n = params.n;
    let blocks = bits.len() / n;
    if blocks == 0 {
        return Err(ExtractError::InsufficientInput {
            needed: n,
            got: bits.len(),
        });
    }
    let outputs = (0..blocks)
        .into_par_iter()
        .map(|b| extractor.extract_block(&bits.slice(b * n, n)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = BitString::zeros(0);
    for o in &outputs {
        out.extend_from(o);
    }
    let metadata = ExtractionMetadata {
        algorithm: extractor.algorithm(),
        n,
        k: params.k,
        m: params.m,
        d: params.d,
        epsilon: params.epsilon,
        field_bits: match &extractor.engine {
            Engine::Trevisan(e) => Some(e.params().field_bits),
            Engine::Toeplitz(_) => None,
        },
        seed_sha256: extractor.seed_sha256.clone(),
        input_bits: bits.len(),
        blocks,
        discarded_bits: bits.len() - blocks * n,
        output_bits: out.len(),
        epsilon_total: (blocks as f64 * params.epsilon).min(1.0),
        seed_reuse: SEED_REUSE_NOTE.to_string(),
    };
    Ok(StreamOutput { bits: out, metadata })
}

/// [`extract_bits`] on the MSB-first bit image of a raw sample stream.
pub fn stream_extract(raw: &RawSampleStream, extractor: &Extractor) -> Result<StreamOutput, ExtractError> {
    extract_bits(&raw.to_bits(), extractor)
}

/// Deterministic seed bits from ChaCha20 for demonstrations and tests only.
pub fn demo_seed(d: usize, seed: u64) -> BitString {
    BitString::random(&mut ChaCha20Rng::seed_from_u64(seed), d)
}

fn fingerprint(seed: &BitString) -> String {
    let mut h = Sha256::new();
    h.update((seed.len() as u64).to_le_bytes());
    h.update(seed.to_bytes());
    hex::encode(h.finalize())
}
