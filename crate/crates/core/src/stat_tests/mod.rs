//! Statistical validation battery for raw and extracted streams.
//!
//! Single-sequence tests follow the frequency, block-frequency and runs
//! definitions of NIST SP 800-22. A sequence passes when its p-value is at
//! least `alpha`; a multi-sequence run passes when the fraction of sequences
//! with p-value above `alpha` exceeds [`DEFAULT_PROPORTION_THRESHOLD`].

mod autocorr;
mod ks;
mod nist;
mod spectrum;

pub use autocorr::{autocorrelation, bit_autocorrelation, portmanteau_test, AutocorrResult};
pub use ks::{kolmogorov_sf, ks_combine, ks_statistic, KsResult};
pub use nist::{block_frequency_test, default_block_size, monobit_test, runs_test};
pub use spectrum::{spectral_flatness, SpectrumResult, MIN_SEGMENT_LEN};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;

pub const DEFAULT_ALPHA: f64 = 0.01;
/// Minimum pass proportion for 500-sequence runs.
pub const DEFAULT_PROPORTION_THRESHOLD: f64 = 0.976;
/// Minimum sequence length for the bit tests.
pub const MIN_TEST_BITS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum StatError {
    #[error("sequence too short: need {needed}, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("need at least {needed} inputs, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("sequence has zero variance")]
    ZeroVariance,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub p_values: Vec<f64>,
    pub alpha: f64,
    pub verdict: Verdict,
    /// Fraction of sequences passing, for multi-sequence runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proportion: Option<f64>,
}

impl TestReport {
    /// Report for a single p-value; passes iff `p >= alpha`.
    pub fn single(name: &str, p_value: f64, alpha: f64) -> Self {
        Self {
            name: name.to_string(),
            p_values: vec![p_value],
            alpha,
            verdict: Verdict::from_bool(p_value >= alpha),
            proportion: None,
        }
    }

    /// Smallest p-value of the report.
    pub fn worst_p_value(&self) -> f64 {
        self.p_values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Multi-sequence pass rule: the fraction of reports whose worst p-value is
/// strictly above `alpha` must exceed `threshold`.
pub fn proportion_rule(
    reports: &[TestReport],
    alpha: f64,
    threshold: f64,
) -> Result<(Verdict, f64), StatError> {
    if reports.len() < 2 {
        return Err(StatError::TooFew {
            needed: 2,
            got: reports.len(),
        });
    }
    let passing = reports.iter().filter(|r| r.worst_p_value() > alpha).count();
    let proportion = passing as f64 / reports.len() as f64;
    Ok((Verdict::from_bool(proportion > threshold), proportion))
}

/// Test selection of a battery run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Battery {
    /// Monobit, block frequency and runs.
    Core,
}

/// Runs the core battery on one bit sequence.
pub fn run_core_battery(bits: &BitString, alpha: f64) -> Result<Vec<TestReport>, StatError> {
    Ok(vec![
        monobit_test(bits, alpha)?,
        block_frequency_test(bits, default_block_size(bits.len()), alpha)?,
        runs_test(bits, alpha)?,
    ])
}

/// Splits `bits` into `sequences` equal chunks, runs the core battery on
/// each, and aggregates every test with [`proportion_rule`].
pub fn run_core_battery_multi(
    bits: &BitString,
    sequences: usize,
    alpha: f64,
    threshold: f64,
) -> Result<Vec<TestReport>, StatError> {
    if sequences < 2 {
        return Err(StatError::TooFew {
            needed: 2,
            got: sequences,
        });
    }
    let chunk = bits.len() / sequences;
    let per_sequence: Vec<Vec<TestReport>> = (0..sequences)
        .map(|i| run_core_battery(&bits.slice(i * chunk, chunk), alpha))
        .collect::<Result<_, _>>()?;
    let n_tests = per_sequence[0].len();
    (0..n_tests)
        .map(|t| {
            let reports: Vec<TestReport> = per_sequence.iter().map(|r| r[t].clone()).collect();
            let (verdict, proportion) = proportion_rule(&reports, alpha, threshold)?;
            Ok(TestReport {
                name: reports[0].name.clone(),
                p_values: reports.iter().map(TestReport::worst_p_value).collect(),
                alpha,
                verdict,
                proportion: Some(proportion),
            })
        })
        .collect()
}
