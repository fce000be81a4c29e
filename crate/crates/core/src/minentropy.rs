//! Model-based min-entropy of the quantised quantum signal.
//!
//! The evaluation chain is: empirical total variance of the stream, the
//! signal-to-noise ratio from the fitted noise model, the quantum share of
//! the variance `gamma / (gamma + 1) * total`, and finally the largest bin
//! probability of a zero-mean Gaussian with that variance under the ADC.
//! Only the quantum Gaussian is credited with randomness; the classical
//! noise is treated as additive, independent and adversary-known.

use serde::{Deserialize, Serialize};
use libm::erfc;
use thiserror::Error;

use crate::noise_model::{self, NoiseModelError, NoiseModelParams};
use crate::source_sim::{AdcConfig, RawSampleStream, SimError};
use crate::stat_tests;

/// Smallest stream accepted by [`evaluate`].
pub const MIN_EVALUATION_SAMPLES: usize = 10_000;

/// Lags of the raw-sample autocorrelation recorded with every report.
pub const REPORTED_AUTOCORR_LAGS: usize = 8;

pub const SECURITY_ASSUMPTION: &str = "classical noise is additive and independent of the \
quantum signal; quantum signal is zero-mean Gaussian; samples are iid";

#[derive(Debug, Error)]
pub enum EntropyError {
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("standard deviation must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("stream has zero variance")]
    ZeroVariance,
    #[error(transparent)]
    Adc(#[from] SimError),
    #[error(transparent)]
    Model(#[from] NoiseModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    /// Standard deviation, mV. Mean is 0.
    pub sigma: f64,
}

impl GaussianSpec {
    pub fn new(sigma: f64) -> Result<Self, EntropyError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(EntropyError::InvalidSigma(sigma));
        }
        Ok(Self { sigma })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub n_samples: usize,
    /// Variance of the midpoint-dequantised stream, mV^2.
    pub sigma_total_sq: f64,
    /// `sigma_total_sq - width^2 / 12`, for reference only.
    pub sigma_total_sq_sheppard: f64,
    pub power: f64,
    pub gamma: f64,
    pub sigma_quantum_sq: f64,
    pub p_max: f64,
    /// Code attaining `p_max` (the lower one on ties).
    pub p_max_code: u16,
    pub h_min_per_sample: f64,
    pub adc: AdcConfig,
    /// `R(1..=8)` of the raw codes.
    pub raw_autocorrelation: Vec<f64>,
    pub security_assumption: String,
}

impl EntropyReport {
    /// Min-entropy per raw bit, `h_min_per_sample / bits`.
    pub fn h_min_rate(&self) -> f64 {
        self.h_min_per_sample / self.adc.bits as f64
    }
}

/// Standard normal CDF, `erfc(-x / sqrt 2) / 2`.
pub fn gaussian_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - gaussian_cdf(x)` without cancellation.
fn gaussian_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Probability mass `P(lo <= X < hi)` for standard normal `X`, evaluated on
/// whichever tail keeps both terms small.
fn normal_mass(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        gaussian_sf(lo) - gaussian_sf(hi)
    } else if hi <= 0.0 {
        gaussian_cdf(hi) - gaussian_cdf(lo)
    } else {
        1.0 - gaussian_cdf(lo) - gaussian_sf(hi)
    }
}

/// Probability of each ADC code for a `N(0, sigma^2)` input. The first and
/// last bins absorb the tails beyond `-a` and `+a`.
pub fn bin_probabilities(gauss: GaussianSpec, adc: &AdcConfig) -> Result<Vec<f64>, EntropyError> {
    adc.validate()?;
    GaussianSpec::new(gauss.sigma)?;
    let n = adc.bin_count();
    let z = |k: usize| adc.bin_edge(k) / gauss.sigma;
    Ok((0..n)
        .map(|k| {
            let lo = if k == 0 { f64::NEG_INFINITY } else { z(k) };
            let hi = if k == n - 1 { f64::INFINITY } else { z(k + 1) };
            normal_mass(lo, hi)
        })
        .collect())
}

/// `gamma / (gamma + 1) * sigma_total_sq`.
pub fn quantum_variance(sigma_total_sq: f64, gamma: f64) -> f64 {
    gamma / (gamma + 1.0) * sigma_total_sq
}

/// Largest code probability and the (lowest) code attaining it.
pub fn max_bin_probability(sigma_quantum: f64, adc: &AdcConfig) -> Result<(f64, u16), EntropyError> {
    let probs = bin_probabilities(GaussianSpec::new(sigma_quantum)?, adc)?;
    let (code, p) = probs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, &p)| if p > best.1 { (k, p) } else { best });
    Ok((p, code as u16))
}

/// `-log2(max_k P(code = k))` for the quantum Gaussian.
pub fn min_entropy_per_sample(sigma_quantum: f64, adc: &AdcConfig) -> Result<f64, EntropyError> {
    let (p_max, _) = max_bin_probability(sigma_quantum, adc)?;
    Ok(-p_max.log2())
}

/// Sample variance (n - 1 denominator) using pairwise summation.
fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    pairwise_sum(&dev) / (n - 1.0)
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 128 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Runs the full evaluation chain on a raw stream recorded at `power`.
pub fn evaluate(
    stream: &RawSampleStream,
    params: &NoiseModelParams,
    power: f64,
) -> Result<EntropyReport, EntropyError> {
    if stream.len() < MIN_EVALUATION_SAMPLES {
        return Err(EntropyError::InsufficientData {
            needed: MIN_EVALUATION_SAMPLES,
            got: stream.len(),
        });
    }
    let adc = stream.adc;
    let voltages = stream.voltages();
    let sigma_total_sq = sample_variance(&voltages);
    if sigma_total_sq <= 0.0 {
        return Err(EntropyError::ZeroVariance);
    }
    let gamma = noise_model::snr(params, power)?;
    let sigma_quantum_sq = quantum_variance(sigma_total_sq, gamma);
    let (p_max, p_max_code) = max_bin_probability(sigma_quantum_sq.sqrt(), &adc)?;

    let codes: Vec<f64> = stream.samples.iter().map(|&c| c as f64).collect();
    let raw_autocorrelation = stat_tests::autocorrelation(&codes, REPORTED_AUTOCORR_LAGS)
        .map(|r| r.coefficients[1..].to_vec())
        .unwrap_or_default();

    Ok(EntropyReport {
        n_samples: stream.len(),
        sigma_total_sq,
        sigma_total_sq_sheppard: sigma_total_sq - adc.bin_width().powi(2) / 12.0,
        power,
        gamma,
        sigma_quantum_sq,
        p_max,
        p_max_code,
        h_min_per_sample: -p_max.log2(),
        adc,
        raw_autocorrelation,
        security_assumption: SECURITY_ASSUMPTION.to_string(),
    })
}
