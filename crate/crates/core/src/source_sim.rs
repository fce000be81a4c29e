//! Synthetic ADC samples for the phase-noise source.
//!
//! Each pre-quantisation voltage is `v_q + v_c` with `v_q ~ N(0, aq*P)` (the
//! quantum signal) and `v_c ~ N(0, ac*P^2 + f)` (classical noise), drawn from
//! two independently seeded generators and quantised by a symmetric uniform
//! ADC over `[-a, a]`.
//!
//! Generation is split into blocks of [`SIM_BLOCK_SAMPLES`]. Block `b` of a
//! stream seeded with `s` draws from ChaCha12 seeded by `s` on stream `b`, so
//! blocks can be produced in parallel without changing the output.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::noise_model::NoiseModelParams;

/// Recorded in metadata so streams can be reproduced across versions.
pub const SIM_RNG_ALGORITHM: &str =
    "chacha12(seed_from_u64(seed), stream=block index, block=65536 samples) + ziggurat N(0,1)";

pub const SIM_BLOCK_SAMPLES: usize = 1 << 16;

/// Operating power of the reference source, mW.
pub const OPERATING_POWER_MW: f64 = 0.95;
/// ADC half-range of the reference source, mV.
pub const OPERATING_RANGE_MV: f64 = 15.0;
/// Total output variance measured at the operating point, mV^2.
pub const OPERATING_TOTAL_VARIANCE: f64 = 24.4;

pub const RAW_MAGIC: &[u8; 8] = b"QRNGRAW1";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid ADC configuration: {0}")]
    InvalidAdc(String),
    #[error("invalid simulation configuration: {0}")]
    InvalidConfig(String),
    #[error("raw sample file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Symmetric uniform quantiser over `[-range_a, range_a]` with `2^bits`
/// equal bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcConfig {
    pub bits: u8,
    /// Half-range `a`, mV.
    pub range_a: f64,
}

impl AdcConfig {
    pub fn new(bits: u8, range_a: f64) -> Result<Self, SimError> {
        let adc = Self { bits, range_a };
        adc.validate()?;
        Ok(adc)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(1..=16).contains(&self.bits) {
            return Err(SimError::InvalidAdc(format!("bits must be in 1..=16, got {}", self.bits)));
        }
        if !(self.range_a > 0.0 && self.range_a.is_finite()) {
            return Err(SimError::InvalidAdc(format!(
                "range must be positive, got {}",
                self.range_a
            )));
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        1usize << self.bits
    }

    pub fn max_code(&self) -> u16 {
        (self.bin_count() - 1) as u16
    }

    /// Bin width `2a / 2^bits`.
    pub fn bin_width(&self) -> f64 {
        2.0 * self.range_a / self.bin_count() as f64
    }

    /// Lower edge of bin `k`, `-a + k * width`. `k` may equal the bin count.
    pub fn bin_edge(&self, k: usize) -> f64 {
        -self.range_a + k as f64 * self.bin_width()
    }

    /// Code for a voltage: bins are `[-a + k*w, -a + (k+1)*w)`, the top bin
    /// is closed and out-of-range voltages land in the edge bins. NaN maps
    /// to code 0.
    #[inline]
    pub fn quantize(&self, voltage: f64) -> u16 {
        let idx = ((voltage + self.range_a) / self.bin_width()).floor();
        // `as` saturates and maps NaN to 0
        (idx as i64).clamp(0, self.max_code() as i64) as u16
    }

    pub fn midpoint(&self, code: u16) -> f64 {
        -self.range_a + (code as f64 + 0.5) * self.bin_width()
    }
}

/// Everything needed to reproduce a simulated stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: NoiseModelParams,
    /// Optical power, mW.
    pub power: f64,
    pub adc: AdcConfig,
    pub n_samples: usize,
    pub quantum_seed: u64,
    pub classical_seed: u64,
    /// Common multiplier on all three variance terms: the detector gain of
    /// the acquisition chain relative to the one used for the sweep. Leaves
    /// the signal-to-noise ratio unchanged.
    #[serde(default = "unit_gain")]
    pub variance_gain: f64,
    /// Optional single-pole low-pass detector response, cutoff as a fraction
    /// of the sampling rate in `(0, 0.5]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_cutoff: Option<f64>,
}

fn unit_gain() -> f64 {
    1.0
}

impl SimConfig {
    /// The reference source at its working point: reference coefficients,
    /// 0.95 mW, 8-bit ADC over ±15 mV, with the detector gain chosen so the
    /// total variance is 24.4 mV^2.
    pub fn operating_point(n_samples: usize, quantum_seed: u64, classical_seed: u64) -> Self {
        let params = NoiseModelParams::reference();
        Self {
            params,
            power: OPERATING_POWER_MW,
            adc: AdcConfig {
                bits: 8,
                range_a: OPERATING_RANGE_MV,
            },
            n_samples,
            quantum_seed,
            classical_seed,
            variance_gain: OPERATING_TOTAL_VARIANCE / params.total_variance(OPERATING_POWER_MW),
            bandwidth_cutoff: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.adc.validate()?;
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.n_samples == 0 {
            return bad("n_samples must be at least 1".into());
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return bad(format!("power must be positive, got {}", self.power));
        }
        if !(self.variance_gain > 0.0 && self.variance_gain.is_finite()) {
            return bad(format!("variance_gain must be positive, got {}", self.variance_gain));
        }
        let p = &self.params;
        if [p.aq, p.ac, p.f].iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return bad("noise coefficients must be non-negative".into());
        }
        if self.quantum_seed == self.classical_seed {
            return bad("quantum and classical seeds must differ".into());
        }
        if let Some(fc) = self.bandwidth_cutoff {
            if !(fc > 0.0 && fc <= 0.5) {
                return bad(format!("bandwidth cutoff must be in (0, 0.5], got {fc}"));
            }
        }
        Ok(())
    }

    /// Standard deviation of the quantum signal, mV.
    pub fn quantum_sigma(&self) -> f64 {
        (self.variance_gain * self.params.quantum_variance(self.power)).sqrt()
    }

    /// Standard deviation of the classical noise, mV.
    pub fn classical_sigma(&self) -> f64 {
        (self.variance_gain * self.params.classical_variance(self.power)).sqrt()
    }

    pub fn total_variance(&self) -> f64 {
        self.variance_gain * self.params.total_variance(self.power)
    }
}

/// Quantised samples together with the ADC that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSampleStream {
    pub samples: Vec<u16>,
    pub adc: AdcConfig,
}

impl RawSampleStream {
    pub fn new(samples: Vec<u16>, adc: AdcConfig) -> Result<Self, SimError> {
        adc.validate()?;
        if let Some(bad) = samples.iter().find(|&&c| c > adc.max_code()) {
            return Err(SimError::Format(format!(
                "code {bad} does not fit in {} bits",
                adc.bits
            )));
        }
        Ok(Self { samples, adc })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn bit_len(&self) -> usize {
        self.samples.len() * self.adc.bits as usize
    }

    /// Samples de-quantised to bin midpoints, mV.
    pub fn voltages(&self) -> Vec<f64> {
        self.samples.iter().map(|&c| self.adc.midpoint(c)).collect()
    }

    /// Concatenated codes, `adc.bits` bits per sample, most significant bit
    /// first.
    pub fn to_bits(&self) -> BitString {
        let mut out = BitString::default();
        for &c in &self.samples {
            out.push_bits(c as u64, self.adc.bits as u32);
        }
        out
    }

    /// Serialises to the raw sample file format: the 16-byte header
    /// (`QRNGRAW1`, bits, 3 reserved zero bytes, `range_a` as little-endian
    /// f32) followed by one byte per sample for `bits <= 8`, two
    /// little-endian bytes otherwise.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), SimError> {
        w.write_all(RAW_MAGIC)?;
        w.write_all(&[self.adc.bits, 0, 0, 0])?;
        w.write_all(&(self.adc.range_a as f32).to_le_bytes())?;
        if self.adc.bits <= 8 {
            let bytes: Vec<u8> = self.samples.iter().map(|&c| c as u8).collect();
            w.write_all(&bytes)?;
        } else {
            let bytes: Vec<u8> = self.samples.iter().flat_map(|c| c.to_le_bytes()).collect();
            w.write_all(&bytes)?;
        }
        Ok(())
    }

    /// Parses the raw sample file format. `range_a` comes back rounded to
    /// single precision.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self, SimError> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)
            .map_err(|_| SimError::Format("truncated header".into()))?;
        if &header[..8] != RAW_MAGIC {
            return Err(SimError::Format("bad magic".into()));
        }
        let bits = header[8];
        let range_a = f32::from_le_bytes(header[12..16].try_into().unwrap()) as f64;
        let adc = AdcConfig::new(bits, range_a)?;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        let samples = if bits <= 8 {
            body.into_iter().map(u16::from).collect()
        } else {
            if body.len() % 2 != 0 {
                return Err(SimError::Format("odd body length for 16-bit samples".into()));
            }
            body.chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect()
        };
        Self::new(samples, adc)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), SimError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, SimError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// The two pre-quantisation noise components, mV.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedVoltages {
    pub quantum: Vec<f64>,
    pub classical: Vec<f64>,
}

fn fill_normal(seed: u64, sigma: f64, out: &mut [f64]) {
    out.par_chunks_mut(SIM_BLOCK_SAMPLES)
        .enumerate()
        .for_each(|(block, chunk)| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(block as u64);
            for v in chunk.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = sigma * z;
            }
        });
}

/// Draws the quantum and classical components separately.
pub fn simulate_components(config: &SimConfig) -> Result<SimulatedVoltages, SimError> {
    config.validate()?;
    let mut quantum = vec![0.0; config.n_samples];
    let mut classical = vec![0.0; config.n_samples];
    fill_normal(config.quantum_seed, config.quantum_sigma(), &mut quantum);
    fill_normal(config.classical_seed, config.classical_sigma(), &mut classical);
    Ok(SimulatedVoltages { quantum, classical })
}

/// Pre-quantisation voltages `v_q + v_c`, after the optional detector
/// low-pass.
pub fn simulate_voltages(config: &SimConfig) -> Result<Vec<f64>, SimError> {
    let SimulatedVoltages {
        mut quantum,
        classical,
    } = simulate_components(config)?;
    quantum
        .par_iter_mut()
        .zip(classical.par_iter())
        .for_each(|(q, c)| *q += c);
    if let Some(cutoff) = config.bandwidth_cutoff {
        low_pass(&mut quantum, cutoff);
    }
    Ok(quantum)
}

/// Single-pole IIR low-pass, `y[i] = y[i-1] + beta * (x[i] - y[i-1])` with
/// `beta = 1 - exp(-2*pi*cutoff)`, started at `y[0] = x[0]`.
pub fn low_pass(signal: &mut [f64], cutoff: f64) {
    let beta = 1.0 - (-2.0 * std::f64::consts::PI * cutoff).exp();
    let mut y = match signal.first() {
        Some(&x) => x,
        None => return,
    };
    for x in signal.iter_mut() {
        y += beta * (*x - y);
        *x = y;
    }
}

pub fn simulate_raw(config: &SimConfig) -> Result<RawSampleStream, SimError> {
    let voltages = simulate_voltages(config)?;
    let adc = config.adc;
    let samples = voltages.par_iter().map(|&v| adc.quantize(v)).collect();
    Ok(RawSampleStream { samples, adc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn adc(bits: u8, a: f64) -> AdcConfig {
        AdcConfig::new(bits, a).unwrap()
    }

    #[test]
    fn quantize_examples() {
        let a8 = adc(8, 15.0);
        assert_eq!(a8.quantize(0.0), 128);
        assert_eq!(a8.quantize(-15.0), 0);
        assert_eq!(a8.quantize(15.0), 255);
        assert_eq!(a8.quantize(1e9), 255);
        assert_eq!(a8.quantize(-1e9), 0);
        assert_eq!(a8.quantize(f64::NAN), 0);

        let a3 = adc(3, 15.0);
        assert_eq!(a3.bin_width(), 3.75);
        assert_eq!(a3.quantize(3.76), 5);
    }

    #[test]
    fn three_bit_bin_edges_exhaustive() {
        let a3 = adc(3, 15.0);
        for k in 0..8usize {
            let lo = -15.0 + 3.75 * k as f64;
            assert_eq!(a3.quantize(lo) as usize, k, "lower edge of bin {k} is inclusive");
            let just_below = lo - 1e-9;
            assert_eq!(a3.quantize(just_below) as usize, k.saturating_sub(1));
            assert_eq!(a3.quantize(lo + 3.75 / 2.0) as usize, k);
        }
    }

    #[test]
    fn midpoints_map_back_to_their_code() {
        for bits in 1..=16u8 {
            let a = adc(bits, 7.3);
            for k in 0..a.bin_count() {
                assert_eq!(a.quantize(a.midpoint(k as u16)) as usize, k);
            }
        }
    }

    #[test]
    fn invalid_adc_rejected() {
        assert!(AdcConfig::new(0, 1.0).is_err());
        assert!(AdcConfig::new(17, 1.0).is_err());
        assert!(AdcConfig::new(8, 0.0).is_err());
        assert!(AdcConfig::new(8, f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn quantize_is_monotone(bits in 1u8..=16, a in 0.1f64..100.0, x in -300.0f64..300.0, dx in 0.0f64..50.0) {
            let q = adc(bits, a);
            prop_assert!(q.quantize(x) <= q.quantize(x + dx));
        }
    }

    #[test]
    fn zero_noise_lands_in_centre_bin() {
        let mut cfg = SimConfig::operating_point(1000, 1, 2);
        cfg.params.aq = 0.0;
        cfg.params.ac = 0.0;
        cfg.params.f = 0.0;
        let raw = simulate_raw(&cfg).unwrap();
        assert!(raw.samples.iter().all(|&c| c == 128));
    }

    #[test]
    fn simulation_is_deterministic_and_thread_independent() {
        let cfg = SimConfig::operating_point(200_000, 11, 12);
        let a = simulate_raw(&cfg).unwrap();
        let b = simulate_raw(&cfg).unwrap();
        assert_eq!(a, b);
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| simulate_raw(&cfg).unwrap());
        assert_eq!(a, single);
        let mut other = cfg.clone();
        other.quantum_seed = 13;
        assert_ne!(simulate_raw(&other).unwrap(), a);
    }

    #[test]
    fn zero_samples_or_shared_seed_rejected() {
        let cfg = SimConfig::operating_point(0, 1, 2);
        assert!(matches!(simulate_raw(&cfg), Err(SimError::InvalidConfig(_))));
        let cfg = SimConfig::operating_point(10, 5, 5);
        assert!(matches!(simulate_raw(&cfg), Err(SimError::InvalidConfig(_))));
    }

    #[test]
    fn operating_point_preserves_snr_and_hits_total_variance() {
        let cfg = SimConfig::operating_point(1, 1, 2);
        assert!((cfg.total_variance() - OPERATING_TOTAL_VARIANCE).abs() < 1e-12);
        let ratio = cfg.quantum_sigma().powi(2) / cfg.classical_sigma().powi(2);
        let gamma = crate::noise_model::snr(&cfg.params, cfg.power).unwrap();
        assert!((ratio - gamma).abs() < 1e-12);
    }

    #[test]
    fn low_pass_smooths() {
        let mut x = vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        low_pass(&mut x, 0.05);
        assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(x[1] < 1.0 && x[1] > 0.0);
    }

    #[test]
    fn raw_file_roundtrip() {
        let cfg = SimConfig::operating_point(1000, 3, 4);
        let raw = simulate_raw(&cfg).unwrap();
        let mut buf = Vec::new();
        raw.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 1000);
        assert_eq!(&buf[..8], b"QRNGRAW1");
        assert_eq!(buf[8], 8);
        assert_eq!(&buf[9..12], &[0, 0, 0]);
        assert_eq!(&buf[12..16], &15.0f32.to_le_bytes());
        assert_eq!(RawSampleStream::read_from(buf.as_slice()).unwrap(), raw);

        let wide = RawSampleStream::new(vec![0, 1023, 513], adc(10, 2.5)).unwrap();
        let mut buf = Vec::new();
        wide.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 6);
        assert_eq!(&buf[18..20], &1023u16.to_le_bytes());
        assert_eq!(RawSampleStream::read_from(buf.as_slice()).unwrap(), wide);
    }

    #[test]
    fn raw_file_rejects_garbage() {
        assert!(RawSampleStream::read_from(&b"QRNGRAW"[..]).is_err());
        let mut buf = b"QRNGRAWX".to_vec();
        buf.extend_from_slice(&[8, 0, 0, 0]);
        buf.extend_from_slice(&15f32.to_le_bytes());
        assert!(RawSampleStream::read_from(buf.as_slice()).is_err());
        // code too large for the declared resolution
        let mut buf = b"QRNGRAW1".to_vec();
        buf.extend_from_slice(&[3, 0, 0, 0]);
        buf.extend_from_slice(&15f32.to_le_bytes());
        buf.push(8);
        assert!(RawSampleStream::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn bits_are_msb_first_per_sample() {
        let raw = RawSampleStream::new(vec![0b1000_0001, 0b0000_0011], adc(8, 1.0)).unwrap();
        assert_eq!(raw.to_bits(), BitString::from_str_bits("10000001 00000011"));
        let raw = RawSampleStream::new(vec![5, 2], adc(3, 1.0)).unwrap();
        assert_eq!(raw.to_bits(), BitString::from_str_bits("101 010"));
    }
}
