use libm::erfc;
use statrs::function::gamma::gamma_ur;

use super::{StatError, TestReport, MIN_TEST_BITS};
use crate::bits::BitString;

fn check_len(bits: &BitString) -> Result<(), StatError> {
    if bits.len() < MIN_TEST_BITS {
        return Err(StatError::TooShort {
            needed: MIN_TEST_BITS,
            got: bits.len(),
        });
    }
    Ok(())
}

/// Frequency (monobit) test: `p = erfc(|S_n| / sqrt(2n))` where `S_n` is the
/// sum of the bits mapped to ±1.
pub fn monobit_test(bits: &BitString, alpha: f64) -> Result<TestReport, StatError> {
    check_len(bits)?;
    let n = bits.len() as f64;
    let s = 2.0 * bits.count_ones() as f64 - n;
    let p = erfc(s.abs() / (2.0 * n).sqrt());
    Ok(TestReport::single("monobit", p.clamp(0.0, 1.0), alpha))
}

/// Block size keeping the block count below 100 with blocks of at least 20
/// bits.
pub fn default_block_size(n: usize) -> usize {
    (n / 99 + 1).max(20)
}

/// Frequency test within blocks of `block_size` bits. Trailing bits that do
/// not fill a block are ignored.
pub fn block_frequency_test(
    bits: &BitString,
    block_size: usize,
    alpha: f64,
) -> Result<TestReport, StatError> {
    check_len(bits)?;
    if block_size == 0 || block_size > bits.len() {
        return Err(StatError::InvalidArgument(format!(
            "block size {block_size} for {} bits",
            bits.len()
        )));
    }
    let blocks = bits.len() / block_size;
    let mut chi2 = 0.0;
    for b in 0..blocks {
        let start = b * block_size;
        let mut ones = 0usize;
        let mut pos = start;
        while pos < start + block_size {
            let take = (start + block_size - pos).min(64) as u32;
            ones += bits.read_bits(pos, take).count_ones() as usize;
            pos += take as usize;
        }
        let pi = ones as f64 / block_size as f64;
        chi2 += (pi - 0.5) * (pi - 0.5);
    }
    chi2 *= 4.0 * block_size as f64;
    // statrs rejects x = 0, where the upper tail is exactly 1
    let p = if chi2 > 0.0 { gamma_ur(blocks as f64 / 2.0, chi2 / 2.0) } else { 1.0 };
    Ok(TestReport::single("block_frequency", p.clamp(0.0, 1.0), alpha))
}

/// Runs test. When the ones proportion fails the frequency prerequisite
/// `|pi - 1/2| < 2 / sqrt(n)` the test is not applicable and reports
/// `p = 0`.
pub fn runs_test(bits: &BitString, alpha: f64) -> Result<TestReport, StatError> {
    check_len(bits)?;
    let n = bits.len();
    let nf = n as f64;
    let pi = bits.count_ones() as f64 / nf;
    if (pi - 0.5).abs() >= 2.0 / nf.sqrt() {
        return Ok(TestReport::single("runs", 0.0, alpha));
    }
    // transitions between consecutive bits: popcount of x xor (x << 1)
    let words = bits.words();
    let mut transitions = 0u64;
    for (i, &w) in words.iter().enumerate() {
        let next = words.get(i + 1).map_or(0, |n| n >> 63);
        let shifted = (w << 1) | next;
        let mut diff = w ^ shifted;
        // the last compared pair is (bit n-2, bit n-1)
        let first = i * 64;
        let valid = (n - 1).saturating_sub(first).min(64);
        if valid < 64 {
            diff &= if valid == 0 { 0 } else { !0u64 << (64 - valid) };
        }
        transitions += diff.count_ones() as u64;
    }
    let v_obs = transitions as f64 + 1.0;
    let num = (v_obs - 2.0 * nf * pi * (1.0 - pi)).abs();
    let den = 2.0 * (2.0 * nf).sqrt() * pi * (1.0 - pi);
    let p = erfc(num / den);
    Ok(TestReport::single("runs", p.clamp(0.0, 1.0), alpha))
}
