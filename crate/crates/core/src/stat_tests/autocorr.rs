use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{StatError, TestReport};
use crate::bits::BitString;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrResult {
    /// `R(0..=max_lag)`; `R(0)` is exactly 1.
    pub coefficients: Vec<f64>,
    pub n: usize,
    /// Standard deviation of `R(j)` for iid data, `1 / sqrt(n)`.
    pub expected_sd: f64,
}

impl AutocorrResult {
    /// Mean of `R(1..=max_lag)`.
    pub fn mean_nonzero_lag(&self) -> f64 {
        let lags = &self.coefficients[1..];
        lags.iter().sum::<f64>() / lags.len() as f64
    }

    /// Largest `|R(j)|` over `j >= 1`.
    pub fn max_abs_nonzero_lag(&self) -> f64 {
        self.coefficients[1..].iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Sample autocorrelation
/// `R(j) = sum_i (x_i - mu)(x_{i+j} - mu) / ((N - j) * sigma^2)` with the
/// full-sequence mean and (population) variance. Values are clamped to
/// `[-1, 1]`; the `N - j` normalisation can otherwise exceed 1 slightly on
/// short sequences.
pub fn autocorrelation(samples: &[f64], max_lag: usize) -> Result<AutocorrResult, StatError> {
    let n = samples.len();
    if n < max_lag + 2 {
        return Err(StatError::TooShort {
            needed: max_lag + 2,
            got: n,
        });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = samples.iter().map(|x| x - mean).collect();
    let var = dev.iter().map(|d| d * d).sum::<f64>() / n as f64;
    if !(var > 0.0) {
        return Err(StatError::ZeroVariance);
    }
    let mut coefficients: Vec<f64> = (0..=max_lag)
        .into_par_iter()
        .map(|j| {
            if j == 0 {
                return 1.0;
            }
            let s: f64 = dev[..n - j].iter().zip(&dev[j..]).map(|(a, b)| a * b).sum();
            (s / ((n - j) as f64 * var)).clamp(-1.0, 1.0)
        })
        .collect();
    coefficients[0] = 1.0;
    Ok(AutocorrResult {
        coefficients,
        n,
        expected_sd: 1.0 / (n as f64).sqrt(),
    })
}

/// [`autocorrelation`] of the `+1/-1` image of a bit string, computed with
/// word-level popcounts instead of a floating-point copy of the stream.
pub fn bit_autocorrelation(bits: &BitString, max_lag: usize) -> Result<AutocorrResult, StatError> {
    let n = bits.len();
    if n < max_lag + 2 {
        return Err(StatError::TooShort {
            needed: max_lag + 2,
            got: n,
        });
    }
    let ones = bits.count_ones() as f64;
    let nf = n as f64;
    let mean = (2.0 * ones - nf) / nf;
    let var = 1.0 - mean * mean;
    if !(var > 0.0) {
        return Err(StatError::ZeroVariance);
    }
    // sum of signs over [start, start + len)
    let sign_sum = |start: usize, len: usize| 2.0 * count_ones_range(bits, start, len) as f64 - len as f64;
    let mut coefficients: Vec<f64> = (0..=max_lag)
        .into_par_iter()
        .map(|j| {
            if j == 0 {
                return 1.0;
            }
            let len = n - j;
            let mut differ = 0u64;
            let mut pos = 0;
            while pos < len {
                let take = (len - pos).min(64) as u32;
                differ += (bits.read_bits(pos, take) ^ bits.read_bits(pos + j, take)).count_ones() as u64;
                pos += take as usize;
            }
            let products = len as f64 - 2.0 * differ as f64;
            let cross = products - mean * (sign_sum(0, len) + sign_sum(j, len)) + len as f64 * mean * mean;
            (cross / (len as f64 * var)).clamp(-1.0, 1.0)
        })
        .collect();
    coefficients[0] = 1.0;
    Ok(AutocorrResult {
        coefficients,
        n,
        expected_sd: 1.0 / nf.sqrt(),
    })
}

fn count_ones_range(bits: &BitString, start: usize, len: usize) -> u64 {
    let mut total = 0u64;
    let mut pos = start;
    while pos < start + len {
        let take = (start + len - pos).min(64) as u32;
        total += bits.read_bits(pos, take).count_ones() as u64;
        pos += take as usize;
    }
    total
}

/// Box-Pierce portmanteau test on `R(1..=L)`: under the iid null
/// `Q = sum_j (N - j) R(j)^2` is chi-squared with `L` degrees of freedom.
pub fn portmanteau_test(result: &AutocorrResult, alpha: f64) -> TestReport {
    let lags = result.coefficients.len() - 1;
    let q: f64 = result.coefficients[1..]
        .iter()
        .enumerate()
        .map(|(i, r)| (result.n - i - 1) as f64 * r * r)
        .sum();
    let p = if q > 0.0 && lags > 0 {
        statrs::function::gamma::gamma_ur(lags as f64 / 2.0, q / 2.0)
    } else {
        1.0
    };
    TestReport::single("autocorrelation", p.clamp(0.0, 1.0), alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lag_zero_is_one() {
        let r = autocorrelation(&[1.0, 5.0, 2.0, 8.0], 2).unwrap();
        assert_eq!(r.coefficients[0], 1.0);
        assert!(r.coefficients.iter().all(|c| c.abs() <= 1.0));
    }

    #[test]
    fn alternating_signal() {
        let x: Vec<f64> = (0..10_000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let r = autocorrelation(&x, 2).unwrap();
        assert!((r.coefficients[1] + 1.0).abs() < 1e-3);
        assert!((r.coefficients[2] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn errors() {
        assert_eq!(autocorrelation(&[3.0; 50], 5), Err(StatError::ZeroVariance));
        assert!(matches!(autocorrelation(&[1.0, 2.0], 1), Err(StatError::TooShort { .. })));
    }

    #[test]
    fn bit_version_matches_float_version() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [130, 1000, 4099] {
            // biased source so the mean correction matters
            let bits = BitString::from_bits((0..n).map(|_| rng.random::<f64>() < 0.6));
            let a = bit_autocorrelation(&bits, 20).unwrap();
            let b = autocorrelation(&bits.to_signs(), 20).unwrap();
            for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
                assert!((x - y).abs() < 1e-12, "n={n}: {x} vs {y}");
            }
        }
        assert_eq!(bit_autocorrelation(&BitString::zeros(500), 3), Err(StatError::ZeroVariance));
    }

    #[test]
    fn portmanteau_separates_iid_from_correlated() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let iid = BitString::random(&mut rng, 200_000);
        let r = bit_autocorrelation(&iid, 50).unwrap();
        assert!(portmanteau_test(&r, 0.01).verdict.passed());
        // repeat every bit: R(1) near 1/2
        let sticky = BitString::from_bits(iid.iter().take(100_000).flat_map(|b| [b, b]));
        let r = bit_autocorrelation(&sticky, 50).unwrap();
        let t = portmanteau_test(&r, 0.01);
        assert!(!t.verdict.passed() && t.p_values[0] < 1e-100);
    }

    #[test]
    fn portmanteau_p_values_are_roughly_uniform_under_null() {
        let mut below = 0;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let bits = BitString::random(&mut rng, 20_000);
            let t = portmanteau_test(&bit_autocorrelation(&bits, 20).unwrap(), 0.1);
            below += (t.p_values[0] < 0.1) as usize;
        }
        // Binomial(200, 0.1): mean 20, sd 4.2
        assert!((6..=36).contains(&below), "{below} of 200 below 0.1");
    }

    fn exceedances_per_run(runs: u64, n: usize) -> Vec<usize> {
        let bound = 2.58 / (n as f64).sqrt();
        (0..runs)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                let r = autocorrelation(&x, 100).unwrap();
                r.coefficients[1..].iter().filter(|c| c.abs() > bound).count()
            })
            .collect()
    }

    #[test]
    fn iid_null_exceedances_follow_binomial() {
        // Under the null each lag exceeds 2.58/sqrt(N) with probability
        // 0.0099, so the count over 100 lags is Binomial(100, 0.0099):
        // mean 0.99, P(count <= 3) = 0.981.
        let counts = exceedances_per_run(60, 20_000);
        let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        assert!((0.5..1.6).contains(&mean), "mean exceedances {mean}");
        let within = counts.iter().filter(|&&c| c <= 3).count();
        assert!(within * 10 >= counts.len() * 9, "{within}/{}", counts.len());
    }

    #[test]
    #[ignore = "P(at most 1 of 100 lags beyond 2.58/sqrt(N)) is only 0.736 under the null"]
    fn iid_null_at_most_one_exceedance_in_ninety_percent_of_runs() {
        let counts = exceedances_per_run(60, 20_000);
        let good = counts.iter().filter(|&&c| c <= 1).count();
        assert!(good * 10 >= counts.len() * 9, "{good}/{}", counts.len());
    }
}
