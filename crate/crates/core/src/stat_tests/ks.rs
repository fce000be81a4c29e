use serde::{Deserialize, Serialize};

use super::{StatError, Verdict};

/// Minimum number of p-values accepted by [`ks_combine`].
pub const KS_MIN_INPUTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    /// One-sample KS distance against Uniform(0, 1).
    pub statistic: f64,
    pub p_value: f64,
    /// Pass iff `0.01 <= p_value <= 0.99`.
    pub verdict: Verdict,
}

/// `sup_x |F_n(x) - x|` for the empirical CDF of `values`.
pub fn ks_statistic(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let above = (i + 1) as f64 / n - x;
            let below = x - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Survival function of the Kolmogorov distribution,
/// `Q(lambda) = 2 * sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
///
/// For small `lambda` the alternating series converges slowly, so the
/// complementary theta-function form
/// `1 - sqrt(2 pi)/lambda * sum_{k>=1} exp(-(2k-1)^2 pi^2 / (8 lambda^2))`
/// is used below `lambda = 1.18`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let q = if lambda < 1.18 {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let y = -pi2 / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1..=20 {
            let odd = (2 * k - 1) as f64;
            let term = (odd * odd * y).exp();
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += sign * term;
            if term < 1e-17 {
                break;
            }
            sign = -sign;
        }
        2.0 * sum
    };
    q.clamp(0.0, 1.0)
}

/// Combines p-values into one by a KS test against Uniform(0, 1), using the
/// asymptotic Kolmogorov distribution at
/// `(sqrt(n) + 0.12 + 0.11 / sqrt(n)) * D`.
pub fn ks_combine(p_values: &[f64]) -> Result<KsResult, StatError> {
    if p_values.len() < KS_MIN_INPUTS {
        return Err(StatError::TooFew {
            needed: KS_MIN_INPUTS,
            got: p_values.len(),
        });
    }
    if let Some(bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StatError::InvalidArgument(format!("p-value {bad} outside [0, 1]")));
    }
    let d = ks_statistic(p_values);
    let sn = (p_values.len() as f64).sqrt();
    let p = kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d);
    Ok(KsResult {
        statistic: d,
        p_value: p,
        verdict: Verdict::from_bool((0.01..=0.99).contains(&p)),
    })
}
