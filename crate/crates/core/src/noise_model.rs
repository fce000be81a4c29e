//! Quadratic variance model of the interferometer output.
//!
//! The a.c. voltage variance at optical power `P` decomposes into a quantum
//! term linear in `P`, a classical phase-noise term quadratic in `P`, and a
//! power-independent detector background:
//!
//! ```text
//! var(P) = aq * P + ac * P^2 + f
//! ```
//!
//! Only the products `aq` and `ac` are observable, so they are fitted and
//! stored directly.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NoiseModelError {
    #[error("sweep needs at least 3 distinct powers, got {0}")]
    DegenerateSweep(usize),
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("invalid sweep point (power {power} mW, variance {variance} mV^2)")]
    InvalidPoint { power: f64, variance: f64 },
    #[error("power must be positive and finite, got {0}")]
    InvalidPower(f64),
    #[error("classical noise terms ac and f are both zero")]
    ZeroDenominator,
    #[error("no interior maximum: snr is monotone when ac = 0 or f = 0")]
    NoInteriorMaximum,
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("sweep csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One measured point of a power sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSweepPoint {
    /// Optical power, mW.
    #[serde(rename = "power_mw")]
    pub power: f64,
    /// Output a.c. voltage variance, mV^2.
    #[serde(rename = "variance_mv2")]
    pub variance: f64,
}

impl PowerSweepPoint {
    pub fn new(power: f64, variance: f64) -> Result<Self, NoiseModelError> {
        let point = Self { power, variance };
        point.validate()?;
        Ok(point)
    }

    fn validate(&self) -> Result<(), NoiseModelError> {
        if !(self.power > 0.0 && self.power.is_finite())
            || !(self.variance >= 0.0 && self.variance.is_finite())
        {
            return Err(NoiseModelError::InvalidPoint {
                power: self.power,
                variance: self.variance,
            });
        }
        Ok(())
    }
}

/// Coefficients of the variance model with per-coefficient confidence
/// half-widths at level `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModelParams {
    /// Quantum coefficient, mV^2/mW.
    pub aq: f64,
    /// Classical phase-noise coefficient, mV^2/mW^2.
    pub ac: f64,
    /// Detector background, mV^2.
    pub f: f64,
    pub ci_aq: f64,
    pub ci_ac: f64,
    pub ci_f: f64,
    pub alpha: f64,
}

impl NoiseModelParams {
    /// Point estimates without confidence information (half-widths zero,
    /// `alpha` = 0.99).
    pub fn new(aq: f64, ac: f64, f: f64) -> Result<Self, NoiseModelError> {
        let params = Self {
            aq,
            ac,
            f,
            ci_aq: 0.0,
            ci_ac: 0.0,
            ci_f: 0.0,
            alpha: 0.99,
        };
        params.validate()?;
        Ok(params)
    }

    /// The measured laser/detector characterisation: aq = 16.1 ± 0.5,
    /// ac = 0.4 ± 0.2, f = 0.36 ± 0.06 at 0.99 confidence.
    pub fn reference() -> Self {
        Self {
            aq: 16.1,
            ac: 0.4,
            f: 0.36,
            ci_aq: 0.5,
            ci_ac: 0.2,
            ci_f: 0.06,
            alpha: 0.99,
        }
    }

    pub fn validate(&self) -> Result<(), NoiseModelError> {
        let bad = |msg: &str| Err(NoiseModelError::InvalidParams(msg.to_string()));
        if !(self.aq > 0.0 && self.aq.is_finite()) {
            return bad("aq must be positive");
        }
        if !(self.ac >= 0.0 && self.ac.is_finite()) {
            return bad("ac must be non-negative");
        }
        if !(self.f >= 0.0 && self.f.is_finite()) {
            return bad("f must be non-negative");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if [self.ci_aq, self.ci_ac, self.ci_f]
            .iter()
            .any(|c| !(*c >= 0.0))
        {
            return bad("confidence half-widths must be non-negative");
        }
        Ok(())
    }

    /// Quantum signal variance `aq * P`.
    pub fn quantum_variance(&self, power: f64) -> f64 {
        self.aq * power
    }

    /// Classical noise variance `ac * P^2 + f`.
    pub fn classical_variance(&self, power: f64) -> f64 {
        self.ac * power * power + self.f
    }

    pub fn total_variance(&self, power: f64) -> f64 {
        self.quantum_variance(power) + self.classical_variance(power)
    }

    /// All three coefficients (and their half-widths) multiplied by `gain`.
    /// The signal-to-noise ratio is unchanged.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            aq: self.aq * gain,
            ac: self.ac * gain,
            f: self.f * gain,
            ci_aq: self.ci_aq * gain,
            ci_ac: self.ci_ac * gain,
            ci_f: self.ci_f * gain,
            alpha: self.alpha,
        }
    }
}

/// Result of a least-squares fit: the coefficients plus fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFit {
    #[serde(flatten)]
    pub params: NoiseModelParams,
    /// Residual sum of squares, mV^4.
    pub rss: f64,
    /// Residual degrees of freedom (points minus 3).
    pub dof: usize,
    /// Non-fatal findings such as negative coefficients.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrCurvePoint {
    pub power: f64,
    pub gamma: f64,
}

/// Ordinary least squares of `variance = aq*P + ac*P^2 + f`.
///
/// Confidence half-widths use the Student-t quantile at `(1 + alpha) / 2`
/// with `N - 3` degrees of freedom. An exactly determined sweep (3 points)
/// has no residual degrees of freedom; its half-widths are reported as zero
/// together with a warning. Negative coefficients are returned as fitted and
/// flagged in `warnings`.
pub fn fit_noise_model(
    sweep: &[PowerSweepPoint],
    alpha: f64,
) -> Result<NoiseFit, NoiseModelError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(NoiseModelError::InvalidAlpha(alpha));
    }
    for p in sweep {
        p.validate()?;
    }
    let mut powers: Vec<f64> = sweep.iter().map(|p| p.power).collect();
    powers.sort_by(f64::total_cmp);
    powers.dedup();
    if powers.len() < 3 {
        return Err(NoiseModelError::DegenerateSweep(powers.len()));
    }

    // Columns are scaled to unit norm before forming the normal matrix.
    let design = |p: f64| [p, p * p, 1.0];
    let mut scale = [0.0f64; 3];
    for pt in sweep {
        for (s, x) in scale.iter_mut().zip(design(pt.power)) {
            *s += x * x;
        }
    }
    let scale = scale.map(f64::sqrt);

    let mut normal = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for pt in sweep {
        let row = design(pt.power);
        for i in 0..3 {
            let xi = row[i] / scale[i];
            rhs[i] += xi * pt.variance;
            for j in 0..3 {
                normal[i][j] += xi * row[j] / scale[j];
            }
        }
    }

    let inverse = invert3(&normal).ok_or(NoiseModelError::DegenerateSweep(powers.len()))?;
    let mut beta = [0.0f64; 3];
    for i in 0..3 {
        beta[i] = (0..3).map(|j| inverse[i][j] * rhs[j]).sum::<f64>() / scale[i];
    }

    let rss: f64 = sweep
        .iter()
        .map(|pt| {
            let row = design(pt.power);
            let fitted: f64 = (0..3).map(|i| row[i] * beta[i]).sum();
            (pt.variance - fitted).powi(2)
        })
        .sum();

    let dof = sweep.len() - 3;
    let mut warnings = Vec::new();
    let half_widths = if dof == 0 {
        warnings.push("no residual degrees of freedom; confidence half-widths set to 0".into());
        [0.0; 3]
    } else {
        let s2 = rss / dof as f64;
        let t = StudentsT::new(0.0, 1.0, dof as f64)
            .map_err(|e| NoiseModelError::InvalidParams(e.to_string()))?
            .inverse_cdf(0.5 * (1.0 + alpha));
        let mut hw = [0.0; 3];
        for i in 0..3 {
            hw[i] = t * (s2 * inverse[i][i].max(0.0)).sqrt() / scale[i];
        }
        hw
    };

    for (name, value) in [("aq", beta[0]), ("ac", beta[1]), ("f", beta[2])] {
        if value < 0.0 {
            warnings.push(format!("negative coefficient {name} = {value}"));
        }
    }

    Ok(NoiseFit {
        params: NoiseModelParams {
            aq: beta[0],
            ac: beta[1],
            f: beta[2],
            ci_aq: half_widths[0],
            ci_ac: half_widths[1],
            ci_f: half_widths[2],
            alpha,
        },
        rss,
        dof,
        warnings,
    })
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let mut a = *m;
    let mut inv = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let norm = m.iter().flatten().fold(0.0f64, |acc, x| acc.max(x.abs()));
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= norm * 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for j in 0..3 {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for row in 0..3 {
            if row != col {
                let factor = a[row][col];
                for j in 0..3 {
                    a[row][j] -= factor * a[col][j];
                    inv[row][j] -= factor * inv[col][j];
                }
            }
        }
    }
    Some(inv)
}

/// Quantum-signal to classical-noise ratio `aq*P / (ac*P^2 + f)`.
pub fn snr(params: &NoiseModelParams, power: f64) -> Result<f64, NoiseModelError> {
    if !(power > 0.0 && power.is_finite()) {
        return Err(NoiseModelError::InvalidPower(power));
    }
    let denom = params.classical_variance(power);
    if params.ac == 0.0 && params.f == 0.0 || denom <= 0.0 {
        return Err(NoiseModelError::ZeroDenominator);
    }
    Ok(params.quantum_variance(power) / denom)
}

/// The power maximising [`snr`], `sqrt(f / ac)`, and the ratio attained there,
/// `aq * P / (2 f)`.
pub fn optimal_power(params: &NoiseModelParams) -> Result<SnrCurvePoint, NoiseModelError> {
    if !(params.ac > 0.0 && params.f > 0.0) {
        return Err(NoiseModelError::NoInteriorMaximum);
    }
    let power = (params.f / params.ac).sqrt();
    Ok(SnrCurvePoint {
        power,
        gamma: params.aq * power / (2.0 * params.f),
    })
}

/// `snr` on a logarithmic grid of `points` powers spanning `[p_min, p_max]`.
pub fn snr_curve(
    params: &NoiseModelParams,
    p_min: f64,
    p_max: f64,
    points: usize,
) -> Result<Vec<SnrCurvePoint>, NoiseModelError> {
    if !(p_min > 0.0 && p_max >= p_min && p_max.is_finite()) {
        return Err(NoiseModelError::InvalidPower(p_min));
    }
    let points = points.max(2);
    let (lo, hi) = (p_min.ln(), p_max.ln());
    (0..points)
        .map(|i| {
            let power = (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp();
            Ok(SnrCurvePoint {
                power,
                gamma: snr(params, power)?,
            })
        })
        .collect()
}

/// Reads a sweep CSV with header `power_mw,variance_mv2`.
pub fn read_sweep_csv<R: Read>(reader: R) -> Result<Vec<PowerSweepPoint>, NoiseModelError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "power_mw" || &headers[1] != "variance_mv2" {
        return Err(NoiseModelError::InvalidParams(format!(
            "expected header `power_mw,variance_mv2`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut points = Vec::new();
    for record in rdr.deserialize() {
        let point: PowerSweepPoint = record?;
        point.validate()?;
        points.push(point);
    }
    Ok(points)
}

pub fn load_sweep_csv(path: &Path) -> Result<Vec<PowerSweepPoint>, NoiseModelError> {
    read_sweep_csv(std::fs::File::open(path)?)
}

pub fn write_sweep_csv(points: &[PowerSweepPoint]) -> String {
    let mut out = String::from("power_mw,variance_mv2\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.power, p.variance));
    }
    out
}
