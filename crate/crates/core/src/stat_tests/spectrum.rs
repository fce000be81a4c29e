use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::StatError;

/// Minimum number of samples per requested segment.
pub const MIN_SEGMENT_LEN: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    /// Geometric over arithmetic mean of the PSD bins (1.0 = flat).
    pub flatness: f64,
    /// Bin frequencies in cycles per sample.
    pub frequencies: Vec<f64>,
    /// One-sided averaged periodogram, per unit sampling rate.
    pub psd: Vec<f64>,
    pub segment_len: usize,
    pub segments: usize,
}

/// Welch-averaged periodogram with Hann windows and 50% overlap, split into
/// `segments` segments. Each segment is mean-removed before windowing; the
/// DC and Nyquist bins are left out of the returned spectrum.
pub fn spectral_flatness(samples: &[f64], segments: usize) -> Result<SpectrumResult, StatError> {
    if segments == 0 {
        return Err(StatError::InvalidArgument("segments must be positive".into()));
    }
    let needed = segments * MIN_SEGMENT_LEN;
    if samples.len() < needed {
        return Err(StatError::TooShort {
            needed,
            got: samples.len(),
        });
    }
    let seg_len = (2 * samples.len() / (segments + 1)).min(samples.len());
    let hop = (seg_len / 2).max(1);
    let window: Vec<f64> = (0..seg_len)
        .map(|i| {
            let x = std::f64::consts::PI * i as f64 / seg_len as f64;
            x.sin().powi(2)
        })
        .collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();

    let fft = FftPlanner::new().plan_fft_forward(seg_len);
    let bins = seg_len.div_ceil(2); // bins 1..bins exclude DC and Nyquist
    let mut acc = vec![0.0f64; bins];
    let mut used = 0usize;
    let mut buf = vec![Complex::new(0.0, 0.0); seg_len];
    let mut start = 0;
    while start + seg_len <= samples.len() && used < segments {
        let seg = &samples[start..start + seg_len];
        let mean = seg.iter().sum::<f64>() / seg_len as f64;
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
        used += 1;
        start += hop;
    }

    let scale = 2.0 / (window_power * used as f64);
    let psd: Vec<f64> = acc[1..].iter().map(|a| a * scale).collect();
    let frequencies: Vec<f64> = (1..bins).map(|k| k as f64 / seg_len as f64).collect();
    let arith = psd.iter().sum::<f64>() / psd.len() as f64;
    let flatness = if arith > 0.0 && psd.iter().all(|p| *p > 0.0) {
        let log_mean = psd.iter().map(|p| p.ln()).sum::<f64>() / psd.len() as f64;
        (log_mean.exp() / arith).min(1.0)
    } else {
        0.0
    };
    Ok(SpectrumResult {
        flatness,
        frequencies,
        psd,
        segment_len: seg_len,
        segments: used,
    })
}
