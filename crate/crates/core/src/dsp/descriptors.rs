use serde::{Deserialize, Serialize};

use super::SpectralFrame;
use crate::error::{invalid_arg, Result};

pub const LOUDNESS_FLOOR_DB: f64 = -100.0;
pub const F0_MIN_HZ: f64 = 50.0;
pub const F0_MAX_HZ: f64 = 2000.0;
/// Normalized autocorrelation below this value means "unvoiced".
pub const VOICING_THRESHOLD: f64 = 0.3;

/// Acoustic descriptors of one frame or one short segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorVector {
    pub loudness_db: f64,
    pub centroid_hz: f64,
    pub bandwidth_hz: f64,
    pub f0_hz: Option<f64>,
}

/// RMS level in dBFS, floored at -100 dB.
pub fn loudness_db(frame_samples: &[f64]) -> f64 {
    if frame_samples.is_empty() {
        return LOUDNESS_FLOOR_DB;
    }
    let ms = frame_samples.iter().map(|s| s * s).sum::<f64>() / frame_samples.len() as f64;
    20.0 * ms.sqrt().max(1e-5).log10()
}

/// Returns (sum of m_b, sum of f_b m_b) plus the linear magnitudes.
fn weighted(frame: &SpectralFrame, sample_rate: u32) -> (Vec<f64>, f64, f64) {
    let mags = frame.linear();
    let bin_hz = sample_rate as f64 / frame.fft_size() as f64;
    let total: f64 = mags.iter().sum();
    let first: f64 = mags
        .iter()
        .enumerate()
        .map(|(b, m)| b as f64 * bin_hz * m)
        .sum();
    (mags, total, first)
}

/// Magnitude-weighted mean frequency. An all-floor frame has centroid 0.
pub fn spectral_centroid(frame: &SpectralFrame, sample_rate: u32) -> f64 {
    let (_, total, first) = weighted(frame, sample_rate);
    if total <= 0.0 {
        return 0.0;
    }
    (first / total).clamp(0.0, sample_rate as f64 / 2.0)
}

/// Magnitude-weighted standard deviation of frequency around the centroid.
pub fn spectral_bandwidth(frame: &SpectralFrame, sample_rate: u32) -> f64 {
    let (mags, total, first) = weighted(frame, sample_rate);
    if total <= 0.0 {
        return 0.0;
    }
    let c = first / total;
    let bin_hz = sample_rate as f64 / frame.fft_size() as f64;
    let var: f64 = mags
        .iter()
        .enumerate()
        .map(|(b, m)| (b as f64 * bin_hz - c).powi(2) * m)
        .sum::<f64>()
        / total;
    var.sqrt().min(sample_rate as f64 / 2.0)
}

/// Fundamental frequency by normalized autocorrelation, searched over
/// 50..2000 Hz with parabolic refinement. `None` when the best normalized
/// correlation is below the voicing threshold.
pub fn fundamental_frequency(frame_samples: &[f64], sample_rate: u32) -> Result<Option<f64>> {
    let sr = sample_rate as f64;
    let min_len = (2.0 * sr / F0_MIN_HZ).ceil() as usize;
    if frame_samples.len() < min_len {
        return Err(invalid_arg(format!(
            "f0 window of {} samples is shorter than {min_len}",
            frame_samples.len()
        )));
    }
    let lag_min = (sr / F0_MAX_HZ).floor().max(1.0) as usize;
    let lag_max = (sr / F0_MIN_HZ).ceil() as usize;
    let x = frame_samples;
    let n = x.len();

    // Prefix sums of energy make each lag's normalization O(1).
    let mut energy = vec![0.0; n + 1];
    for i in 0..n {
        energy[i + 1] = energy[i] + x[i] * x[i];
    }
    if energy[n] <= 1e-20 {
        return Ok(None);
    }
    let corr = |lag: usize| -> f64 {
        let num: f64 = (0..n - lag).map(|i| x[i] * x[i + lag]).sum();
        let e0 = energy[n - lag];
        let e1 = energy[n] - energy[lag];
        let den = (e0 * e1).sqrt();
        if den <= 1e-20 {
            0.0
        } else {
            num / den
        }
    };
    // One lag of margin on each side for the parabola.
    let lo = lag_min.saturating_sub(1).max(1);
    let hi = (lag_max + 1).min(n - 1);
    let r: Vec<f64> = (lo..=hi).map(corr).collect();
    let at = |lag: usize| r[lag - lo];

    let peaks: Vec<usize> = (lag_min.max(lo + 1)..=lag_max.min(hi - 1))
        .filter(|&l| at(l) > at(l - 1) && at(l) >= at(l + 1))
        .collect();
    let best = peaks.iter().map(|&l| at(l)).fold(f64::NEG_INFINITY, f64::max);
    if peaks.is_empty() || best < VOICING_THRESHOLD {
        return Ok(None);
    }
    // Shortest lag whose peak is close to the best one avoids sub-octave picks.
    let lag = *peaks.iter().find(|&&l| at(l) >= 0.9 * best).unwrap();
    let (a, b, c) = (at(lag - 1), at(lag), at(lag + 1));
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 1e-12 {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    Ok(Some(sr / (lag as f64 + shift)))
}
