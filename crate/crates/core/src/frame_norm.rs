use crate::dsp::{log_floor, SpectralFrame, EPS_MAG};

/// Guard against dividing by a zero gain.
pub const GAIN_GUARD: f64 = 1e-8;

/// Splits a frame into a level-free shape and its gain, working on linear
/// magnitudes: `gain = ||m||_2`, `unit = ln(m / max(gain, 1e-8) + EPS_MAG)`.
pub fn normalize_frame(frame: &SpectralFrame) -> (Vec<f64>, f64) {
    let lin = frame.linear();
    let gain = lin.iter().map(|m| m * m).sum::<f64>().sqrt();
    let denom = gain.max(GAIN_GUARD);
    let unit = lin.iter().map(|m| (m / denom + EPS_MAG).ln()).collect();
    (unit, gain)
}

/// Inverse of [`normalize_frame`] on linear magnitudes: `gain * (exp(unit) - EPS_MAG)`.
pub fn apply_gain(unit_log: &[f64], gain: f64) -> Vec<f64> {
    unit_log
        .iter()
        .map(|u| gain * (u.exp() - EPS_MAG).max(0.0))
        .collect()
}

/// Spectral gain `||X||_2` (non-negative half spectrum) of a Hann-windowed
/// frame whose windowed RMS is `loudness_db`. By Parseval this is
/// `N * rms / sqrt(2)` when DC and Nyquist carry no energy.
pub fn loudness_to_gain(loudness_db: f64, fft_size: usize) -> f64 {
    fft_size as f64 * 10f64.powf(loudness_db / 20.0) / std::f64::consts::SQRT_2
}

/// Network output to log magnitude: `0` maps to the floor, `1` to `ln 1 = 0`.
pub(crate) fn output_to_log(y: f64) -> f64 {
    log_floor() * (1.0 - y)
}

/// Log magnitude to network input scale; inverse of [`output_to_log`].
pub(crate) fn log_to_input(v: f64) -> f64 {
    1.0 - v / log_floor()
}
