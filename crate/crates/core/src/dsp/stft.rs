use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{hann_window, AudioBuffer, SpectralFrame, EPS_MAG};
use crate::error::{invalid_arg, Result};

/// One analysis frame: log magnitudes plus the phases needed to invert it exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct StftFrame {
    pub spectrum: SpectralFrame,
    /// Phase per bin, in `(-pi, pi]`.
    pub phases: Vec<f64>,
}

/// `floor((len - fft_size) / hop) + 1`, or zero if the signal is shorter than one frame.
pub fn frame_count(len: usize, fft_size: usize, hop: usize) -> usize {
    if len < fft_size {
        0
    } else {
        (len - fft_size) / hop + 1
    }
}

pub(crate) fn check_framing(fft_size: usize, hop: usize) -> Result<()> {
    if !fft_size.is_power_of_two() || fft_size < 4 {
        return Err(invalid_arg(format!(
            "fft size {fft_size} is not a power of two >= 4"
        )));
    }
    if hop * 4 != fft_size {
        return Err(invalid_arg(format!("hop {hop} must equal fft_size/4")));
    }
    Ok(())
}

/// Hann-windowed time-domain frames of `samples`.
pub fn frame_signal(samples: &[f64], fft_size: usize, hop: usize) -> Result<Vec<Vec<f64>>> {
    check_framing(fft_size, hop)?;
    let n = frame_count(samples.len(), fft_size, hop);
    if n == 0 {
        return Err(invalid_arg(format!(
            "signal of {} samples is shorter than one {fft_size}-sample frame",
            samples.len()
        )));
    }
    let window = hann_window(fft_size)?;
    Ok((0..n)
        .map(|m| {
            samples[m * hop..m * hop + fft_size]
                .iter()
                .zip(&window)
                .map(|(s, w)| s * w)
                .collect()
        })
        .collect())
}

/// Forward and inverse plans for one FFT size.
pub(crate) struct Fourier {
    pub size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fourier {
    pub fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    /// Non-negative frequency half of the DFT of a real frame.
    pub fn real_forward(&self, frame: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = frame.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf.truncate(self.size / 2 + 1);
        buf
    }

    /// Inverse DFT of a Hermitian spectrum given by its non-negative half,
    /// normalized so that `real_inverse(real_forward(x)) == x`.
    pub fn real_inverse(&self, half: &[Complex64]) -> Vec<f64> {
        let n = self.size;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[..half.len()].copy_from_slice(half);
        buf[0].im = 0.0;
        buf[n / 2].im = 0.0;
        for k in 1..n / 2 {
            buf[n - k] = half[k].conj();
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }
}

pub(crate) fn wrap_phase(c: Complex64) -> f64 {
    let p = c.im.atan2(c.re);
    if p <= -PI {
        PI
    } else {
        p
    }
}

pub(crate) fn stft_complex(
    samples: &[f64],
    fft_size: usize,
    hop: usize,
    fourier: &Fourier,
) -> Result<Vec<Vec<Complex64>>> {
    Ok(frame_signal(samples, fft_size, hop)?
        .iter()
        .map(|f| fourier.real_forward(f))
        .collect())
}

/// Short-time Fourier analysis with a periodic Hann window.
pub fn stft(audio: &AudioBuffer, fft_size: usize, hop: usize) -> Result<Vec<StftFrame>> {
    check_framing(fft_size, hop)?;
    let fourier = Fourier::new(fft_size);
    let spectra = stft_complex(&audio.samples, fft_size, hop, &fourier)?;
    Ok(spectra
        .into_iter()
        .enumerate()
        .map(|(i, bins)| StftFrame {
            spectrum: SpectralFrame::from_log_mags(
                bins.iter().map(|c| (c.norm() + EPS_MAG).ln()).collect(),
                i,
            ),
            phases: bins.iter().map(|&c| wrap_phase(c)).collect(),
        })
        .collect())
}
