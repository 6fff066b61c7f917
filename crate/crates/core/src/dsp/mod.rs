//! Windowed spectral analysis and resynthesis, plus the acoustic descriptors
//! used to map and steer the latent spaces. Everything here is a pure
//! function of its inputs.

mod descriptors;
mod griffin_lim;
mod stft;
mod window;

pub use descriptors::{
    fundamental_frequency, loudness_db, spectral_bandwidth, spectral_centroid, DescriptorVector,
    F0_MAX_HZ, F0_MIN_HZ, LOUDNESS_FLOOR_DB, VOICING_THRESHOLD,
};
pub use griffin_lim::{griffin_lim, istft, spectral_distance, GriffinLim, PhaseInit};
pub use stft::{frame_count, frame_signal, stft, StftFrame};
pub(crate) use stft::Fourier;
pub use window::{cola_sum, hann_window};

use crate::error::{invalid_arg, Result};

/// Magnitude floor added before taking logs.
pub const EPS_MAG: f64 = 1e-5;

/// `ln(EPS_MAG)`, the smallest value a log-magnitude bin can hold.
pub fn log_floor() -> f64 {
    EPS_MAG.ln()
}

/// A mono signal.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(invalid_arg("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(invalid_arg(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Multiplies every sample by `10^(db/20)`.
    pub fn gain_db(&self, db: f64) -> AudioBuffer {
        let g = 10f64.powf(db / 20.0);
        AudioBuffer {
            samples: self.samples.iter().map(|s| s * g).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// One log-magnitude analysis window, `ln(|X_b| + EPS_MAG)` for `b` in `0..=fft_size/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrame {
    pub log_mags: Vec<f64>,
    pub frame_index: usize,
}

impl SpectralFrame {
    pub fn from_log_mags(log_mags: Vec<f64>, frame_index: usize) -> Self {
        Self {
            log_mags,
            frame_index,
        }
    }

    /// Builds a frame from linear magnitudes (negative values are treated as zero).
    pub fn from_linear(mags: &[f64], frame_index: usize) -> Self {
        Self {
            log_mags: mags.iter().map(|m| (m.max(0.0) + EPS_MAG).ln()).collect(),
            frame_index,
        }
    }

    /// The all-floor frame: zero linear magnitude in every bin.
    pub fn silent(d_x: usize, frame_index: usize) -> Self {
        Self {
            log_mags: vec![log_floor(); d_x],
            frame_index,
        }
    }

    pub fn d_x(&self) -> usize {
        self.log_mags.len()
    }

    pub fn fft_size(&self) -> usize {
        2 * (self.log_mags.len() - 1)
    }

    /// Linear magnitudes `exp(log_mag) - EPS_MAG`, clamped at zero.
    pub fn linear(&self) -> Vec<f64> {
        self.log_mags
            .iter()
            .map(|l| (l.exp() - EPS_MAG).max(0.0))
            .collect()
    }

    pub fn validate(&self, d_x: usize) -> Result<()> {
        if self.log_mags.len() != d_x {
            return Err(invalid_arg(format!(
                "frame has {} bins, expected {d_x}",
                self.log_mags.len()
            )));
        }
        if self.log_mags.iter().any(|v| !v.is_finite()) {
            return Err(invalid_arg("frame contains non-finite values"));
        }
        Ok(())
    }
}

/// Analysis parameters shared by every pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DspParams {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
}

impl Default for DspParams {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            fft_size: 1024,
            hop: 256,
        }
    }
}

impl DspParams {
    pub fn d_x(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate as f64 / self.fft_size as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(invalid_arg("sample rate must be positive"));
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < 4 {
            return Err(invalid_arg(format!(
                "fft size {} is not a power of two >= 4",
                self.fft_size
            )));
        }
        if self.hop * 4 != self.fft_size {
            return Err(invalid_arg(format!(
                "hop {} must be fft_size/4 = {}",
                self.hop,
                self.fft_size / 4
            )));
        }
        Ok(())
    }

    /// Number of samples produced by overlap-adding `frames` frames.
    pub fn samples_for_frames(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.fft_size
        }
    }
}
