use serde::{Deserialize, Serialize};

use crate::dsp::{AudioBuffer, DspParams};
use crate::error::{invalid_arg, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Harmonic,
    Noise,
}

/// Recipe for one synthetic tone.
///
/// `brightness` is a spectral slope exponent: harmonic partial `n` gets
/// amplitude `n^-brightness`, and for noise the lowpass cutoff is
/// `nyquist * 2^-brightness`. Larger values are darker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub f0_hz: f64,
    pub brightness: f64,
    pub duration_s: f64,
    /// Peak level in dBFS.
    pub gain_db: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn harmonic(f0_hz: f64, brightness: f64, duration_s: f64, seed: u64) -> Self {
        Self {
            kind: SynthKind::Harmonic,
            f0_hz,
            brightness,
            duration_s,
            gain_db: 0.0,
            seed,
        }
    }

    pub fn validate(&self, params: &DspParams) -> Result<()> {
        if !(50.0..=2000.0).contains(&self.f0_hz) {
            return Err(invalid_arg(format!("f0 {} Hz outside [50, 2000]", self.f0_hz)));
        }
        if !(self.brightness >= 0.0 && self.brightness.is_finite()) {
            return Err(invalid_arg(format!("brightness {} must be >= 0", self.brightness)));
        }
        let min_dur = params.fft_size as f64 / params.sample_rate as f64;
        if !(self.duration_s >= min_dur && self.duration_s.is_finite()) {
            return Err(invalid_arg(format!(
                "duration {} s is shorter than one frame ({min_dur} s)",
                self.duration_s
            )));
        }
        if !(-60.0..=0.0).contains(&self.gain_db) {
            return Err(invalid_arg(format!("gain {} dB outside [-60, 0]", self.gain_db)));
        }
        Ok(())
    }
}

/// Renders a tone deterministically from its spec.
pub fn synth_tone(spec: &SynthSpec, params: &DspParams) -> Result<AudioBuffer> {
    spec.validate(params)?;
    let sr = params.sample_rate as f64;
    let len = (spec.duration_s * sr).round() as usize;
    let mut rng = SplitMix64::new(spec.seed);
    let mut samples = match spec.kind {
        SynthKind::Harmonic => {
            let partials: Vec<(f64, f64, f64)> = (1..)
                .map(|n| n as f64)
                .take_while(|n| n * spec.f0_hz < sr / 2.0)
                .map(|n| {
                    let phase = rng.uniform(0.0, std::f64::consts::TAU);
                    (n * spec.f0_hz, n.powf(-spec.brightness), phase)
                })
                .collect();
            (0..len)
                .map(|i| {
                    let t = i as f64 / sr;
                    partials
                        .iter()
                        .map(|(f, a, p)| a * (std::f64::consts::TAU * f * t + p).sin())
                        .sum()
                })
                .collect::<Vec<f64>>()
        }
        SynthKind::Noise => {
            let cutoff = sr / 2.0 * 2f64.powf(-spec.brightness);
            let a = (-std::f64::consts::TAU * cutoff / sr).exp();
            let mut y = 0.0;
            (0..len)
                .map(|_| {
                    y = (1.0 - a) * rng.uniform(-1.0, 1.0) + a * y;
                    y
                })
                .collect()
        }
    };
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let g = 10f64.powf(spec.gain_db / 20.0) / peak;
        samples.iter_mut().for_each(|s| *s *= g);
    }
    AudioBuffer::new(samples, params.sample_rate)
}
