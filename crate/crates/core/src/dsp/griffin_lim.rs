use rustfft::num_complex::Complex64;

use super::stft::{check_framing, stft_complex, wrap_phase, Fourier};
use super::{hann_window, AudioBuffer, SpectralFrame};
use crate::error::{invalid_arg, Result};
use crate::rng::SplitMix64;

/// Lower bound on the overlap-added squared window when producing output audio.
/// Only the first and last few samples (single-frame coverage near the window
/// tails) are affected; interior coverage is 1.5 for Hann at quarter hop.
const OUTPUT_WSQ_FLOOR: f64 = 1.5e-3;

/// Starting phases for phase reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseInit {
    Zero,
    /// Uniform phases drawn from a seeded generator.
    Random(u64),
    /// Explicit phases, one vector per frame.
    Given(Vec<Vec<f64>>),
}

/// Result of [`griffin_lim`].
#[derive(Debug, Clone)]
pub struct GriffinLim {
    pub audio: AudioBuffer,
    /// `distances[k]` is the squared spectral distance of the k-th iterate
    /// (k = 0 is the signal built from the initial phases).
    pub distances: Vec<f64>,
}

fn check_frames(frames: &[SpectralFrame]) -> Result<(usize, usize)> {
    let first = frames
        .first()
        .ok_or_else(|| invalid_arg("cannot invert an empty frame list"))?;
    let d_x = first.d_x();
    if d_x < 3 {
        return Err(invalid_arg(format!("frame of {d_x} bins is too small")));
    }
    if let Some(f) = frames.iter().find(|f| f.d_x() != d_x) {
        return Err(invalid_arg(format!(
            "frame {} has {} bins, expected {d_x}",
            f.frame_index,
            f.d_x()
        )));
    }
    let fft_size = 2 * (d_x - 1);
    check_framing(fft_size, fft_size / 4)?;
    Ok((fft_size, fft_size / 4))
}

/// Weighted overlap-add of per-frame inverse DFTs, divided by the overlapped
/// squared window. With `floor == 0` this is the least-squares signal for the
/// given complex spectra.
fn overlap_add(
    spectra: &[Vec<Complex64>],
    window: &[f64],
    hop: usize,
    fourier: &Fourier,
    floor: f64,
) -> Vec<f64> {
    let n = window.len();
    let len = (spectra.len() - 1) * hop + n;
    let mut acc = vec![0.0; len];
    let mut wsq = vec![0.0; len];
    for (m, spec) in spectra.iter().enumerate() {
        let y = fourier.real_inverse(spec);
        let off = m * hop;
        for j in 0..n {
            acc[off + j] += window[j] * y[j];
            wsq[off + j] += window[j] * window[j];
        }
    }
    acc.iter()
        .zip(&wsq)
        .map(|(a, w)| {
            let d = w.max(floor);
            if d > 0.0 {
                a / d
            } else {
                0.0
            }
        })
        .collect()
}

fn polar(mags: &[Vec<f64>], phases: &[Vec<f64>]) -> Vec<Vec<Complex64>> {
    mags.iter()
        .zip(phases)
        .map(|(m, p)| {
            m.iter()
                .zip(p)
                .map(|(&r, &t)| Complex64::from_polar(r, t))
                .collect()
        })
        .collect()
}

fn distance(target: &[Vec<f64>], spectra: &[Vec<Complex64>]) -> f64 {
    target
        .iter()
        .zip(spectra)
        .map(|(t, s)| {
            t.iter()
                .zip(s)
                .map(|(a, b)| (a - b.norm()).powi(2))
                .sum::<f64>()
        })
        .sum()
}

/// Inverse STFT with known phases.
pub fn istft(
    frames: &[SpectralFrame],
    phases: &[Vec<f64>],
    sample_rate: u32,
) -> Result<AudioBuffer> {
    let (fft_size, hop) = check_frames(frames)?;
    if phases.len() != frames.len() || phases.iter().any(|p| p.len() != fft_size / 2 + 1) {
        return Err(invalid_arg("phase matrix does not match frames"));
    }
    let mags: Vec<Vec<f64>> = frames.iter().map(SpectralFrame::linear).collect();
    let window = hann_window(fft_size)?;
    let fourier = Fourier::new(fft_size);
    let samples = overlap_add(&polar(&mags, phases), &window, hop, &fourier, OUTPUT_WSQ_FLOOR);
    AudioBuffer::new(samples, sample_rate)
}

/// Sum over frames of the squared L2 distance between target magnitudes and
/// the magnitudes of `audio` re-analysed with the same framing.
pub fn spectral_distance(target: &[SpectralFrame], audio: &AudioBuffer) -> Result<f64> {
    let (fft_size, hop) = check_frames(target)?;
    let fourier = Fourier::new(fft_size);
    let spectra = stft_complex(&audio.samples, fft_size, hop, &fourier)?;
    if spectra.len() != target.len() {
        return Err(invalid_arg(format!(
            "audio yields {} frames, target has {}",
            spectra.len(),
            target.len()
        )));
    }
    let mags: Vec<Vec<f64>> = target.iter().map(SpectralFrame::linear).collect();
    Ok(distance(&mags, &spectra))
}

/// Griffin-Lim phase reconstruction from log-magnitude frames.
///
/// Each iteration resynthesizes with the current phases (least-squares
/// overlap-add) and re-analyses to obtain new phases, so the spectral distance
/// of successive iterates never increases. The returned audio is the last
/// iterate with the window-tail floor applied.
pub fn griffin_lim(
    frames: &[SpectralFrame],
    iterations: usize,
    init: PhaseInit,
    sample_rate: u32,
) -> Result<GriffinLim> {
    let (fft_size, hop) = check_frames(frames)?;
    let bins = fft_size / 2 + 1;
    let mut phases = match init {
        PhaseInit::Zero => vec![vec![0.0; bins]; frames.len()],
        PhaseInit::Random(seed) => {
            let mut rng = SplitMix64::new(seed);
            (0..frames.len())
                .map(|_| {
                    (0..bins)
                        .map(|_| rng.uniform(-std::f64::consts::PI, std::f64::consts::PI))
                        .collect()
                })
                .collect()
        }
        PhaseInit::Given(p) => {
            if p.len() != frames.len() || p.iter().any(|v| v.len() != bins) {
                return Err(invalid_arg("initial phases do not match frames"));
            }
            p
        }
    };
    let mags: Vec<Vec<f64>> = frames.iter().map(SpectralFrame::linear).collect();
    let window = hann_window(fft_size)?;
    let fourier = Fourier::new(fft_size);

    let mut distances = Vec::with_capacity(iterations + 1);
    let mut x = overlap_add(&polar(&mags, &phases), &window, hop, &fourier, 0.0);
    for _ in 0..iterations {
        let spectra = stft_complex(&x, fft_size, hop, &fourier)?;
        distances.push(distance(&mags, &spectra));
        phases = spectra
            .iter()
            .map(|s| s.iter().map(|&c| wrap_phase(c)).collect())
            .collect();
        x = overlap_add(&polar(&mags, &phases), &window, hop, &fourier, 0.0);
    }
    let spectra = stft_complex(&x, fft_size, hop, &fourier)?;
    distances.push(distance(&mags, &spectra));

    let samples = overlap_add(&polar(&mags, &phases), &window, hop, &fourier, OUTPUT_WSQ_FLOOR);
    Ok(GriffinLim {
        audio: AudioBuffer::new(samples, sample_rate)?,
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::stft;

    fn tone(len: usize) -> AudioBuffer {
        let sr = 16000.0;
        AudioBuffer::new(
            (0..len)
                .map(|n| {
                    let t = n as f64 / sr;
                    (1..6)
                        .map(|k| (std::f64::consts::TAU * 220.0 * k as f64 * t + k as f64).sin() / k as f64)
                        .sum::<f64>()
                        * 0.3
                })
                .collect(),
            16000,
        )
        .unwrap()
    }

    fn split(frames: Vec<crate::dsp::StftFrame>) -> (Vec<SpectralFrame>, Vec<Vec<f64>>) {
        frames.into_iter().map(|f| (f.spectrum, f.phases)).unzip()
    }

    #[test]
    fn true_phase_round_trip_interior() {
        let x = tone(1024 + 20 * 256);
        let (mags, phases) = split(stft(&x, 1024, 256).unwrap());
        let y = griffin_lim(&mags, 0, PhaseInit::Given(phases.clone()), 16000).unwrap();
        let z = istft(&mags, &phases, 16000).unwrap();
        assert_eq!(y.audio, z);
        assert_eq!(y.audio.len(), x.len());
        let interior = 1024..x.len() - 1024;
        let num: f64 = interior.clone().map(|i| (x.samples[i] - y.audio.samples[i]).powi(2)).sum();
        let den: f64 = interior.map(|i| x.samples[i].powi(2)).sum();
        // The log/exp round trip of the magnitudes limits this, not the overlap-add.
        assert!((num / den).sqrt() <= 1e-6, "{}", (num / den).sqrt());
    }

    #[test]
    fn floor_frames_are_silent() {
        let frames = vec![SpectralFrame::silent(513, 0); 6];
        let out = griffin_lim(&frames, 8, PhaseInit::Random(3), 16000).unwrap();
        assert!(out.audio.peak() <= 1e-4);
    }

    #[test]
    fn objective_never_increases() {
        let x = tone(1024 + 30 * 256);
        let (mags, _) = split(stft(&x, 1024, 256).unwrap());
        let out = griffin_lim(&mags, 32, PhaseInit::Random(11), 16000).unwrap();
        assert_eq!(out.distances.len(), 33);
        for w in out.distances.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0), "{} -> {}", w[0], w[1]);
        }
        assert!(out.distances[32] <= out.distances[1]);
    }

    #[test]
    fn single_frame_length() {
        let x = tone(1024);
        let (mags, _) = split(stft(&x, 1024, 256).unwrap());
        let out = griffin_lim(&mags, 4, PhaseInit::Zero, 16000).unwrap();
        assert_eq!(out.audio.len(), 1024);
        assert!(out.audio.samples.iter().all(|s| s.is_finite()));
    }

    #[test]
    fn empty_and_ragged_inputs_rejected() {
        assert!(griffin_lim(&[], 1, PhaseInit::Zero, 16000).is_err());
        let frames = vec![SpectralFrame::silent(513, 0), SpectralFrame::silent(257, 1)];
        assert!(griffin_lim(&frames, 1, PhaseInit::Zero, 16000).is_err());
    }
}
