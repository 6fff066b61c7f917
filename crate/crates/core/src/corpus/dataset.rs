use super::synth::{synth_tone, SynthSpec};
use crate::dsp::{frame_signal, loudness_db, DspParams, SpectralFrame, EPS_MAG};
use crate::error::{invalid_arg, invalid_state, Result};
use crate::dsp::Fourier;
use crate::rng::SplitMix64;

/// Frames below this level are dropped from the dataset.
pub const SILENCE_GATE_DB: f64 = -80.0;

/// Analysis frames with loudness labels and the recipe each came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDataset {
    pub params: DspParams,
    pub frames: Vec<SpectralFrame>,
    pub loudness_labels: Vec<f64>,
    pub provenance: Vec<SynthSpec>,
}

impl FrameDataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frame indices shuffled by `rng`, chunked into batches (the last may be short).
    pub fn batches(&self, batch_size: usize, rng: &mut SplitMix64) -> Vec<Vec<usize>> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        rng.shuffle(&mut idx);
        idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
    }

    /// Keeps the frames at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> FrameDataset {
        FrameDataset {
            params: self.params,
            frames: indices.iter().map(|&i| self.frames[i].clone()).collect(),
            loudness_labels: indices.iter().map(|&i| self.loudness_labels[i]).collect(),
            provenance: indices.iter().map(|&i| self.provenance[i]).collect(),
        }
    }
}

/// f0 in {110, 220, 440, 880} Hz crossed with brightness in {0.5, 1, 2, 4}; 2 s tones.
pub fn default_grid(seed: u64) -> Vec<SynthSpec> {
    let mut rng = SplitMix64::new(seed);
    let mut grid = Vec::new();
    for f0 in [110.0, 220.0, 440.0, 880.0] {
        for alpha in [0.5, 1.0, 2.0, 4.0] {
            grid.push(SynthSpec::harmonic(f0, alpha, 2.0, rng.next_u64()));
        }
    }
    grid
}

pub fn default_gains() -> Vec<f64> {
    vec![0.0, -6.0, -12.0, -24.0]
}

/// Renders every spec at every gain offset, frames the audio and labels each
/// frame with the loudness of its windowed samples. Near-silent frames are dropped.
pub fn build_dataset(grid: &[SynthSpec], gains: &[f64], params: &DspParams) -> Result<FrameDataset> {
    params.validate()?;
    if grid.is_empty() || gains.is_empty() {
        return Err(invalid_arg("dataset grid and gain list must be nonempty"));
    }
    let fourier = Fourier::new(params.fft_size);
    let mut out = FrameDataset {
        params: *params,
        frames: Vec::new(),
        loudness_labels: Vec::new(),
        provenance: Vec::new(),
    };
    for spec in grid {
        let base = synth_tone(spec, params)?;
        for &g in gains {
            let audio = base.gain_db(g);
            let tagged = SynthSpec {
                gain_db: spec.gain_db + g,
                ..*spec
            };
            for windowed in frame_signal(&audio.samples, params.fft_size, params.hop)? {
                let label = loudness_db(&windowed);
                if label < SILENCE_GATE_DB {
                    continue;
                }
                let mags: Vec<f64> = fourier
                    .real_forward(&windowed)
                    .iter()
                    .map(|c| (c.norm() + EPS_MAG).ln())
                    .collect();
                out.frames.push(SpectralFrame::from_log_mags(mags, out.frames.len()));
                out.loudness_labels.push(label);
                out.provenance.push(tagged);
            }
        }
    }
    if out.is_empty() {
        return Err(invalid_state("every frame fell below the silence gate"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth_tone;
    use crate::dsp::stft;

    fn small_grid() -> Vec<SynthSpec> {
        vec![
            SynthSpec::harmonic(220.0, 1.0, 0.25, 1),
            SynthSpec::harmonic(440.0, 2.0, 0.25, 2),
        ]
    }

    #[test]
    fn counts_bounded() {
        let p = DspParams::default();
        let ds = build_dataset(&small_grid(), &[0.0, -6.0, -12.0], &p).unwrap();
        let per_tone = (4000 - 1024) / 256 + 1;
        assert!(ds.len() <= 2 * 3 * per_tone);
        assert_eq!(ds.len(), ds.loudness_labels.len());
        assert_eq!(ds.len(), ds.provenance.len());
        assert!(ds.loudness_labels.iter().all(|l| (-100.0..=0.0).contains(l)));
    }

    #[test]
    fn gain_copies_shift_labels() {
        let p = DspParams::default();
        let grid = &small_grid()[..1];
        let ds = build_dataset(grid, &[0.0, -12.0], &p).unwrap();
        let half = ds.len() / 2;
        for i in 0..half {
            let d = ds.loudness_labels[half + i] - ds.loudness_labels[i];
            assert!((d + 12.0).abs() <= 0.1, "{d}");
        }
    }

    #[test]
    fn labels_and_frames_match_direct_analysis() {
        let p = DspParams::default();
        let grid = small_grid();
        let ds = build_dataset(&grid[..1], &[0.0], &p).unwrap();
        let audio = synth_tone(&grid[0], &p).unwrap();
        let windows = frame_signal(&audio.samples, p.fft_size, p.hop).unwrap();
        let frames = stft(&audio, p.fft_size, p.hop).unwrap();
        for i in 0..ds.len() {
            assert_eq!(ds.loudness_labels[i], loudness_db(&windows[i]));
            assert_eq!(ds.frames[i].log_mags, frames[i].spectrum.log_mags);
        }
    }

    #[test]
    fn silent_frames_dropped_and_empty_is_error() {
        let p = DspParams::default();
        let mut quiet = SynthSpec::harmonic(220.0, 1.0, 0.25, 1);
        quiet.gain_db = -60.0;
        assert!(matches!(
            build_dataset(&[quiet], &[-40.0], &p),
            Err(crate::Error::InvalidState(_))
        ));
        assert!(build_dataset(&[], &[0.0], &p).is_err());
    }

    #[test]
    fn deterministic_generation_and_shuffle() {
        let p = DspParams::default();
        let a = build_dataset(&small_grid(), &[0.0, -6.0], &p).unwrap();
        let b = build_dataset(&small_grid(), &[0.0, -6.0], &p).unwrap();
        assert_eq!(a, b);
        let ba = a.batches(16, &mut SplitMix64::new(3));
        let bb = b.batches(16, &mut SplitMix64::new(3));
        assert_eq!(ba, bb);
        assert_eq!(ba.iter().map(Vec::len).sum::<usize>(), a.len());
        assert_eq!(default_grid(0).len(), 16);
    }
}
