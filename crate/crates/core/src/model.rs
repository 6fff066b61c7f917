//! Either kind of trained model behind one type, as loaded from a checkpoint.

use crate::config::{ModelKind, RunConfig};
use crate::continuous::ContinuousModel;
use crate::discrete::DiscreteModel;
use crate::dsp::{frame_signal, loudness_db, stft, AudioBuffer, DspParams, SpectralFrame};
use crate::error::{invalid_arg, Result};
use crate::frame_norm::loudness_to_gain;
use crate::latent::{interpolate, parse_curve, resample_series, sample_polyline, LatentSeries};
use crate::nn::Param;

#[derive(Debug, Clone)]
pub enum Model {
    Continuous(ContinuousModel),
    Discrete(DiscreteModel),
}

impl Model {
    /// Freshly initialized model described by `config`, seeded by `train.seed`.
    pub fn fresh(config: &RunConfig) -> Result<Self> {
        Ok(match config.model_kind {
            ModelKind::Continuous => Model::Continuous(ContinuousModel::new(
                config.continuous,
                config.dsp,
                config.train.seed,
            )?),
            ModelKind::Discrete => Model::Discrete(DiscreteModel::new(
                config.discrete,
                config.dsp,
                config.train.seed,
            )?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Continuous(_) => ModelKind::Continuous,
            Model::Discrete(_) => ModelKind::Discrete,
        }
    }

    pub fn params(&self) -> DspParams {
        match self {
            Model::Continuous(m) => m.params,
            Model::Discrete(m) => m.params,
        }
    }

    pub fn d_z(&self) -> usize {
        match self {
            Model::Continuous(m) => m.d_z(),
            Model::Discrete(m) => m.config.d_z,
        }
    }

    pub fn k(&self) -> Option<usize> {
        match self {
            Model::Continuous(_) => None,
            Model::Discrete(m) => Some(m.k()),
        }
    }

    pub fn tensors(&self) -> Vec<&Param> {
        match self {
            Model::Continuous(m) => m.params(),
            Model::Discrete(m) => m.params(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Model::Continuous(m) => m.params_mut(),
            Model::Discrete(m) => m.params_mut(),
        }
    }

    /// Order-sensitive FNV-1a digest of every parameter value.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.tensors() {
            for b in p.name.bytes().chain(p.value.data().iter().flat_map(|v| v.to_le_bytes())) {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    /// Per-window latents. The discrete model reports the selected code vectors.
    pub fn encode_series(&self, audio: &AudioBuffer) -> Result<LatentSeries> {
        match self {
            Model::Continuous(m) => m.encode_series(audio),
            Model::Discrete(m) => {
                let p = m.params;
                if audio.sample_rate != p.sample_rate {
                    return Err(invalid_arg(format!(
                        "audio at {} Hz, model expects {} Hz",
                        audio.sample_rate, p.sample_rate
                    )));
                }
                let frames = stft(audio, p.fft_size, p.hop)?;
                let refs: Vec<&SpectralFrame> = frames.iter().map(|f| &f.spectrum).collect();
                let codes = m.encode_codes(&refs)?;
                let gains: Vec<f64> = frame_signal(&audio.samples, p.fft_size, p.hop)?
                    .iter()
                    .map(|w| loudness_db(w))
                    .collect();
                let z = codes.iter().map(|&(j, _)| m.codebook.code(j).to_vec()).collect();
                LatentSeries::new(z, gains, p)
            }
        }
    }

    pub fn decode_frames(&self, series: &LatentSeries) -> Result<Vec<SpectralFrame>> {
        match self {
            Model::Continuous(m) => m.decode_series_frames(series),
            Model::Discrete(m) => {
                series.validate()?;
                if series.d_z() != m.config.d_z || series.params != m.params {
                    return Err(invalid_arg("series does not match the model"));
                }
                let codes = series
                    .frames
                    .iter()
                    .map(|z| Ok(m.codebook.quantize(z)?.0))
                    .collect::<Result<Vec<_>>>()?;
                let gains: Vec<f64> = series
                    .gain_db
                    .iter()
                    .map(|&db| loudness_to_gain(db, m.params.fft_size))
                    .collect();
                m.decode_codes(&codes, &gains)
            }
        }
    }

    pub fn decode_series(&self, series: &LatentSeries) -> Result<AudioBuffer> {
        let frames = self.decode_frames(series)?;
        crate::atlas::render(&frames, &self.params())
    }

    pub fn reconstruct(&self, audio: &AudioBuffer) -> Result<AudioBuffer> {
        self.decode_series(&self.encode_series(audio)?)
    }

    /// Inference outputs used to compare two copies of a model, one vector per
    /// output: per-frame posterior means and log variances (or encoder
    /// outputs) and decoded frames as linear magnitudes.
    pub fn probe_outputs(&self, frames: &[&SpectralFrame]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::new();
        match self {
            Model::Continuous(m) => {
                let (mu, lv) = m.encode_batch(frames)?;
                out.extend((0..mu.rows()).map(|i| mu.row(i).to_vec()));
                out.extend((0..lv.rows()).map(|i| lv.row(i).to_vec()));
                let loud = vec![-20.0; mu.rows()];
                out.extend(m.decode_batch(&mu, &loud)?.iter().map(|f| f.linear()));
            }
            Model::Discrete(m) => {
                let (z, _) = m.encode_batch(frames)?;
                out.extend((0..z.rows()).map(|i| z.row(i).to_vec()));
                for j in 0..m.k() {
                    out.push(m.decode_code_linear(j, 1.0)?);
                }
                let shape = m.decode_shape(&z)?;
                out.extend((0..shape.rows()).map(|i| shape.row(i).iter().map(|u| u.exp()).collect()));
            }
        }
        Ok(out)
    }

    /// Encodes both clips, resamples `b` to the length of `a`, blends them
    /// frame by frame along `curve` and decodes the result.
    pub fn interpolate_audio(
        &self,
        a: &AudioBuffer,
        b: &AudioBuffer,
        curve: &Curve,
    ) -> Result<(LatentSeries, AudioBuffer)> {
        let sa = self.encode_series(a)?;
        let sb = resample_series(&self.encode_series(b)?, sa.len())?;
        let z = interpolate(&sa, &sb, &curve.resolve(sa.len())?)?;
        let audio = self.decode_series(&z)?;
        Ok((z, audio))
    }
}

/// Interpolation weights over time: a textual spec (`"0.3"`, `"0:1"`,
/// `"0,1,0"`) or explicit points, stretched to the series length.
#[derive(Debug, Clone, PartialEq)]
pub enum Curve {
    Spec(String),
    Points(Vec<f64>),
}

impl Curve {
    pub fn resolve(&self, len: usize) -> Result<Vec<f64>> {
        match self {
            Curve::Spec(s) => parse_curve(s, len),
            Curve::Points(p) if p.is_empty() => Err(invalid_arg("curve must have at least one point")),
            Curve::Points(p) => Ok(sample_polyline(p, len)),
        }
    }
}
