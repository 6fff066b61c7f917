//! Morphs a bright tone into a dark one through the continuous latent space
//! and reports the spectral centroid of each intermediate rendering.
//!
//! cargo run --release --example interpolate_timbre -- [steps] [out.wav]

use timbre::continuous::{ContinuousConfig, ContinuousModel, ContinuousTrainer, DEFAULT_GL_ITERATIONS};
use timbre::corpus::{build_dataset, default_gains, default_grid, synth_tone, write_wav, SynthSpec};
use timbre::dsp::{spectral_centroid, stft, AudioBuffer, DspParams};
use timbre::latent::interpolate;
use timbre::nn::AdamConfig;

fn mean_centroid(audio: &AudioBuffer, params: &DspParams) -> timbre::Result<f64> {
    let frames = stft(audio, params.fft_size, params.hop)?;
    let inner = &frames[2..frames.len() - 2];
    Ok(inner
        .iter()
        .map(|f| spectral_centroid(&f.spectrum, params.sample_rate))
        .sum::<f64>()
        / inner.len() as f64)
}

fn main() -> timbre::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3000);
    let out = args.next();
    let params = DspParams::default();
    let data = build_dataset(&default_grid(7), &default_gains(), &params)?;
    let model = ContinuousModel::new(ContinuousConfig::default(), params, 11)?;
    let mut trainer = ContinuousTrainer::new(model, AdamConfig::default(), 11, steps);
    trainer.fit(&data, steps, 64, |_, _| {})?;
    let model = &trainer.model;

    let bright = synth_tone(&SynthSpec::harmonic(220.0, 0.5, 0.5, 1), &params)?;
    let dark = synth_tone(&SynthSpec::harmonic(220.0, 4.0, 0.5, 2), &params)?;
    let a = model.encode_series(&bright)?;
    let b = model.encode_series(&dark)?;

    let mut rendered = Vec::new();
    for i in 0..=10 {
        let t = i as f64 / 10.0;
        let z = interpolate(&a, &b, &vec![t; a.len()])?;
        let audio = model.decode_series(&z, DEFAULT_GL_ITERATIONS)?;
        println!("t = {t:.1}: centroid {:.1} Hz", mean_centroid(&audio, &params)?);
        rendered.extend_from_slice(&audio.samples);
    }
    if let Some(path) = out {
        write_wav(&path, &AudioBuffer::new(rendered, params.sample_rate)?)?;
        println!("wrote {path}");
    }
    Ok(())
}
