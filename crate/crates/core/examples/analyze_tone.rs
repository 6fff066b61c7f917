//! Prints per-frame descriptors (loudness, centroid, bandwidth, f0) of a WAV
//! file, or of a synthetic harmonic tone when no path is given.
//!
//! cargo run --release --example analyze_tone -- [in.wav]

use timbre::corpus::{read_wav, synth_tone, SynthSpec};
use timbre::dsp::{
    frame_signal, fundamental_frequency, loudness_db, spectral_bandwidth, spectral_centroid, stft, DspParams,
};

fn main() -> timbre::Result<()> {
    let params = DspParams::default();
    let audio = match std::env::args().nth(1) {
        Some(path) => read_wav(path)?,
        None => synth_tone(&SynthSpec::harmonic(220.0, 1.5, 0.5, 1), &params)?,
    };
    let sr = audio.sample_rate;
    let frames = stft(&audio, params.fft_size, params.hop)?;
    let windows = frame_signal(&audio.samples, params.fft_size, params.hop)?;
    println!("frame  loudness_db  centroid_hz  bandwidth_hz  f0_hz");
    for (i, (f, w)) in frames.iter().zip(&windows).enumerate() {
        let f0 = fundamental_frequency(w, sr)?.map_or("-".to_string(), |v| format!("{v:.1}"));
        println!(
            "{i:5}  {:11.2}  {:11.1}  {:12.1}  {f0}",
            loudness_db(w),
            spectral_centroid(&f.spectrum, sr),
            spectral_bandwidth(&f.spectrum, sr),
        );
    }
    Ok(())
}
