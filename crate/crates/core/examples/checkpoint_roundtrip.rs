//! Briefly trains a continuous model, saves it, reloads it and compares the
//! reconstruction of a test tone from both copies.

use timbre::checkpoint;
use timbre::config::{ModelKind, RunConfig};
use timbre::continuous::{ContinuousConfig, ContinuousModel, ContinuousTrainer};
use timbre::corpus::{build_dataset, default_gains, default_grid, synth_tone, SynthSpec};
use timbre::dsp::DspParams;
use timbre::model::Model;
use timbre::nn::AdamConfig;

fn main() -> timbre::Result<()> {
    let params = DspParams::default();
    let data = build_dataset(&default_grid(7), &default_gains(), &params)?;
    let model = ContinuousModel::new(ContinuousConfig::default(), params, 7)?;
    let mut trainer = ContinuousTrainer::new(model, AdamConfig::default(), 7, 300);
    trainer.fit(&data, 300, 64, |_, _| {})?;

    let mut config = RunConfig::default();
    config.model_kind = ModelKind::Continuous;
    let model = Model::Continuous(trainer.model);
    let path = std::env::temp_dir().join("timbre_example.tlsc");
    checkpoint::save(&path, &model, &config)?;
    let (loaded, _) = checkpoint::load(&path)?;
    println!("{} bytes at {}", std::fs::metadata(&path)?.len(), path.display());

    let tone = synth_tone(&SynthSpec::harmonic(330.0, 2.0, 0.5, 4), &params)?;
    let a = model.reconstruct(&tone)?;
    let b = loaded.reconstruct(&tone)?;
    let worst = a.samples.iter().zip(&b.samples).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    println!("fingerprints {:016x} / {:016x}", model.fingerprint(), loaded.fingerprint());
    println!("max sample difference after reload: {worst:.2e}");
    Ok(())
}
