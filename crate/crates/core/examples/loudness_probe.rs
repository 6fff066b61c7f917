//! Trains the loudness-factored model and the plain baseline on the default
//! gain-augmented grid, then probes both latent spaces for loudness.
//!
//! cargo run --release --example loudness_probe -- [steps]

use std::time::Instant;

use timbre::continuous::{ContinuousConfig, ContinuousModel, ContinuousTrainer};
use timbre::corpus::{build_dataset, default_gains, default_grid};
use timbre::dsp::{DspParams, SpectralFrame};
use timbre::nn::AdamConfig;
use timbre::probe::held_out_r_squared;

fn main() -> timbre::Result<()> {
    let steps: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1500);
    let params = DspParams::default();
    let data = build_dataset(&default_grid(7), &default_gains(), &params)?;
    println!("dataset: {} frames", data.len());

    for (label, config) in [
        ("factored", ContinuousConfig::default()),
        (
            "baseline",
            ContinuousConfig {
                lambda_adv: 0.0,
                factor_loudness: false,
                ..ContinuousConfig::default()
            },
        ),
    ] {
        let model = ContinuousModel::new(config, params, 11)?;
        let mut trainer = ContinuousTrainer::new(model, AdamConfig::default(), 11, steps);
        let start = Instant::now();
        let history = trainer.fit(&data, steps, 64, |step, l| {
            if step % 250 == 0 {
                println!("  {label} step {step}: recon {:.4} kl {:.3} adv {:.4}", l.recon, l.kl, l.adv);
            }
        })?;
        let refs: Vec<&SpectralFrame> = data.frames.iter().collect();
        let (mu, _) = trainer.model.encode_batch(&refs)?;
        let r2 = held_out_r_squared(&mu.to_rows(), &data.loudness_labels, 5)?;
        println!(
            "{label}: {} steps in {:.1?}, final recon {:.4}, probe R^2 {:.3}",
            history.len(),
            start.elapsed(),
            history.last().map_or(f64::NAN, |l| l.recon),
            r2
        );
    }
    Ok(())
}
