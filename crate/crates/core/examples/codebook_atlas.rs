//! Trains the discrete model on the default grid, builds the descriptor atlas
//! and walks the codebook by increasing spectral centroid.
//!
//! cargo run --release --example codebook_atlas -- [steps] [out.wav]

use std::time::Instant;

use timbre::atlas::{build_atlas, measure_segments, synthesize_target, traverse, Descriptor};
use timbre::corpus::{build_dataset, default_gains, default_grid, write_wav};
use timbre::discrete::{DiscreteConfig, DiscreteModel, DiscreteTrainer};
use timbre::dsp::DspParams;
use timbre::nn::AdamConfig;

fn main() -> timbre::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3000);
    let out = args.next();
    let params = DspParams::default();
    let data = build_dataset(&default_grid(7), &default_gains(), &params)?;

    let model = DiscreteModel::new(DiscreteConfig::default(), params, 3)?;
    let mut trainer = DiscreteTrainer::new(model, AdamConfig::default(), 3);
    let start = Instant::now();
    trainer.fit(&data, steps, 64, Some(200), |step, l| {
        if step % 500 == 0 {
            println!("step {step}: recon {:.4} codebook {:.4}", l.recon, l.codebook);
        }
    })?;
    println!("trained {steps} steps in {:.1?}", start.elapsed());

    let atlas = build_atlas(&trainer.model)?;
    for (j, v) in atlas.sorted_values(Descriptor::Centroid) {
        let e = atlas.entries[j];
        println!(
            "code {j:2}: centroid {v:7.1} Hz  bandwidth {:7.1} Hz  f0 {}",
            e.bandwidth_hz,
            e.f0_hz.map_or("-".to_string(), |f| format!("{f:.1} Hz"))
        );
    }

    let fpc = 8;
    let audio = traverse(&atlas, &trainer.model, Descriptor::Centroid, fpc)?;
    let measured = measure_segments(&audio, &params, fpc)?;
    let ok = measured
        .windows(2)
        .filter(|w| w[1].centroid_hz >= w[0].centroid_hz - params.bin_hz())
        .count();
    println!(
        "traversal: {ok}/{} adjacent segments non-decreasing within one bin",
        measured.len() - 1
    );

    // Follow a centroid ramp across the central 80% of the codebook's range.
    let (lo, hi) = atlas.range(Descriptor::Centroid).expect("centroids");
    let steps_n = 40;
    let ramp: Vec<f64> = (0..steps_n)
        .map(|i| lo + (hi - lo) * (0.1 + 0.8 * i as f64 / (steps_n - 1) as f64))
        .collect();
    let held: Vec<f64> = ramp.iter().flat_map(|&v| std::iter::repeat_n(v, fpc)).collect();
    let (_, target_audio) = synthesize_target(&atlas, &trainer.model, Descriptor::Centroid, &held, None)?;
    let got = measure_segments(&target_audio, &params, fpc)?;
    let sorted = atlas.sorted_values(Descriptor::Centroid);
    let within = ramp
        .iter()
        .zip(&got)
        .filter(|(t, m)| {
            let p = sorted.partition_point(|&(_, v)| v < **t).clamp(1, sorted.len() - 1);
            let gap = sorted[p].1 - sorted[p - 1].1;
            (m.centroid_hz - **t).abs() <= gap + params.bin_hz()
        })
        .count();
    println!("target ramp: {within}/{steps_n} steps within local gap + one bin");
    if let Some(path) = out {
        write_wav(&path, &audio)?;
        println!("wrote {path}");
    }
    Ok(())
}
