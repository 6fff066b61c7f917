//! Command-line front end. Progress goes to stderr as one JSON object per
//! line; artifacts go to the paths given by flags or the run config.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::atlas::{build_atlas, synthesize_target, traverse, Descriptor, DescriptorAtlas};
use crate::checkpoint;
use crate::config::{parse_assignment, ModelKind, RunConfig};
use crate::continuous::ContinuousTrainer;
use crate::corpus::{
    build_dataset, default_gains, default_grid, read_wav_expect, synth_tone, write_wav, FrameDataset, SynthSpec,
};
use crate::discrete::DiscreteTrainer;
use crate::dsp::DspParams;
use crate::error::Error;
use crate::latent::{parse_curve, LatentSeries};
use crate::model::{Curve, Model};
use crate::nn::AdamConfig;
use crate::service::{serve, ServiceState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// File written by `gen-data` and read by `train`.
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Parser, Debug)]
#[command(
    name = "timbre",
    version,
    about = "Train timbre latent models and render audio from them",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Run config file (`key = value` lines).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Checkpoint to load (defaults to `paths.checkpoint`).
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the synthetic tone grid and write its manifest.
    GenData {
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[arg(long, value_name = "KIND")]
        model: Option<String>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory produced by `gen-data`; the default grid otherwise.
        #[arg(long, value_name = "DIR")]
        dataset: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Encode and decode a clip.
    Reconstruct {
        #[arg(long, value_name = "WAV")]
        input: PathBuf,
        #[arg(long, value_name = "WAV")]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Write the latent series of a clip as JSON.
    Encode {
        #[arg(long, value_name = "WAV")]
        input: PathBuf,
        #[arg(long, value_name = "JSON")]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Render a latent series JSON file.
    Decode {
        #[arg(long, value_name = "JSON")]
        input: PathBuf,
        #[arg(long, value_name = "WAV")]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Blend two clips along a time-varying curve.
    Interpolate {
        #[arg(long, value_name = "WAV")]
        a: PathBuf,
        #[arg(long, value_name = "WAV")]
        b: PathBuf,
        /// `t`, `t0:t1` or a comma list of points.
        #[arg(long, default_value = "0:1")]
        curve: String,
        #[arg(long, value_name = "WAV")]
        out: PathBuf,
        /// Also write the blended latent series.
        #[arg(long, value_name = "JSON")]
        latent_out: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Measure every code of a discrete model and write the atlas.
    AtlasBuild {
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Render the codebook in increasing order of a descriptor.
    AtlasTraverse {
        #[arg(long, value_name = "FILE")]
        atlas: Option<PathBuf>,
        #[arg(long, default_value = "centroid")]
        descriptor: String,
        #[arg(long, default_value_t = 8)]
        frames_per_code: usize,
        #[arg(long, value_name = "WAV")]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Follow a descriptor curve by picking the nearest code per step.
    AtlasTarget {
        #[arg(long, value_name = "FILE")]
        atlas: Option<PathBuf>,
        #[arg(long, default_value = "centroid")]
        descriptor: String,
        /// `v`, `v0:v1` or a comma list, stretched to `--steps` values.
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 64)]
        steps: usize,
        /// Frames each target value is held for.
        #[arg(long, default_value_t = 1)]
        frames_per_step: usize,
        /// Constant output level in dB; the reference gain otherwise.
        #[arg(long, allow_hyphen_values = true)]
        gain_db: Option<f64>,
        #[arg(long, value_name = "WAV")]
        out: PathBuf,
        /// Also write the chosen codes as JSON.
        #[arg(long, value_name = "JSON")]
        codes_out: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Run the HTTP inference service.
    Serve {
        #[arg(long, value_name = "FILE")]
        atlas: Option<PathBuf>,
        #[arg(long, value_name = "HOST:PORT")]
        addr: Option<String>,
        #[command(flatten)]
        model: ModelArgs,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn progress(value: serde_json::Value) {
    eprintln!("{value}");
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun `timbre --help` for usage.");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            progress(json!({"event": "error", "error": e.to_string()}));
            EXIT_RUNTIME
        }
    }
}

/// Defaults, then the config file, then `--set`, then `flags`.
fn layered(args: &ConfigArgs, flags: &[(&str, Option<String>)]) -> CliResult<RunConfig> {
    let text = match &args.config {
        Some(p) => Some(
            std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let mut overrides = args
        .set
        .iter()
        .map(|s| parse_assignment(s))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    for (k, v) in flags {
        if let Some(v) = v {
            overrides.push((k.to_string(), v.clone()));
        }
    }
    RunConfig::layered(text.as_deref(), &overrides).map_err(|e| CliError::Usage(e.to_string()))
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn required(p: Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    p.ok_or_else(|| CliError::Usage(format!("missing {what}")))
}

fn load_model(args: &ModelArgs) -> CliResult<(Model, RunConfig)> {
    let cfg = layered(&args.config, &[("paths.checkpoint", path_str(&args.checkpoint))])?;
    let path = required(cfg.paths.checkpoint.clone(), "--checkpoint")?;
    let (model, mut echo) = checkpoint::load(&path).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })?;
    echo.paths = cfg.paths;
    echo.serve_addr = cfg.serve_addr;
    progress(json!({"event": "loaded", "checkpoint": path.display().to_string(), "model_kind": model.kind().name()}));
    Ok((model, echo))
}

fn load_atlas(path: Option<PathBuf>, model: &Model) -> CliResult<DescriptorAtlas> {
    if model.kind() != ModelKind::Discrete {
        return Err(CliError::Usage("atlas commands need a discrete checkpoint".into()));
    }
    let path = required(path, "--atlas")?;
    Ok(DescriptorAtlas::import(&std::fs::read_to_string(path).map_err(Error::from)?)?)
}

fn discrete(model: &Model) -> CliResult<&crate::discrete::DiscreteModel> {
    match model {
        Model::Discrete(m) => Ok(m),
        Model::Continuous(_) => Err(CliError::Usage("this command needs a discrete checkpoint".into())),
    }
}

/// Recipe of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dsp: DspParams,
    pub gains_db: Vec<f64>,
    pub specs: Vec<SynthSpec>,
}

impl Manifest {
    pub fn read(dir: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{MANIFEST_FILE}: {e}")))
    }

    pub fn dataset(&self) -> crate::Result<FrameDataset> {
        build_dataset(&self.specs, &self.gains_db, &self.dsp)
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::GenData { out, seed, config } => {
            let cfg = layered(
                &config,
                &[("paths.dataset", path_str(&out)), ("train.seed", seed.map(|s| s.to_string()))],
            )?;
            let dir = required(cfg.paths.dataset.clone(), "--out")?;
            std::fs::create_dir_all(&dir).map_err(Error::from)?;
            let manifest = Manifest {
                dsp: cfg.dsp,
                gains_db: default_gains(),
                specs: default_grid(cfg.train.seed),
            };
            for (i, spec) in manifest.specs.iter().enumerate() {
                let audio = synth_tone(spec, &cfg.dsp)?;
                write_wav(dir.join(format!("tone_{i:02}.wav")), &audio)?;
            }
            let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            std::fs::write(dir.join(MANIFEST_FILE), text).map_err(Error::from)?;
            let frames = manifest.dataset()?.len();
            progress(json!({"event": "gen-data", "dir": dir.display().to_string(), "tones": manifest.specs.len(), "frames": frames}));
            Ok(())
        }
        Command::Train {
            model,
            steps,
            seed,
            dataset,
            checkpoint: ckpt,
            config,
        } => {
            let cfg = layered(
                &config,
                &[
                    ("model.kind", model),
                    ("train.steps", steps.map(|s| s.to_string())),
                    ("train.seed", seed.map(|s| s.to_string())),
                    ("paths.dataset", path_str(&dataset)),
                    ("paths.checkpoint", path_str(&ckpt)),
                ],
            )?;
            let out = required(cfg.paths.checkpoint.clone(), "--checkpoint")?;
            let data = match &cfg.paths.dataset {
                Some(dir) => {
                    let m = Manifest::read(dir)?;
                    if m.dsp != cfg.dsp {
                        return Err(CliError::Usage("dataset analysis parameters differ from the config".into()));
                    }
                    m.dataset()?
                }
                None => build_dataset(&default_grid(cfg.train.seed), &default_gains(), &cfg.dsp)?,
            };
            progress(json!({"event": "dataset", "frames": data.len()}));
            let trained = train(&cfg, &data)?;
            checkpoint::save(&out, &trained, &cfg)?;
            progress(json!({"event": "saved", "checkpoint": out.display().to_string()}));
            Ok(())
        }
        Command::Reconstruct { input, out, model } => {
            let (m, _) = load_model(&model)?;
            let audio = read_wav_expect(&input, m.params().sample_rate)?;
            write_wav(&out, &m.reconstruct(&audio)?)?;
            Ok(())
        }
        Command::Encode { input, out, model } => {
            let (m, _) = load_model(&model)?;
            let audio = read_wav_expect(&input, m.params().sample_rate)?;
            let series = m.encode_series(&audio)?;
            std::fs::write(&out, series.to_json()).map_err(Error::from)?;
            progress(json!({"event": "encoded", "frames": series.len(), "d_z": series.d_z()}));
            Ok(())
        }
        Command::Decode { input, out, model } => {
            let (m, _) = load_model(&model)?;
            let text = std::fs::read_to_string(&input).map_err(Error::from)?;
            write_wav(&out, &m.decode_series(&LatentSeries::from_json(&text)?)?)?;
            Ok(())
        }
        Command::Interpolate {
            a,
            b,
            curve,
            out,
            latent_out,
            model,
        } => {
            let (m, _) = load_model(&model)?;
            let sr = m.params().sample_rate;
            let (z, audio) = m.interpolate_audio(
                &read_wav_expect(&a, sr)?,
                &read_wav_expect(&b, sr)?,
                &Curve::Spec(curve),
            )?;
            write_wav(&out, &audio)?;
            if let Some(p) = latent_out {
                std::fs::write(p, z.to_json()).map_err(Error::from)?;
            }
            progress(json!({"event": "interpolated", "frames": z.len()}));
            Ok(())
        }
        Command::AtlasBuild { out, model } => {
            let (m, cfg) = load_model(&model)?;
            let out = required(out.or(cfg.paths.atlas), "--out")?;
            let atlas = build_atlas(discrete(&m)?)?;
            std::fs::write(&out, atlas.export()).map_err(Error::from)?;
            progress(json!({"event": "atlas", "k": atlas.k(), "path": out.display().to_string()}));
            Ok(())
        }
        Command::AtlasTraverse {
            atlas,
            descriptor,
            frames_per_code,
            out,
            model,
        } => {
            let (m, cfg) = load_model(&model)?;
            let atlas = load_atlas(atlas.or(cfg.paths.atlas), &m)?;
            let d: Descriptor = descriptor.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
            write_wav(&out, &traverse(&atlas, discrete(&m)?, d, frames_per_code)?)?;
            Ok(())
        }
        Command::AtlasTarget {
            atlas,
            descriptor,
            target,
            steps,
            frames_per_step,
            gain_db,
            out,
            codes_out,
            model,
        } => {
            let (m, cfg) = load_model(&model)?;
            let atlas = load_atlas(atlas.or(cfg.paths.atlas), &m)?;
            let d: Descriptor = descriptor.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
            if frames_per_step == 0 {
                return Err(CliError::Usage("--frames-per-step must be >= 1".into()));
            }
            let values: Vec<f64> = parse_curve(&target, steps)
                .map_err(|e| CliError::Usage(e.to_string()))?
                .into_iter()
                .flat_map(|v| std::iter::repeat_n(v, frames_per_step))
                .collect();
            let gains = gain_db.map(|g| vec![g; values.len()]);
            let (codes, audio) = synthesize_target(&atlas, discrete(&m)?, d, &values, gains.as_deref())?;
            write_wav(&out, &audio)?;
            if let Some(p) = codes_out {
                std::fs::write(p, json!({"descriptor": d.name(), "codes": codes}).to_string())
                    .map_err(Error::from)?;
            }
            Ok(())
        }
        Command::Serve { atlas, addr, model } => {
            let (m, cfg) = load_model(&model)?;
            let atlas = match (&m, atlas.or(cfg.paths.atlas.clone())) {
                (Model::Discrete(_), Some(p)) => Some(load_atlas(Some(p), &m)?),
                _ => None,
            };
            let addr = addr.unwrap_or(cfg.serve_addr);
            let addr = addr
                .parse()
                .map_err(|_| CliError::Usage(format!("bad address `{addr}`")))?;
            let rt = tokio::runtime::Runtime::new().map_err(Error::from)?;
            rt.block_on(serve(ServiceState { model: m, atlas }, addr))?;
            Ok(())
        }
    }
}

/// Trains the model described by `cfg` on `data`, logging every 100 steps.
pub fn train(cfg: &RunConfig, data: &FrameDataset) -> crate::Result<Model> {
    let adam = AdamConfig {
        lr: cfg.train.lr,
        ..AdamConfig::default()
    };
    let log_every = 100;
    match Model::fresh(cfg)? {
        Model::Continuous(m) => {
            let mut t = ContinuousTrainer::new(m, adam, cfg.train.seed, cfg.train.steps);
            t.fit(data, cfg.train.steps, cfg.train.batch, |step, l| {
                if step % log_every == 0 || step == cfg.train.steps {
                    progress(json!({"event": "step", "step": step, "recon": l.recon, "kl": l.kl, "adv": l.adv}));
                }
            })?;
            Ok(Model::Continuous(t.model))
        }
        Model::Discrete(m) => {
            let mut t = DiscreteTrainer::new(m, adam, cfg.train.seed);
            let window = (cfg.train.reinit_window > 0).then_some(cfg.train.reinit_window);
            t.fit(data, cfg.train.steps, cfg.train.batch, window, |step, l| {
                if step % log_every == 0 || step == cfg.train.steps {
                    progress(json!({"event": "step", "step": step, "recon": l.recon, "codebook": l.codebook, "commit": l.commit}));
                }
            })?;
            Ok(Model::Discrete(t.model))
        }
    }
}
