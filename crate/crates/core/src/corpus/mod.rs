//! Synthetic training material and audio file I/O.

mod dataset;
mod synth;
mod wav;

pub use dataset::{build_dataset, default_gains, default_grid, FrameDataset};
pub use synth::{synth_tone, SynthKind, SynthSpec};
pub use wav::{decode_wav, encode_wav, read_wav, read_wav_expect, write_wav, WAV_HEADER_LEN};
