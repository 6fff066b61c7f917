//! RIFF/WAVE reading (PCM 16-bit or IEEE float 32-bit, mono) and writing
//! (IEEE float 32-bit, mono, little-endian).
//!
//! Written files carry the canonical 44-byte header:
//!
//! ```text
//! offset size  field
//!      0    4  "RIFF"
//!      4    4  36 + data bytes (u32 LE)
//!      8    4  "WAVE"
//!     12    4  "fmt "
//!     16    4  16 (u32 LE)
//!     20    2  3 = IEEE float (u16 LE)
//!     22    2  1 channel
//!     24    4  sample rate
//!     28    4  byte rate = sample rate * 4
//!     32    2  block align = 4
//!     34    2  bits per sample = 32
//!     36    4  "data"
//!     40    4  data bytes = samples * 4
//!     44       samples as f32 LE
//! ```

use std::path::Path;

use crate::dsp::AudioBuffer;
use crate::error::{invalid_arg, Error, Result};

pub const WAV_HEADER_LEN: usize = 44;

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Serializes audio as a 32-bit float mono WAV.
pub fn encode_wav(audio: &AudioBuffer) -> Vec<u8> {
    let data_len = (audio.len() * 4) as u32;
    let mut out = Vec::with_capacity(WAV_HEADER_LEN + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_FLOAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&audio.sample_rate.to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate * 4).to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&32u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &audio.samples {
        out.extend_from_slice(&(s as f32).to_le_bytes());
    }
    out
}

/// Parses a mono WAV from memory.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    if bytes.len() < 12 {
        return Err(Error::Parse("truncated header: missing RIFF chunk".into()));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Parse("not a RIFF/WAVE file".into()));
    }
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut at = 12;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = u32_at(bytes, at + 4) as usize;
        let body = at + 8;
        let end = body.saturating_add(size);
        match id {
            b"fmt " => {
                if size < 16 || end > bytes.len() {
                    return Err(Error::Parse("truncated `fmt ` chunk".into()));
                }
                let mut format = u16_at(bytes, body);
                if format == FORMAT_EXTENSIBLE {
                    if size < 40 {
                        return Err(Error::Parse("truncated extensible `fmt ` chunk".into()));
                    }
                    format = u16_at(bytes, body + 24);
                }
                fmt = Some((
                    format,
                    u16_at(bytes, body + 2),
                    u32_at(bytes, body + 4),
                    u16_at(bytes, body + 14),
                ));
            }
            b"data" => {
                // Tolerate a data size that overruns the file (streamed writers).
                data = Some(&bytes[body.min(bytes.len())..end.min(bytes.len())]);
                break;
            }
            _ => {}
        }
        at = end + (size & 1);
    }
    let (format, channels, sample_rate, bits) =
        fmt.ok_or_else(|| Error::Parse("missing `fmt ` chunk".into()))?;
    let data = data.ok_or_else(|| Error::Parse("missing `data` chunk".into()))?;
    if channels != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "{channels} channels (only mono is supported)"
        )));
    }
    let samples: Vec<f64> = match (format, bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
            .collect(),
        (FORMAT_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        _ => {
            return Err(Error::UnsupportedFormat(format!(
                "format tag {format} with {bits} bits per sample"
            )))
        }
    };
    AudioBuffer::new(samples, sample_rate)
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    decode_wav(&std::fs::read(path)?)
}

/// Reads a WAV and rejects it unless its rate equals `sample_rate`. No resampling is done.
pub fn read_wav_expect(path: impl AsRef<Path>, sample_rate: u32) -> Result<AudioBuffer> {
    let audio = read_wav(path)?;
    if audio.sample_rate != sample_rate {
        return Err(invalid_arg(format!(
            "file sample rate {} differs from configured {sample_rate}",
            audio.sample_rate
        )));
    }
    Ok(audio)
}

pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    std::fs::write(path, encode_wav(audio))?;
    Ok(())
}
