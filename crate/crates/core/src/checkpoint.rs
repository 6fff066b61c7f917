//! Binary checkpoint format. All integers and reals are little-endian.
//!
//! ```text
//! magic        4 bytes  "TLSC"
//! version      u32
//! model_kind   u8       0 = continuous, 1 = discrete
//! config_len   u32
//! config       config_len bytes of UTF-8 (the run config as `key = value` text)
//! tensor_count u32
//! tensor_count records:
//!   name_len   u16
//!   name       name_len bytes of UTF-8
//!   rank       u8
//!   dims       rank x u32
//!   data       product(dims) x f32
//! ```

use std::path::Path;

use crate::config::{ModelKind, RunConfig};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::nn::Tensor;

pub const MAGIC: [u8; 4] = *b"TLSC";
pub const VERSION: u32 = 1;

/// One named tensor exactly as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

/// Parsed file contents before they are bound to a model.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCheckpoint {
    pub version: u32,
    pub kind: ModelKind,
    pub config_text: String,
    pub tensors: Vec<TensorRecord>,
}

fn kind_byte(kind: ModelKind) -> u8 {
    match kind {
        ModelKind::Continuous => 0,
        ModelKind::Discrete => 1,
    }
}

impl RawCheckpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.push(kind_byte(self.kind));
        out.extend_from_slice(&(self.config_text.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_text.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.dims.len() as u8);
            for d in &t.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4).map_err(|_| Error::Format("file too short for magic".into()))?;
        if magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected \"TLSC\"")));
        }
        let header = |e: Error| match e {
            Error::Format(m) => Error::Format(format!("truncated header: {m}")),
            other => other,
        };
        let version = r.u32().map_err(header)?;
        if version > VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: VERSION,
            });
        }
        if version == 0 {
            return Err(Error::Format("version 0 is not a valid checkpoint".into()));
        }
        let kind = match r.u8().map_err(header)? {
            0 => ModelKind::Continuous,
            1 => ModelKind::Discrete,
            b => return Err(Error::Format(format!("unknown model kind byte {b}"))),
        };
        let len = r.u32().map_err(header)? as usize;
        let config_text = String::from_utf8(r.take(len).map_err(header)?.to_vec())
            .map_err(|_| Error::Format("config echo is not UTF-8".into()))?;
        let count = r.u32().map_err(header)?;
        let mut tensors = Vec::new();
        for i in 0..count {
            let unnamed = format!("#{i}");
            let corrupt = |name: &str, detail: &str| Error::Corruption {
                tensor: name.to_string(),
                detail: detail.to_string(),
            };
            let name_len = r.u16().map_err(|_| corrupt(&unnamed, "truncated name length"))? as usize;
            let name = String::from_utf8(
                r.take(name_len)
                    .map_err(|_| corrupt(&unnamed, "truncated name"))?
                    .to_vec(),
            )
            .map_err(|_| corrupt(&unnamed, "name is not UTF-8"))?;
            let rank = r.u8().map_err(|_| corrupt(&name, "truncated rank"))?;
            let dims = (0..rank)
                .map(|_| r.u32().map_err(|_| corrupt(&name, "truncated dims")))
                .collect::<Result<Vec<_>>>()?;
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
                .ok_or_else(|| corrupt(&name, "dims overflow"))?;
            let need = n
                .checked_mul(4)
                .ok_or_else(|| corrupt(&name, "dims overflow"))?;
            let have = r.remaining();
            let raw = r.take(need).map_err(|_| {
                corrupt(
                    &name,
                    &format!("payload truncated: dims {dims:?} need {need} bytes, {have} remain"),
                )
            })?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(TensorRecord { name, dims, data });
        }
        if r.remaining() != 0 {
            return Err(Error::Format(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self {
            version,
            kind,
            config_text,
            tensors,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format(format!(
                "need {n} bytes at offset {}, {} remain",
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Serializes a model with its run configuration.
pub fn to_bytes(model: &Model, config: &RunConfig) -> Vec<u8> {
    let mut config = config.clone();
    config.model_kind = model.kind();
    RawCheckpoint {
        version: VERSION,
        kind: model.kind(),
        config_text: config.to_text(),
        tensors: model
            .tensors()
            .iter()
            .map(|p| TensorRecord {
                name: p.name.clone(),
                dims: p.value.dims().iter().map(|&d| d as u32).collect(),
                data: p.value.data().iter().map(|&v| v as f32).collect(),
            })
            .collect(),
    }
    .to_bytes()
}

/// Rebuilds the model described by the config echo and fills in every stored tensor.
pub fn from_bytes(bytes: &[u8]) -> Result<(Model, RunConfig)> {
    let raw = RawCheckpoint::from_bytes(bytes)?;
    let mut config = RunConfig::from_text(&raw.config_text)
        .map_err(|e| Error::Format(format!("config echo: {e}")))?;
    config.model_kind = raw.kind;
    let mut model = Model::fresh(&config)?;
    let mut seen = vec![false; raw.tensors.len()];
    for p in model.tensors_mut() {
        let (i, rec) = raw
            .tensors
            .iter()
            .enumerate()
            .find(|(_, t)| t.name == p.name)
            .ok_or_else(|| Error::Corruption {
                tensor: p.name.clone(),
                detail: "missing from checkpoint".into(),
            })?;
        if seen[i] {
            return Err(Error::Corruption {
                tensor: rec.name.clone(),
                detail: "stored twice".into(),
            });
        }
        seen[i] = true;
        let dims: Vec<usize> = rec.dims.iter().map(|&d| d as usize).collect();
        if dims != p.value.dims() {
            return Err(Error::Corruption {
                tensor: rec.name.clone(),
                detail: format!("dims {dims:?}, model expects {:?}", p.value.dims()),
            });
        }
        if rec.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Corruption {
                tensor: rec.name.clone(),
                detail: "non-finite value".into(),
            });
        }
        p.value = Tensor::from_vec(&dims, rec.data.iter().map(|&v| f64::from(v)).collect())?;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Corruption {
            tensor: raw.tensors[i].name.clone(),
            detail: "not a parameter of this model".into(),
        });
    }
    Ok((model, config))
}

pub fn save(path: impl AsRef<Path>, model: &Model, config: &RunConfig) -> Result<()> {
    std::fs::write(path, to_bytes(model, config))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<(Model, RunConfig)> {
    from_bytes(&std::fs::read(path)?)
}
