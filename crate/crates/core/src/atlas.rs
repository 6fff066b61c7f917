//! Descriptor map of a discrete codebook: every code is decoded on its own,
//! rendered and measured, and the codes are sorted by each descriptor so they
//! can be walked in order or picked to follow a descriptor curve.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::continuous::{DEFAULT_GL_ITERATIONS, GL_PHASE_SEED};
use crate::discrete::DiscreteModel;
use crate::dsp::{
    fundamental_frequency, griffin_lim, spectral_bandwidth, spectral_centroid, stft, AudioBuffer,
    DspParams, PhaseInit, SpectralFrame,
};
use crate::error::{invalid_arg, invalid_state, Error, Result};
use crate::frame_norm::loudness_to_gain;

/// Frames rendered per code when measuring it.
pub const MEASURE_TILES: usize = 8;
/// Frames dropped at each end of a rendered tile before averaging.
pub const MEASURE_MARGIN: usize = 2;
/// Reference gain at which codes are measured and, by default, rendered.
pub const REFERENCE_GAIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Descriptor {
    Centroid,
    Bandwidth,
    F0,
}

impl Descriptor {
    pub const ALL: [Descriptor; 3] = [Descriptor::Centroid, Descriptor::Bandwidth, Descriptor::F0];

    pub fn name(self) -> &'static str {
        match self {
            Descriptor::Centroid => "centroid",
            Descriptor::Bandwidth => "bandwidth",
            Descriptor::F0 => "f0",
        }
    }
}

impl FromStr for Descriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centroid" | "centroid_hz" => Ok(Descriptor::Centroid),
            "bandwidth" | "bandwidth_hz" => Ok(Descriptor::Bandwidth),
            "f0" | "f0_hz" => Ok(Descriptor::F0),
            other => Err(invalid_arg(format!(
                "unknown descriptor `{other}` (expected centroid, bandwidth or f0)"
            ))),
        }
    }
}

/// Measured descriptors of one code. Loudness is left out: codes are
/// measured at a fixed reference gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtlasEntry {
    pub centroid_hz: f64,
    pub bandwidth_hz: f64,
    pub f0_hz: Option<f64>,
}

impl AtlasEntry {
    pub fn get(&self, d: Descriptor) -> Option<f64> {
        match d {
            Descriptor::Centroid => Some(self.centroid_hz),
            Descriptor::Bandwidth => Some(self.bandwidth_hz),
            Descriptor::F0 => self.f0_hz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorAtlas {
    pub params: DspParams,
    pub entries: Vec<AtlasEntry>,
    pub order_centroid: Vec<usize>,
    pub order_bandwidth: Vec<usize>,
    pub order_f0: Vec<usize>,
}

/// Mean descriptors of consecutive analysis frames of `audio`.
pub fn measure_frames(audio: &AudioBuffer, params: &DspParams, frames: std::ops::Range<usize>) -> Result<AtlasEntry> {
    let spectra = stft(audio, params.fft_size, params.hop)?;
    if frames.is_empty() || frames.end > spectra.len() {
        return Err(invalid_arg(format!(
            "frame range {frames:?} outside 0..{}",
            spectra.len()
        )));
    }
    let n = frames.len() as f64;
    let mut centroid = 0.0;
    let mut bandwidth = 0.0;
    let mut voiced = Vec::new();
    for i in frames.clone() {
        let s = &spectra[i].spectrum;
        centroid += spectral_centroid(s, params.sample_rate);
        bandwidth += spectral_bandwidth(s, params.sample_rate);
        let start = i * params.hop;
        if let Some(f) = fundamental_frequency(&audio.samples[start..start + params.fft_size], params.sample_rate)? {
            voiced.push(f);
        }
    }
    // f0 counts only when at least half the frames are voiced.
    let f0_hz = (2 * voiced.len() >= frames.len())
        .then(|| voiced.iter().sum::<f64>() / voiced.len() as f64);
    Ok(AtlasEntry {
        centroid_hz: centroid / n,
        bandwidth_hz: bandwidth / n,
        f0_hz,
    })
}

/// Griffin-Lim rendering shared by measurement, traversal and target synthesis.
pub fn render(frames: &[SpectralFrame], params: &DspParams) -> Result<AudioBuffer> {
    Ok(griffin_lim(
        frames,
        DEFAULT_GL_ITERATIONS,
        PhaseInit::Random(GL_PHASE_SEED),
        params.sample_rate,
    )?
    .audio)
}

/// Ascending order of codes by `values`, ties by index; absent values go last.
fn sort_order(values: impl Iterator<Item = Option<f64>>) -> Vec<usize> {
    let vals: Vec<Option<f64>> = values.collect();
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| match (vals[a], vals[b]) {
        (Some(x), Some(y)) => x.total_cmp(&y).then(a.cmp(&b)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(&b),
    });
    order
}

/// Decodes each code at the reference gain, renders it as a steady tile and
/// measures its interior frames.
pub fn build_atlas(model: &DiscreteModel) -> Result<DescriptorAtlas> {
    let params = model.params;
    let mut entries = Vec::with_capacity(model.k());
    for j in 0..model.k() {
        let frame = model.decode_code(j, REFERENCE_GAIN)?;
        if frame.linear().iter().all(|&m| m == 0.0) {
            return Err(invalid_state(format!("code {j} decodes to silence")));
        }
        let tile: Vec<SpectralFrame> = (0..MEASURE_TILES)
            .map(|i| SpectralFrame::from_log_mags(frame.log_mags.clone(), i))
            .collect();
        let audio = render(&tile, &params)?;
        entries.push(measure_frames(&audio, &params, MEASURE_MARGIN..MEASURE_TILES - MEASURE_MARGIN)?);
    }
    DescriptorAtlas::from_entries(params, entries)
}

impl DescriptorAtlas {
    pub fn from_entries(params: DspParams, entries: Vec<AtlasEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(invalid_arg("atlas needs at least one entry"));
        }
        for (j, e) in entries.iter().enumerate() {
            let ok = e.centroid_hz.is_finite()
                && e.bandwidth_hz.is_finite()
                && e.f0_hz.is_none_or(f64::is_finite);
            if !ok {
                return Err(invalid_arg(format!("non-finite descriptor in entry {j}")));
            }
        }
        Ok(Self {
            params,
            order_centroid: sort_order(entries.iter().map(|e| e.get(Descriptor::Centroid))),
            order_bandwidth: sort_order(entries.iter().map(|e| e.get(Descriptor::Bandwidth))),
            order_f0: sort_order(entries.iter().map(|e| e.get(Descriptor::F0))),
            entries,
        })
    }

    pub fn k(&self) -> usize {
        self.entries.len()
    }

    pub fn order(&self, d: Descriptor) -> &[usize] {
        match d {
            Descriptor::Centroid => &self.order_centroid,
            Descriptor::Bandwidth => &self.order_bandwidth,
            Descriptor::F0 => &self.order_f0,
        }
    }

    pub fn value(&self, code: usize, d: Descriptor) -> Option<f64> {
        self.entries[code].get(d)
    }

    /// Sorted present values of `d` with their codes.
    pub fn sorted_values(&self, d: Descriptor) -> Vec<(usize, f64)> {
        self.order(d)
            .iter()
            .filter_map(|&j| self.value(j, d).map(|v| (j, v)))
            .collect()
    }

    /// Smallest and largest present value of `d`.
    pub fn range(&self, d: Descriptor) -> Option<(f64, f64)> {
        let s = self.sorted_values(d);
        Some((s.first()?.1, s.last()?.1))
    }

    /// Code whose value of `d` is nearest to `target`; ties go to the lowest
    /// code index. Binary search over the sorted order.
    pub fn nearest(&self, d: Descriptor, target: f64) -> Result<usize> {
        if !target.is_finite() {
            return Err(invalid_arg("target values must be finite"));
        }
        let sorted = self.sorted_values(d);
        if sorted.is_empty() {
            return Err(invalid_state(format!("no code has a `{}` value", d.name())));
        }
        let p = sorted.partition_point(|&(_, v)| v < target);
        let dist = |i: usize| (sorted[i].1 - target).abs();
        let best = [p.checked_sub(1), (p < sorted.len()).then_some(p)]
            .into_iter()
            .flatten()
            .map(dist)
            .fold(f64::INFINITY, f64::min);
        // Distances grow away from the insertion point, so every code at the
        // best distance sits in one contiguous run around it.
        let mut lo = p;
        while lo > 0 && dist(lo - 1) == best {
            lo -= 1;
        }
        let mut hi = p;
        while hi < sorted.len() && dist(hi) == best {
            hi += 1;
        }
        Ok(sorted[lo..hi]
            .iter()
            .map(|&(j, _)| j)
            .min()
            .expect("nonempty run"))
    }

    /// Serializes to the line-oriented `key = value` format.
    pub fn export(&self) -> String {
        let mut out = String::new();
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "# timbre descriptor atlas");
        let _ = writeln!(out, "sample_rate = {}", self.params.sample_rate);
        let _ = writeln!(out, "fft_size = {}", self.params.fft_size);
        let _ = writeln!(out, "hop = {}", self.params.hop);
        let _ = writeln!(out, "k = {}", self.k());
        for (j, e) in self.entries.iter().enumerate() {
            let _ = writeln!(out, "\n[code]");
            let _ = writeln!(out, "index = {j}");
            let _ = writeln!(out, "centroid_hz = {:?}", e.centroid_hz);
            let _ = writeln!(out, "bandwidth_hz = {:?}", e.bandwidth_hz);
            match e.f0_hz {
                Some(f) => {
                    let _ = writeln!(out, "f0_hz = {f:?}");
                }
                None => {
                    let _ = writeln!(out, "f0_hz = none");
                }
            }
        }
        let _ = writeln!(out, "\n[orders]");
        let _ = writeln!(out, "order_centroid = {}", join(&self.order_centroid));
        let _ = writeln!(out, "order_bandwidth = {}", join(&self.order_bandwidth));
        let _ = writeln!(out, "order_f0 = {}", join(&self.order_f0));
        out
    }

    /// Parses [`DescriptorAtlas::export`] output. Stored orders are checked
    /// against the entries rather than recomputed.
    pub fn import(text: &str) -> Result<Self> {
        let mut header: [Option<u64>; 4] = [None; 4];
        let mut entries: Vec<AtlasEntry> = Vec::new();
        let mut current: Option<(Option<usize>, Option<f64>, Option<f64>, Option<Option<f64>>)> = None;
        let mut orders: [Option<Vec<usize>>; 3] = [None, None, None];
        let mut section = "";

        let perr = |line: usize, msg: String| Error::Parse(format!("atlas line {}: {msg}", line + 1));
        let num = |line: usize, v: &str| -> Result<f64> {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| perr(line, format!("bad number `{v}`")))
        };
        let flush = |cur: &mut Option<(Option<usize>, Option<f64>, Option<f64>, Option<Option<f64>>)>,
                     entries: &mut Vec<AtlasEntry>,
                     line: usize|
         -> Result<()> {
            if let Some((idx, c, b, f)) = cur.take() {
                match (idx, c, b, f) {
                    (Some(i), Some(c), Some(b), Some(f)) if i == entries.len() => entries.push(AtlasEntry {
                        centroid_hz: c,
                        bandwidth_hz: b,
                        f0_hz: f,
                    }),
                    (Some(i), ..) if i != entries.len() => {
                        return Err(perr(line, format!("code index {i} out of sequence")))
                    }
                    _ => return Err(perr(line, "incomplete [code] record".into())),
                }
            }
            Ok(())
        };

        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "[code]" || line == "[orders]" {
                flush(&mut current, &mut entries, ln)?;
                section = if line == "[code]" { "code" } else { "orders" };
                if section == "code" {
                    current = Some((None, None, None, None));
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| perr(ln, format!("expected `key = value`, got `{line}`")))?;
            match (section, key) {
                ("", "sample_rate" | "fft_size" | "hop" | "k") => {
                    let slot = ["sample_rate", "fft_size", "hop", "k"]
                        .iter()
                        .position(|k| *k == key)
                        .expect("matched");
                    header[slot] = Some(value.parse().map_err(|_| perr(ln, format!("bad integer `{value}`")))?);
                }
                ("code", _) => {
                    let cur = current.as_mut().expect("in code section");
                    match key {
                        "index" => cur.0 = Some(value.parse().map_err(|_| perr(ln, format!("bad index `{value}`")))?),
                        "centroid_hz" => cur.1 = Some(num(ln, value)?),
                        "bandwidth_hz" => cur.2 = Some(num(ln, value)?),
                        "f0_hz" => {
                            cur.3 = Some(if value == "none" { None } else { Some(num(ln, value)?) })
                        }
                        other => return Err(perr(ln, format!("unknown key `{other}`"))),
                    }
                }
                ("orders", "order_centroid" | "order_bandwidth" | "order_f0") => {
                    let list = value
                        .split_whitespace()
                        .map(|t| t.parse::<usize>().map_err(|_| perr(ln, format!("bad index `{t}`"))))
                        .collect::<Result<Vec<_>>>()?;
                    let slot = match key {
                        "order_centroid" => 0,
                        "order_bandwidth" => 1,
                        _ => 2,
                    };
                    orders[slot] = Some(list);
                }
                (_, other) => return Err(perr(ln, format!("unknown key `{other}`"))),
            }
        }
        flush(&mut current, &mut entries, text.lines().count())?;

        let missing = |what: &str| Error::Parse(format!("atlas is missing `{what}`"));
        let params = DspParams {
            sample_rate: u32::try_from(header[0].ok_or_else(|| missing("sample_rate"))?)
                .map_err(|_| Error::Parse("sample_rate out of range".into()))?,
            fft_size: header[1].ok_or_else(|| missing("fft_size"))? as usize,
            hop: header[2].ok_or_else(|| missing("hop"))? as usize,
        };
        params.validate().map_err(|e| Error::Parse(e.to_string()))?;
        let k = header[3].ok_or_else(|| missing("k"))? as usize;
        if k != entries.len() {
            return Err(Error::Parse(format!("k = {k} but {} records", entries.len())));
        }
        let atlas = Self::from_entries(params, entries).map_err(|e| Error::Parse(e.to_string()))?;
        let [oc, ob, of] = orders;
        let stored = [
            oc.ok_or_else(|| missing("order_centroid"))?,
            ob.ok_or_else(|| missing("order_bandwidth"))?,
            of.ok_or_else(|| missing("order_f0"))?,
        ];
        for (d, s) in Descriptor::ALL.iter().zip(&stored) {
            if atlas.order(*d) != s.as_slice() {
                return Err(Error::Parse(format!(
                    "order_{} does not match the stored values",
                    d.name()
                )));
            }
        }
        Ok(atlas)
    }
}

/// Codes of `d`'s sort order, each held for `frames_per_code` frames.
pub fn traversal_codes(atlas: &DescriptorAtlas, d: Descriptor, frames_per_code: usize) -> Result<Vec<usize>> {
    if frames_per_code == 0 {
        return Err(invalid_arg("frames_per_code must be >= 1"));
    }
    Ok(atlas
        .order(d)
        .iter()
        .flat_map(|&j| std::iter::repeat_n(j, frames_per_code))
        .collect())
}

/// Walks the codebook in increasing order of `d` at the reference gain.
pub fn traverse(
    atlas: &DescriptorAtlas,
    model: &DiscreteModel,
    d: Descriptor,
    frames_per_code: usize,
) -> Result<AudioBuffer> {
    check_pair(atlas, model)?;
    let codes = traversal_codes(atlas, d, frames_per_code)?;
    let frames = model.decode_codes(&codes, &vec![REFERENCE_GAIN; codes.len()])?;
    render(&frames, &model.params)
}

/// Picks, for every target value, the code nearest in `d`, then renders the
/// sequence. `gain_db` gives a per-step level; the reference gain is used
/// otherwise.
pub fn synthesize_target(
    atlas: &DescriptorAtlas,
    model: &DiscreteModel,
    d: Descriptor,
    target: &[f64],
    gain_db: Option<&[f64]>,
) -> Result<(Vec<usize>, AudioBuffer)> {
    check_pair(atlas, model)?;
    if target.is_empty() {
        return Err(invalid_arg("target must be nonempty"));
    }
    let gains: Vec<f64> = match gain_db {
        None => vec![REFERENCE_GAIN; target.len()],
        Some(g) if g.len() == target.len() => {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(invalid_arg("gain_db values must be finite"));
            }
            g.iter().map(|&db| loudness_to_gain(db, model.params.fft_size)).collect()
        }
        Some(g) => {
            return Err(invalid_arg(format!(
                "{} gains for {} target steps",
                g.len(),
                target.len()
            )))
        }
    };
    let codes = target
        .iter()
        .map(|&t| atlas.nearest(d, t))
        .collect::<Result<Vec<_>>>()?;
    let frames = model.decode_codes(&codes, &gains)?;
    Ok((codes, render(&frames, &model.params)?))
}

fn check_pair(atlas: &DescriptorAtlas, model: &DiscreteModel) -> Result<()> {
    if atlas.k() != model.k() || atlas.params != model.params {
        return Err(invalid_arg("atlas was built for a different model"));
    }
    Ok(())
}

/// Mean descriptors of each run of `frames_per_code` frames in a rendered
/// code sequence, skipping the first and last frame of a run when it has at
/// least three.
pub fn measure_segments(audio: &AudioBuffer, params: &DspParams, frames_per_code: usize) -> Result<Vec<AtlasEntry>> {
    if frames_per_code == 0 {
        return Err(invalid_arg("frames_per_code must be >= 1"));
    }
    let total = crate::dsp::frame_count(audio.len(), params.fft_size, params.hop);
    let trim = usize::from(frames_per_code >= 3);
    (0..total / frames_per_code)
        .map(|s| {
            let start = s * frames_per_code;
            measure_frames(audio, params, start + trim..start + frames_per_code - trim)
        })
        .collect()
}
