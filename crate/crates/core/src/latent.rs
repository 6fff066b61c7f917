//! Latent series and the operators applied to them: time-variant
//! interpolation, resampling along time, and arithmetic/editing.

use serde::{Deserialize, Serialize};

use crate::dsp::DspParams;
use crate::error::{invalid_arg, Error, Result};

/// Version tag written into serialized series.
pub const SERIES_FORMAT_VERSION: u32 = 1;

/// Ordered latent frames plus the per-frame loudness sidechain.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSeries {
    pub frames: Vec<Vec<f64>>,
    pub gain_db: Vec<f64>,
    pub params: DspParams,
}

#[derive(Serialize, Deserialize)]
struct SeriesDoc {
    version: u32,
    sr: u32,
    fft_size: usize,
    hop: usize,
    d_z: usize,
    gain_db: Vec<f64>,
    frames: Vec<Vec<f64>>,
}

impl LatentSeries {
    pub fn new(frames: Vec<Vec<f64>>, gain_db: Vec<f64>, params: DspParams) -> Result<Self> {
        let s = Self {
            frames,
            gain_db,
            params,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .frames
            .first()
            .ok_or_else(|| invalid_arg("latent series is empty"))?;
        if first.is_empty() {
            return Err(invalid_arg("latent frames have zero dimensions"));
        }
        if self.gain_db.len() != self.frames.len() {
            return Err(invalid_arg(format!(
                "{} gain values for {} frames",
                self.gain_db.len(),
                self.frames.len()
            )));
        }
        if self.frames.iter().any(|f| f.len() != first.len()) {
            return Err(invalid_arg("latent frames have unequal dimensions"));
        }
        if self.frames.iter().flatten().chain(&self.gain_db).any(|v| !v.is_finite()) {
            return Err(invalid_arg("latent series contains non-finite values"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn d_z(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&SeriesDoc {
            version: SERIES_FORMAT_VERSION,
            sr: self.params.sample_rate,
            fft_size: self.params.fft_size,
            hop: self.params.hop,
            d_z: self.d_z(),
            gain_db: self.gain_db.clone(),
            frames: self.frames.clone(),
        })
        .expect("series serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SeriesDoc =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("latent series: {e}")))?;
        if doc.version > SERIES_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "latent series version {} is newer than {SERIES_FORMAT_VERSION}",
                doc.version
            )));
        }
        let params = DspParams {
            sample_rate: doc.sr,
            fft_size: doc.fft_size,
            hop: doc.hop,
        };
        params.validate()?;
        let s = Self::new(doc.frames, doc.gain_db, params)?;
        if s.d_z() != doc.d_z {
            return Err(invalid_arg(format!(
                "declared d_z {} but frames have {}",
                doc.d_z,
                s.d_z()
            )));
        }
        Ok(s)
    }
}

/// Blend weights for `t`. Taking `wb = 1 - fl(1 - t)` makes swapping the
/// endpoints together with `t -> 1 - t` reproduce the same weights exactly.
fn weights(t: f64) -> (f64, f64) {
    let wa = 1.0 - t;
    (wa, 1.0 - wa)
}

fn blend(a: &[f64], b: &[f64], wa: f64, wb: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect()
}

/// Frame-wise linear interpolation `z_i = (1 - t_i) a_i + t_i b_i`, with the
/// gain sidechain interpolated in dB. Metadata is taken from `a`.
pub fn interpolate(a: &LatentSeries, b: &LatentSeries, curve: &[f64]) -> Result<LatentSeries> {
    if a.len() != b.len() || a.len() != curve.len() {
        return Err(invalid_arg(format!(
            "interpolation needs equal lengths (a={}, b={}, curve={}); resample first",
            a.len(),
            b.len(),
            curve.len()
        )));
    }
    if a.d_z() != b.d_z() {
        return Err(invalid_arg(format!("d_z mismatch: {} vs {}", a.d_z(), b.d_z())));
    }
    if let Some(t) = curve.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(invalid_arg(format!("curve value {t} outside [0, 1]")));
    }
    let mut frames = Vec::with_capacity(a.len());
    let mut gain_db = Vec::with_capacity(a.len());
    for i in 0..a.len() {
        let (wa, wb) = weights(curve[i]);
        frames.push(blend(&a.frames[i], &b.frames[i], wa, wb));
        gain_db.push(wa * a.gain_db[i] + wb * b.gain_db[i]);
    }
    Ok(LatentSeries {
        frames,
        gain_db,
        params: a.params,
    })
}

/// Linear resampling along time to `new_len` frames. Output frame `i` sits at
/// input position `i (len - 1) / (new_len - 1)`; a single output frame sits at 0.
pub fn resample_series(s: &LatentSeries, new_len: usize) -> Result<LatentSeries> {
    if new_len == 0 {
        return Err(invalid_arg("resample length must be >= 1"));
    }
    s.validate()?;
    let last = s.len() - 1;
    let mut frames = Vec::with_capacity(new_len);
    let mut gain_db = Vec::with_capacity(new_len);
    for i in 0..new_len {
        let pos = if new_len == 1 {
            0.0
        } else {
            (i * last) as f64 / (new_len - 1) as f64
        };
        let lo = (pos.floor() as usize).min(last);
        let frac = pos - lo as f64;
        if frac == 0.0 || lo == last {
            frames.push(s.frames[lo].clone());
            gain_db.push(s.gain_db[lo]);
        } else {
            let (wa, wb) = weights(frac);
            frames.push(blend(&s.frames[lo], &s.frames[lo + 1], wa, wb));
            gain_db.push(wa * s.gain_db[lo] + wb * s.gain_db[lo + 1]);
        }
    }
    Ok(LatentSeries {
        frames,
        gain_db,
        params: s.params,
    })
}

/// Editing and arithmetic on latent series.
#[derive(Debug, Clone, PartialEq)]
pub enum SeriesOp<'a> {
    /// Frame-wise sum; gains are averaged.
    Add(&'a LatentSeries),
    /// Multiplies every latent value; gains unchanged.
    Scale(f64),
    /// Adds `delta` to dimension `dim` of every frame.
    OffsetDim { dim: usize, delta: f64 },
    /// Appends another series in time.
    Concat(&'a LatentSeries),
    /// Reverses frame order (and gains).
    Reverse,
}

pub fn series_arith(s: &LatentSeries, op: SeriesOp<'_>) -> Result<LatentSeries> {
    s.validate()?;
    let mut out = s.clone();
    match op {
        SeriesOp::Add(other) => {
            if other.len() != s.len() || other.d_z() != s.d_z() {
                return Err(invalid_arg(format!(
                    "cannot add series of shape {}x{} to {}x{}",
                    other.len(),
                    other.d_z(),
                    s.len(),
                    s.d_z()
                )));
            }
            for (f, g) in out.frames.iter_mut().zip(&other.frames) {
                f.iter_mut().zip(g).for_each(|(x, y)| *x += y);
            }
            for (a, b) in out.gain_db.iter_mut().zip(&other.gain_db) {
                *a = 0.5 * (*a + b);
            }
        }
        SeriesOp::Scale(k) => {
            if !k.is_finite() {
                return Err(invalid_arg("scale factor must be finite"));
            }
            out.frames.iter_mut().flatten().for_each(|x| *x *= k);
        }
        SeriesOp::OffsetDim { dim, delta } => {
            if dim >= s.d_z() {
                return Err(invalid_arg(format!(
                    "dimension {dim} out of range for d_z = {}",
                    s.d_z()
                )));
            }
            out.frames.iter_mut().for_each(|f| f[dim] += delta);
        }
        SeriesOp::Concat(other) => {
            if other.d_z() != s.d_z() {
                return Err(invalid_arg("cannot concatenate series with different d_z"));
            }
            out.frames.extend(other.frames.iter().cloned());
            out.gain_db.extend_from_slice(&other.gain_db);
        }
        SeriesOp::Reverse => {
            out.frames.reverse();
            out.gain_db.reverse();
        }
    }
    out.validate()?;
    Ok(out)
}

/// Parses an interpolation curve: `"v"` (constant), `"a:b"` (linear ramp from
/// `a` to `b`), or a comma-separated list (resampled linearly to `len`).
pub fn parse_curve(spec: &str, len: usize) -> Result<Vec<f64>> {
    if len == 0 {
        return Err(invalid_arg("curve length must be >= 1"));
    }
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| invalid_arg(format!("bad curve value `{s}`")))
    };
    let points: Vec<f64> = if let Some((a, b)) = spec.split_once(':') {
        vec![num(a)?, num(b)?]
    } else {
        spec.split(',').map(num).collect::<Result<_>>()?
    };
    Ok(sample_polyline(&points, len))
}

/// Samples a polyline through evenly spaced `points` at `len` evenly spaced positions.
pub fn sample_polyline(points: &[f64], len: usize) -> Vec<f64> {
    match points.len() {
        0 => vec![0.0; len],
        1 => vec![points[0]; len],
        n => (0..len)
            .map(|i| {
                let pos = if len == 1 {
                    0.0
                } else {
                    (i * (n - 1)) as f64 / (len - 1) as f64
                };
                let lo = (pos.floor() as usize).min(n - 2);
                let frac = pos - lo as f64;
                let (wa, wb) = weights(frac);
                wa * points[lo] + wb * points[lo + 1]
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn random_series(len: usize, d_z: usize, rng: &mut SplitMix64) -> LatentSeries {
        LatentSeries::new(
            (0..len)
                .map(|_| (0..d_z).map(|_| rng.uniform(-3.0, 3.0)).collect())
                .collect(),
            (0..len).map(|_| rng.uniform(-40.0, 0.0)).collect(),
            DspParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn endpoints_and_midpoint() {
        let mut rng = SplitMix64::new(1);
        let a = random_series(6, 4, &mut rng);
        let b = random_series(6, 4, &mut rng);
        assert_eq!(interpolate(&a, &b, &[0.0; 6]).unwrap(), a);
        assert_eq!(interpolate(&a, &b, &[1.0; 6]).unwrap(), b);
        let mid = interpolate(&a, &b, &[0.5; 6]).unwrap();
        for i in 0..6 {
            for d in 0..4 {
                assert_eq!(mid.frames[i][d], (a.frames[i][d] + b.frames[i][d]) / 2.0);
            }
        }
    }

    #[test]
    fn interpolation_errors() {
        let mut rng = SplitMix64::new(2);
        let a = random_series(5, 3, &mut rng);
        let b = random_series(4, 3, &mut rng);
        assert!(interpolate(&a, &b, &[0.0; 5]).is_err());
        let b = random_series(5, 3, &mut rng);
        assert!(interpolate(&a, &b, &[0.0; 4]).is_err());
        assert!(interpolate(&a, &b, &[0.0, 0.2, 1.1, 0.0, 0.0]).is_err());
        assert!(interpolate(&a, &b, &[0.0, -0.1, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn resample_cases() {
        let mut rng = SplitMix64::new(3);
        let s = random_series(7, 3, &mut rng);
        assert_eq!(resample_series(&s, 7).unwrap(), s);
        let two = random_series(2, 3, &mut rng);
        let one = resample_series(&two, 1).unwrap();
        assert_eq!(one.frames, vec![two.frames[0].clone()]);
        let c = LatentSeries::new(vec![vec![1.5, -2.0]; 4], vec![-6.0; 4], DspParams::default())
            .unwrap();
        for n in [1, 2, 3, 9, 17] {
            let r = resample_series(&c, n).unwrap();
            assert_eq!(r.len(), n);
            assert!(r.frames.iter().all(|f| f == &vec![1.5, -2.0]));
            assert!(r.gain_db.iter().all(|&g| g == -6.0));
        }
        assert!(resample_series(&c, 0).is_err());
    }

    #[test]
    fn arithmetic_identities_and_errors() {
        let mut rng = SplitMix64::new(4);
        let s = random_series(5, 3, &mut rng);
        assert_eq!(series_arith(&s, SeriesOp::Scale(1.0)).unwrap(), s);
        assert_eq!(
            series_arith(&s, SeriesOp::OffsetDim { dim: 0, delta: 0.0 }).unwrap(),
            s
        );
        let r = series_arith(&s, SeriesOp::Reverse).unwrap();
        assert_eq!(series_arith(&r, SeriesOp::Reverse).unwrap(), s);
        assert!(series_arith(&s, SeriesOp::OffsetDim { dim: 3, delta: 1.0 }).is_err());
        let other = random_series(4, 3, &mut rng);
        assert!(series_arith(&s, SeriesOp::Add(&other)).is_err());
        let cat = series_arith(&s, SeriesOp::Concat(&other)).unwrap();
        assert_eq!(cat.len(), 9);
        assert_eq!(cat.frames[5], other.frames[0]);
        let wide = random_series(4, 2, &mut rng);
        assert!(series_arith(&s, SeriesOp::Concat(&wide)).is_err());
        let same = random_series(5, 3, &mut rng);
        let sum = series_arith(&s, SeriesOp::Add(&same)).unwrap();
        assert_eq!(sum.frames[2][1], s.frames[2][1] + same.frames[2][1]);
        assert_eq!(sum.gain_db[2], 0.5 * (s.gain_db[2] + same.gain_db[2]));
        let scaled = series_arith(&s, SeriesOp::Scale(2.0)).unwrap();
        assert_eq!(scaled.gain_db, s.gain_db);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let mut rng = SplitMix64::new(5);
        let s = random_series(3, 4, &mut rng);
        let text = s.to_json();
        for key in ["\"frames\"", "\"gain_db\"", "\"d_z\"", "\"hop\"", "\"sr\""] {
            assert!(text.contains(key));
        }
        assert_eq!(LatentSeries::from_json(&text).unwrap(), s);
        assert!(LatentSeries::from_json("{").is_err());
        let bad = text.replace("\"d_z\":4", "\"d_z\":5");
        assert!(LatentSeries::from_json(&bad).is_err());
    }

    #[test]
    fn curve_parsing() {
        assert_eq!(parse_curve("0:1", 3).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_curve("0.25", 2).unwrap(), vec![0.25, 0.25]);
        assert_eq!(parse_curve("0,1,0", 5).unwrap(), vec![0.0, 0.5, 1.0, 0.5, 0.0]);
        assert!(parse_curve("x:1", 3).is_err());
    }

    proptest! {
        #[test]
        fn swap_symmetry_is_exact(seed in any::<u64>(), ts in proptest::collection::vec(0.0f64..=1.0, 1..12)) {
            let mut rng = SplitMix64::new(seed);
            let a = random_series(ts.len(), 5, &mut rng);
            let b = random_series(ts.len(), 5, &mut rng);
            let flipped: Vec<f64> = ts.iter().map(|t| 1.0 - t).collect();
            prop_assert_eq!(interpolate(&a, &b, &ts).unwrap(), {
                let mut r = interpolate(&b, &a, &flipped).unwrap();
                r.params = a.params;
                r
            });
        }

        #[test]
        fn interpolant_lies_on_segment(seed in any::<u64>(), t in 0.0f64..=1.0) {
            let mut rng = SplitMix64::new(seed);
            let a = random_series(3, 6, &mut rng);
            let b = random_series(3, 6, &mut rng);
            let z = interpolate(&a, &b, &[t; 3]).unwrap();
            for i in 0..3 {
                let num: f64 = z.frames[i].iter().zip(&a.frames[i]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                let den: f64 = b.frames[i].iter().zip(&a.frames[i]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                prop_assume!(den > 1e-6);
                prop_assert!((num / den - t).abs() <= 1e-12);
            }
        }
    }
}
