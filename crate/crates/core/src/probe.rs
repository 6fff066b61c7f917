//! Affine least-squares probe measuring how much of a scalar label is
//! linearly recoverable from feature vectors.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid_arg, Result};
use crate::rng::SplitMix64;

/// Affine map `w . x + b` fitted by least squares.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearProbe {
    /// Fits by SVD least squares; rank-deficient features are handled by the
    /// pseudo-inverse.
    pub fn fit(features: &[Vec<f64>], labels: &[f64]) -> Result<Self> {
        let n = features.len();
        if n == 0 || n != labels.len() {
            return Err(invalid_arg("probe needs one label per nonempty feature row"));
        }
        let d = features[0].len();
        if features.iter().any(|f| f.len() != d) {
            return Err(invalid_arg("ragged probe features"));
        }
        let a = DMatrix::from_fn(n, d + 1, |i, j| if j < d { features[i][j] } else { 1.0 });
        let y = DVector::from_column_slice(labels);
        let svd = a.svd(true, true);
        let sol = svd
            .solve(&y, 1e-12)
            .map_err(|e| invalid_arg(format!("probe solve failed: {e}")))?;
        Ok(Self {
            weights: sol.as_slice()[..d].to_vec(),
            bias: sol[d],
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// Coefficient of determination `1 - SSE / SST` on the given rows.
    pub fn r_squared(&self, features: &[Vec<f64>], labels: &[f64]) -> f64 {
        r_squared(
            &features.iter().map(|f| self.predict(f)).collect::<Vec<_>>(),
            labels,
        )
    }
}

pub fn r_squared(pred: &[f64], labels: &[f64]) -> f64 {
    let n = labels.len() as f64;
    let mean = labels.iter().sum::<f64>() / n;
    let sst: f64 = labels.iter().map(|y| (y - mean).powi(2)).sum();
    let sse: f64 = pred.iter().zip(labels).map(|(p, y)| (p - y).powi(2)).sum();
    if sst == 0.0 {
        return if sse == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - sse / sst
}

/// Fits on a random half and reports R² on the other half.
pub fn held_out_r_squared(features: &[Vec<f64>], labels: &[f64], seed: u64) -> Result<f64> {
    if features.len() < 4 {
        return Err(invalid_arg("held-out probe needs at least 4 rows"));
    }
    let mut idx: Vec<usize> = (0..features.len()).collect();
    SplitMix64::new(seed).shuffle(&mut idx);
    let (train, test) = idx.split_at(idx.len() / 2);
    let pick = |ids: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            ids.iter().map(|&i| features[i].clone()).collect(),
            ids.iter().map(|&i| labels[i]).collect(),
        )
    };
    let (xf, yf) = pick(train);
    let (xt, yt) = pick(test);
    Ok(LinearProbe::fit(&xf, &yf)?.r_squared(&xt, &yt))
}
