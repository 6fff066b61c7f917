use std::f64::consts::TAU;

use crate::error::{invalid_arg, Result};

/// Periodic Hann window, `w[j] = 0.5 (1 - cos(2 pi j / n))`.
pub fn hann_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 || n % 2 != 0 {
        return Err(invalid_arg(format!("window length {n} must be even and >= 2")));
    }
    Ok((0..n)
        .map(|j| 0.5 * (1.0 - (TAU * j as f64 / n as f64).cos()))
        .collect())
}

/// Overlap-added window sum over one period, `sum_m w[j + m*hop]` for `j` in `0..hop`.
pub fn cola_sum(window: &[f64], hop: usize) -> Vec<f64> {
    (0..hop)
        .map(|j| window.iter().skip(j).step_by(hop).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        let w = hann_window(4).unwrap();
        let expected = [0.0, 0.5, 1.0, 0.5];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let w = hann_window(2).unwrap();
        assert!(w[0].abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_odd_and_tiny() {
        assert!(hann_window(3).is_err());
        assert!(hann_window(0).is_err());
        assert!(hann_window(1).is_err());
    }

    #[test]
    fn constant_overlap_add_at_quarter_hop() {
        for n in [8usize, 64, 256, 1024] {
            let w = hann_window(n).unwrap();
            let hop = n / 4;
            // Brute force: lay shifted copies on a long line and inspect the interior.
            let len = 12 * n;
            let mut acc = vec![0.0; len];
            let mut start = 0;
            while start + n <= len {
                for (j, v) in w.iter().enumerate() {
                    acc[start + j] += v;
                }
                start += hop;
            }
            let mean: f64 = w.iter().sum::<f64>() / hop as f64;
            for v in &acc[n..len - n] {
                assert!((v - mean).abs() < 1e-12, "n={n}: {v} vs {mean}");
                assert!((v / mean - 1.0).abs() < 1e-12);
            }
            for v in cola_sum(&w, hop) {
                assert!((v - 2.0).abs() < 1e-12);
            }
        }
    }
}
