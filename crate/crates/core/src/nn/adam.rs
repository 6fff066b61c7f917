use super::tensor::Param;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. One optimizer instance owns the step counter for
/// every parameter it updates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter and clears the gradients.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        if let Some(p) = params.iter().find(|p| !p.grad.is_finite()) {
            return Err(Error::TrainingDiverged(format!(
                "non-finite gradient in `{}`",
                p.name
            )));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for p in params.iter_mut() {
            let Param {
                value,
                grad,
                m,
                v,
                sparse_rows,
                ..
            } = &mut **p;
            let width = if *sparse_rows && value.dims().len() == 2 {
                value.cols()
            } else {
                value.len().max(1)
            };
            let chunks = value
                .data_mut()
                .chunks_mut(width)
                .zip(grad.data().chunks(width))
                .zip(m.data_mut().chunks_mut(width))
                .zip(v.data_mut().chunks_mut(width));
            for (((w, g), m), v) in chunks {
                if *sparse_rows && g.iter().all(|&x| x == 0.0) {
                    continue;
                }
                for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
            grad.fill(0.0);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn scalar(v: f64) -> Param {
        Param::new("w", Tensor::row_vector(vec![v]))
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = scalar(3.0);
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..10 {
            adam.step(&mut [&mut p]).unwrap();
        }
        assert_eq!(p.value.data()[0], 3.0);
    }

    #[test]
    fn sparse_rows_leave_untouched_rows_exactly() {
        let init = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let mut p = Param::new("codes", init.clone());
        p.sparse_rows = true;
        let mut adam = Adam::new(AdamConfig::default());
        p.grad.row_mut(0).copy_from_slice(&[0.5, -0.5]);
        adam.step(&mut [&mut p]).unwrap();
        // Row 0 has momentum now; a later step without gradient on it must not move it.
        let after_first = p.value.clone();
        p.grad.row_mut(2).copy_from_slice(&[1.0, 0.0]);
        adam.step(&mut [&mut p]).unwrap();
        assert_eq!(p.value.row(0), after_first.row(0));
        assert_eq!(p.value.row(1), init.row(1));
        assert_ne!(p.value.row(2), init.row(2));
        // Column 1 of row 2 has zero gradient but belongs to an active row.
        assert_eq!(p.value.row(2)[1], 6.0);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(1.0);
        p.grad.fill(1.0);
        let mut adam = Adam::new(AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        });
        adam.step(&mut [&mut p]).unwrap();
        // m_hat = 1, v_hat = 1, update = 0.1 / (1 + 1e-8).
        let want = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((p.value.data()[0] - want).abs() < 1e-15);
        assert_eq!(p.grad.data()[0], 0.0);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut p = Param::new("w", Tensor::row_vector(vec![3.0, -2.0, 1.5]));
        let loss = |w: &[f64]| w.iter().map(|x| 0.5 * x * x).sum::<f64>();
        let initial = loss(p.value.data());
        let mut adam = Adam::new(AdamConfig {
            lr: 0.05,
            ..AdamConfig::default()
        });
        for _ in 0..200 {
            let g = p.value.data().to_vec();
            p.grad.data_mut().copy_from_slice(&g);
            adam.step(&mut [&mut p]).unwrap();
        }
        assert!(loss(p.value.data()) < 0.01 * initial);
    }

    #[test]
    fn non_finite_gradient_diverges() {
        let mut p = scalar(1.0);
        p.grad.fill(f64::NAN);
        let mut adam = Adam::new(AdamConfig::default());
        assert!(matches!(
            adam.step(&mut [&mut p]),
            Err(Error::TrainingDiverged(_))
        ));
        assert_eq!(p.value.data()[0], 1.0);
    }
}
