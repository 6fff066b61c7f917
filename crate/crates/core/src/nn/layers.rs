use super::tensor::{gemm, Param, Tensor};
use crate::error::{invalid_arg, invalid_state, Result};
use crate::rng::SplitMix64;

/// Fully connected layer, `y = x W + b` with `W` of shape `[in, out]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Dense {
    /// Glorot-uniform weights in `±sqrt(6 / (in + out))`, zero bias.
    pub fn new(name: &str, inputs: usize, outputs: usize, rng: &mut SplitMix64) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let w: Vec<f64> = (0..inputs * outputs)
            .map(|_| rng.uniform(-limit, limit))
            .collect();
        Self::from_parts(
            name,
            Tensor::from_vec(&[inputs, outputs], w).expect("shape"),
            Tensor::zeros(&[1, outputs]),
        )
    }

    pub fn from_parts(name: &str, weight: Tensor, bias: Tensor) -> Self {
        Self {
            weight: Param::new(format!("{name}.weight"), weight),
            bias: Param::new(format!("{name}.bias"), bias),
            input: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.cols()
    }

    /// Forward pass without recording anything; usable on shared references.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        if x.dims().len() != 2 || x.cols() != self.inputs() {
            return Err(invalid_arg(format!(
                "dense `{}` expects [batch, {}], got {:?}",
                self.weight.name,
                self.inputs(),
                x.dims()
            )));
        }
        let mut y = Tensor::zeros(&[x.rows(), self.outputs()]);
        let b = self.bias.value.data();
        for i in 0..x.rows() {
            y.row_mut(i).copy_from_slice(b);
        }
        gemm(1.0, x, false, &self.weight.value, false, 1.0, &mut y);
        Ok(y)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    /// Accumulates `dW += x^T g`, `db += sum_rows g` and returns `g W^T`.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self.input.take().ok_or_else(|| {
            invalid_state(format!("backward on `{}` without a forward pass", self.weight.name))
        })?;
        if grad_out.dims() != [x.rows(), self.outputs()] {
            return Err(invalid_arg(format!(
                "upstream gradient {:?} does not match output [{}, {}]",
                grad_out.dims(),
                x.rows(),
                self.outputs()
            )));
        }
        gemm(1.0, &x, true, grad_out, false, 1.0, &mut self.weight.grad);
        let db = self.bias.grad.data_mut();
        for i in 0..grad_out.rows() {
            for (d, g) in db.iter_mut().zip(grad_out.row(i)) {
                *d += g;
            }
        }
        let mut gx = Tensor::zeros(&[x.rows(), self.inputs()]);
        gemm(1.0, grad_out, false, &self.weight.value, true, 0.0, &mut gx);
        Ok(gx)
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tanh {
    output: Option<Tensor>,
}

impl Tanh {
    pub fn infer(x: &Tensor) -> Tensor {
        x.map(f64::tanh)
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let y = Self::infer(x);
        self.output = Some(y.clone());
        y
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let y = self
            .output
            .take()
            .ok_or_else(|| invalid_state("tanh backward without a forward pass"))?;
        y.same_shape(grad_out)?;
        let data = y
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(y, g)| g * (1.0 - y * y))
            .collect();
        Tensor::from_vec(y.dims(), data)
    }
}

/// Identity on the way forward; multiplies the upstream gradient by `-lambda`
/// on the way back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReversal {
    pub lambda: f64,
}

impl GradientReversal {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(invalid_arg(format!("reversal strength {lambda} must be finite and >= 0")));
        }
        Ok(Self { lambda })
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.clone()
    }

    pub fn backward(&self, grad_out: &Tensor) -> Tensor {
        grad_out.scale(-self.lambda)
    }
}

/// Clamps log-variances into `[min, max]`; gradient flows only where the input
/// was inside the interval.
#[derive(Debug, Clone)]
pub struct LogvarClamp {
    pub min: f64,
    pub max: f64,
    mask: Option<Vec<bool>>,
}

impl LogvarClamp {
    pub fn new(min: f64, max: f64) -> Self {
        Self {
            min,
            max,
            mask: None,
        }
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        x.map(|v| v.clamp(self.min, self.max))
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        self.mask = Some(
            x.data()
                .iter()
                .map(|&v| v >= self.min && v <= self.max)
                .collect(),
        );
        self.infer(x)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let mask = self
            .mask
            .take()
            .ok_or_else(|| invalid_state("clamp backward without a forward pass"))?;
        if mask.len() != grad_out.len() {
            return Err(invalid_arg("clamp gradient shape mismatch"));
        }
        let data = grad_out
            .data()
            .iter()
            .zip(&mask)
            .map(|(&g, &keep)| if keep { g } else { 0.0 })
            .collect();
        Tensor::from_vec(grad_out.dims(), data)
    }
}

/// `z = mu + exp(logvar / 2) * noise`, with noise supplied by the caller.
#[derive(Debug, Clone, Default)]
pub struct Reparameterize {
    cache: Option<(Tensor, Tensor)>,
}

impl Reparameterize {
    pub fn infer(mu: &Tensor, logvar: &Tensor, noise: &Tensor) -> Result<Tensor> {
        mu.same_shape(logvar)?;
        mu.same_shape(noise)?;
        let data = mu
            .data()
            .iter()
            .zip(logvar.data())
            .zip(noise.data())
            .map(|((m, lv), n)| m + (0.5 * lv).exp() * n)
            .collect();
        Tensor::from_vec(mu.dims(), data)
    }

    pub fn forward(&mut self, mu: &Tensor, logvar: &Tensor, noise: &Tensor) -> Result<Tensor> {
        let z = Self::infer(mu, logvar, noise)?;
        self.cache = Some((logvar.clone(), noise.clone()));
        Ok(z)
    }

    /// Returns `(d mu, d logvar)`.
    pub fn backward(&mut self, grad_z: &Tensor) -> Result<(Tensor, Tensor)> {
        let (logvar, noise) = self
            .cache
            .take()
            .ok_or_else(|| invalid_state("reparameterize backward without a forward pass"))?;
        logvar.same_shape(grad_z)?;
        let dlv = grad_z
            .data()
            .iter()
            .zip(logvar.data())
            .zip(noise.data())
            .map(|((g, lv), n)| g * 0.5 * (0.5 * lv).exp() * n)
            .collect();
        Ok((grad_z.clone(), Tensor::from_vec(grad_z.dims(), dlv)?))
    }
}
