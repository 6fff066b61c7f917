//! Vector-quantized autoencoder over gain-normalized frames.
//!
//! Frames are split into a unit-norm shape and an L2 gain. Only the shape is
//! encoded and snapped to the nearest codebook row; the gain is reapplied to
//! the decoded shape in the linear-magnitude domain.

use crate::corpus::FrameDataset;
use crate::dsp::{DspParams, SpectralFrame};
use crate::error::{invalid_arg, invalid_state, Error, Result};
use crate::frame_norm::{log_to_input, normalize_frame, output_to_log};
use crate::nn::{mse_loss, Adam, AdamConfig, Dense, Param, Tanh, Tensor};
use crate::rng::SplitMix64;

/// Spread of the noise added to a code when it is moved onto an encoder output.
pub const REINIT_NOISE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteConfig {
    pub k: usize,
    pub d_z: usize,
    pub hidden: usize,
    pub beta_commit: f64,
}

impl Default for DiscreteConfig {
    fn default() -> Self {
        Self {
            k: 64,
            d_z: 16,
            hidden: 256,
            beta_commit: 0.25,
        }
    }
}

/// Index of the nearest row of `codes` to `z` in squared Euclidean distance,
/// and that distance. Ties go to the lowest index.
pub fn nearest_code(codes: &Tensor, z: &[f64]) -> Result<(usize, f64)> {
    if codes.dims().len() != 2 || codes.rows() == 0 {
        return Err(invalid_state("empty codebook"));
    }
    if z.len() != codes.cols() {
        return Err(invalid_arg(format!(
            "latent has {} dims, codebook has {}",
            z.len(),
            codes.cols()
        )));
    }
    let mut best = (0, f64::INFINITY);
    for j in 0..codes.rows() {
        let d: f64 = codes
            .row(j)
            .iter()
            .zip(z)
            .map(|(q, v)| (v - q) * (v - q))
            .sum();
        if d < best.1 {
            best = (j, d);
        }
    }
    if !best.1.is_finite() {
        return Err(invalid_arg("non-finite latent"));
    }
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct Codebook {
    pub vectors: Param,
    pub usage_counts: Vec<u64>,
    /// Training steps since the counters were last reset.
    pub window_steps: u64,
}

impl Codebook {
    fn new(k: usize, d_z: usize, rng: &mut SplitMix64) -> Self {
        let data = (0..k * d_z).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut vectors = Param::new("codebook", Tensor::from_vec(&[k, d_z], data).expect("shape"));
        vectors.sparse_rows = true;
        Self {
            vectors,
            usage_counts: vec![0; k],
            window_steps: 0,
        }
    }

    pub fn from_vectors(vectors: Tensor) -> Result<Self> {
        if vectors.dims().len() != 2 || vectors.rows() == 0 || vectors.cols() == 0 {
            return Err(invalid_arg("codebook must be a nonempty k x d_z matrix"));
        }
        if !vectors.is_finite() {
            return Err(invalid_arg("codebook rows must be finite"));
        }
        let k = vectors.rows();
        let mut vectors = Param::new("codebook", vectors);
        vectors.sparse_rows = true;
        Ok(Self {
            vectors,
            usage_counts: vec![0; k],
            window_steps: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.vectors.value.rows()
    }

    pub fn code(&self, j: usize) -> &[f64] {
        self.vectors.value.row(j)
    }

    /// `(index, q^index, squared distance)`; does not touch the counters.
    pub fn quantize(&self, z: &[f64]) -> Result<(usize, Vec<f64>, f64)> {
        let (j, d) = nearest_code(&self.vectors.value, z)?;
        Ok((j, self.code(j).to_vec(), d))
    }

    /// Like [`Codebook::quantize`] but records the hit.
    pub fn quantize_counting(&mut self, z: &[f64]) -> Result<(usize, Vec<f64>, f64)> {
        let out = self.quantize(z)?;
        self.usage_counts[out.0] += 1;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VqLosses {
    pub recon: f64,
    pub codebook: f64,
    pub commit: f64,
}

#[derive(Debug, Clone)]
pub struct DiscreteModel {
    pub config: DiscreteConfig,
    pub params: DspParams,
    enc_hidden: Dense,
    enc_act: Tanh,
    enc_out: Dense,
    pub codebook: Codebook,
    dec_hidden: Dense,
    dec_act: Tanh,
    dec_out: Dense,
    /// Encoder outputs of the latest training batch, used to relocate dead codes.
    recent: Vec<Vec<f64>>,
}

impl DiscreteModel {
    pub fn new(config: DiscreteConfig, params: DspParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let d_x = params.d_x();
        if config.k == 0 {
            return Err(invalid_arg("codebook size must be positive"));
        }
        if config.d_z == 0 || config.d_z >= d_x {
            return Err(invalid_arg(format!("d_z = {} must be in 1..{d_x}", config.d_z)));
        }
        if config.hidden == 0 {
            return Err(invalid_arg("hidden size must be positive"));
        }
        if !(config.beta_commit > 0.0) {
            return Err(invalid_arg("beta_commit must be > 0"));
        }
        let mut rng = SplitMix64::new(seed);
        Ok(Self {
            config,
            params,
            enc_hidden: Dense::new("encoder.hidden", d_x, config.hidden, &mut rng),
            enc_act: Tanh::default(),
            enc_out: Dense::new("encoder.out", config.hidden, config.d_z, &mut rng),
            codebook: Codebook::new(config.k, config.d_z, &mut rng),
            dec_hidden: Dense::new("decoder.hidden", config.d_z, config.hidden, &mut rng),
            dec_act: Tanh::default(),
            dec_out: Dense::new("decoder.out", config.hidden, d_x, &mut rng),
            recent: Vec::new(),
        })
    }

    pub fn d_x(&self) -> usize {
        self.params.d_x()
    }

    pub fn k(&self) -> usize {
        self.codebook.k()
    }

    fn shapes(&self, frames: &[&SpectralFrame]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let mut units = Vec::with_capacity(frames.len());
        let mut gains = Vec::with_capacity(frames.len());
        for f in frames {
            f.validate(self.d_x())?;
            let (u, g) = normalize_frame(f);
            units.push(u);
            gains.push(g);
        }
        Ok((units, gains))
    }

    fn input_tensor(units: &[Vec<f64>]) -> Result<Tensor> {
        let rows: Vec<Vec<f64>> = units
            .iter()
            .map(|u| u.iter().map(|&v| log_to_input(v)).collect())
            .collect();
        Tensor::from_rows(&rows)
    }

    /// Continuous encoder outputs `z_e` for a batch, plus the frame gains.
    pub fn encode_batch(&self, frames: &[&SpectralFrame]) -> Result<(Tensor, Vec<f64>)> {
        let (units, gains) = self.shapes(frames)?;
        let x = Self::input_tensor(&units)?;
        let z = self
            .enc_out
            .infer(&Tanh::infer(&self.enc_hidden.infer(&x)?))?;
        Ok((z, gains))
    }

    pub fn encode(&self, frame: &SpectralFrame) -> Result<Vec<f64>> {
        Ok(self.encode_batch(&[frame])?.0.into_data())
    }

    /// Selected code and L2 gain for each frame.
    pub fn encode_codes(&self, frames: &[&SpectralFrame]) -> Result<Vec<(usize, f64)>> {
        let (z, gains) = self.encode_batch(frames)?;
        (0..z.rows())
            .map(|i| Ok((self.codebook.quantize(z.row(i))?.0, gains[i])))
            .collect()
    }

    /// Decoder output for latents: unit-shape log magnitudes per row.
    pub fn decode_shape(&self, z: &Tensor) -> Result<Tensor> {
        let y = self
            .dec_out
            .infer(&Tanh::infer(&self.dec_hidden.infer(z)?))?;
        Ok(y.map(output_to_log))
    }

    /// Linear magnitudes of code `index`, rescaled to unit L2 norm and then
    /// multiplied by `gain`.
    pub fn decode_code_linear(&self, index: usize, gain: f64) -> Result<Vec<f64>> {
        self.decode_codes_linear(&[index], &[gain])
            .map(|mut v| v.remove(0))
    }

    pub fn decode_codes_linear(&self, indices: &[usize], gains: &[f64]) -> Result<Vec<Vec<f64>>> {
        if indices.len() != gains.len() {
            return Err(invalid_arg("one gain per code index is required"));
        }
        if let Some(&j) = indices.iter().find(|&&j| j >= self.k()) {
            return Err(invalid_arg(format!("code index {j} out of range 0..{}", self.k())));
        }
        if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(invalid_arg("gains must be finite and >= 0"));
        }
        let rows: Vec<Vec<f64>> = indices.iter().map(|&j| self.codebook.code(j).to_vec()).collect();
        let shapes = self.decode_shape(&Tensor::from_rows(&rows)?)?;
        Ok((0..shapes.rows())
            .map(|i| {
                let lin = SpectralFrame::from_log_mags(shapes.row(i).to_vec(), i).linear();
                let norm = lin.iter().map(|m| m * m).sum::<f64>().sqrt();
                let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
                lin.iter().map(|m| gains[i] * (m * scale)).collect()
            })
            .collect())
    }

    pub fn decode_code(&self, index: usize, gain: f64) -> Result<SpectralFrame> {
        Ok(SpectralFrame::from_linear(&self.decode_code_linear(index, gain)?, 0))
    }

    pub fn decode_codes(&self, indices: &[usize], gains: &[f64]) -> Result<Vec<SpectralFrame>> {
        Ok(self
            .decode_codes_linear(indices, gains)?
            .iter()
            .enumerate()
            .map(|(i, lin)| SpectralFrame::from_linear(lin, i))
            .collect())
    }

    pub fn encoder_params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        v.extend(self.enc_hidden.params());
        v.extend(self.enc_out.params());
        v
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = self.encoder_params();
        v.push(&self.codebook.vectors);
        v.extend(self.dec_hidden.params());
        v.extend(self.dec_out.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = Vec::new();
        v.extend(self.enc_hidden.params_mut());
        v.extend(self.enc_out.params_mut());
        v.push(&mut self.codebook.vectors);
        v.extend(self.dec_hidden.params_mut());
        v.extend(self.dec_out.params_mut());
        v
    }

    fn zero_grads(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    /// Gradient of the reconstruction loss with respect to the decoder input,
    /// evaluated at `z` (rows), against the unit shapes of `frames`.
    pub fn recon_latent_gradient(&self, frames: &[&SpectralFrame], z: &Tensor) -> Result<Tensor> {
        let (units, _) = self.shapes(frames)?;
        let mut probe = self.clone();
        let dh = probe.dec_hidden.forward(z)?;
        let dh = probe.dec_act.forward(&dh);
        let y = probe.dec_out.forward(&dh)?;
        let (_, g) = mse_loss(&y.map(output_to_log), &Tensor::from_rows(&units)?)?;
        let g = probe.dec_out.backward(&g.scale(-crate::dsp::log_floor()))?;
        let g = probe.dec_act.backward(&g)?;
        probe.dec_hidden.backward(&g)
    }

    /// Encoder parameter gradients produced by an upstream gradient on `z_e`.
    pub fn encoder_gradients_from(&self, frames: &[&SpectralFrame], grad_z: &Tensor) -> Result<Vec<Tensor>> {
        let (units, _) = self.shapes(frames)?;
        let mut probe = self.clone();
        probe.zero_grads();
        let h = probe.enc_hidden.forward(&Self::input_tensor(&units)?)?;
        let h = probe.enc_act.forward(&h);
        probe.enc_out.forward(&h)?;
        let g = probe.enc_out.backward(grad_z)?;
        let g = probe.enc_act.backward(&g)?;
        probe.enc_hidden.backward(&g)?;
        Ok(probe.encoder_params().iter().map(|p| p.grad.clone()).collect())
    }

    /// Forward and backward for one batch; gradients are left in the parameters.
    /// `commit_and_codebook` off gives the reconstruction term alone.
    fn forward_backward(
        &mut self,
        frames: &[&SpectralFrame],
        count_usage: bool,
        commit_and_codebook: bool,
    ) -> Result<VqLosses> {
        if frames.is_empty() {
            return Err(invalid_arg("batch must be nonempty"));
        }
        let (units, _) = self.shapes(frames)?;
        let n = frames.len();
        let d_z = self.config.d_z;
        let h = self.enc_hidden.forward(&Self::input_tensor(&units)?)?;
        let h = self.enc_act.forward(&h);
        let z_e = self.enc_out.forward(&h)?;

        let mut z_q = Tensor::zeros(&[n, d_z]);
        let mut chosen = Vec::with_capacity(n);
        for i in 0..n {
            let (j, q, _) = if count_usage {
                self.codebook.quantize_counting(z_e.row(i))?
            } else {
                self.codebook.quantize(z_e.row(i))?
            };
            z_q.row_mut(i).copy_from_slice(&q);
            chosen.push(j);
        }

        let dh = self.dec_hidden.forward(&z_q)?;
        let dh = self.dec_act.forward(&dh);
        let y = self.dec_out.forward(&dh)?;
        let (recon, g) = mse_loss(&y.map(output_to_log), &Tensor::from_rows(&units)?)?;
        let g = self.dec_out.backward(&g.scale(-crate::dsp::log_floor()))?;
        let g = self.dec_act.backward(&g)?;
        // Straight-through: the decoder-input gradient is passed to z_e unchanged.
        let mut grad_ze = self.dec_hidden.backward(&g)?;

        let mut sq = 0.0;
        for i in 0..n {
            let q = z_q.row(i);
            sq += z_e.row(i).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        let sq = sq / n as f64;
        let beta = self.config.beta_commit;
        if commit_and_codebook {
            let cb_grad = self.codebook.vectors.grad.data_mut();
            for (i, &j) in chosen.iter().enumerate() {
                let ze = z_e.row(i);
                let q = z_q.row(i);
                for c in 0..d_z {
                    let diff = ze[c] - q[c];
                    cb_grad[j * d_z + c] -= 2.0 * diff / n as f64;
                    grad_ze.row_mut(i)[c] += beta * 2.0 * diff / n as f64;
                }
            }
        }

        let g = self.enc_out.backward(&grad_ze)?;
        let g = self.enc_act.backward(&g)?;
        self.enc_hidden.backward(&g)?;

        if count_usage {
            self.recent = z_e.to_rows();
        }
        let losses = VqLosses {
            recon,
            codebook: sq,
            commit: beta * sq,
        };
        if !(recon.is_finite() && sq.is_finite()) {
            return Err(Error::TrainingDiverged(format!("non-finite loss {losses:?}")));
        }
        Ok(losses)
    }

    /// Losses for `frames` computed with the inference kernels only.
    pub fn losses(&self, frames: &[&SpectralFrame]) -> Result<VqLosses> {
        let (units, _) = self.shapes(frames)?;
        let (z_e, _) = self.encode_batch(frames)?;
        let mut z_q = Tensor::zeros(z_e.dims());
        let mut sq = 0.0;
        for i in 0..z_e.rows() {
            let (_, q, dist) = self.codebook.quantize(z_e.row(i))?;
            z_q.row_mut(i).copy_from_slice(&q);
            sq += dist;
        }
        let sq = sq / frames.len() as f64;
        let (recon, _) = mse_loss(&self.decode_shape(&z_q)?, &Tensor::from_rows(&units)?)?;
        Ok(VqLosses {
            recon,
            codebook: sq,
            commit: self.config.beta_commit * sq,
        })
    }

    /// Gradients of one training step for every parameter, in
    /// [`DiscreteModel::params`] order, without updating anything.
    pub fn step_gradients(&mut self, frames: &[&SpectralFrame]) -> Result<(VqLosses, Vec<Tensor>)> {
        self.zero_grads();
        let losses = self.forward_backward(frames, false, true)?;
        let grads = self.params().iter().map(|p| p.grad.clone()).collect();
        self.zero_grads();
        Ok((losses, grads))
    }

    /// Encoder gradients of the reconstruction term through the straight-through path.
    pub fn straight_through_encoder_gradients(&mut self, frames: &[&SpectralFrame]) -> Result<Vec<Tensor>> {
        self.zero_grads();
        self.forward_backward(frames, false, false)?;
        let grads = self.encoder_params().iter().map(|p| p.grad.clone()).collect();
        self.zero_grads();
        Ok(grads)
    }

    /// Resets every code unused since the last reset to a random recent
    /// encoder output plus small noise, then clears the counters. Returns the
    /// number of codes moved.
    pub fn reinit_dead_codes(&mut self, rng: &mut SplitMix64) -> usize {
        if self.codebook.window_steps == 0 || self.recent.is_empty() {
            self.codebook.usage_counts.fill(0);
            self.codebook.window_steps = 0;
            return 0;
        }
        let mut moved = 0;
        for j in 0..self.k() {
            if self.codebook.usage_counts[j] > 0 {
                continue;
            }
            let src = &self.recent[rng.below(self.recent.len())];
            let row: Vec<f64> = src.iter().map(|v| v + REINIT_NOISE * rng.normal()).collect();
            self.codebook.vectors.value.row_mut(j).copy_from_slice(&row);
            self.codebook.vectors.reset_row_moments(j);
            moved += 1;
        }
        self.codebook.usage_counts.fill(0);
        self.codebook.window_steps = 0;
        moved
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteTrainer {
    pub model: DiscreteModel,
    adam: Adam,
    rng: SplitMix64,
    step: u64,
}

impl DiscreteTrainer {
    pub fn new(model: DiscreteModel, adam: AdamConfig, seed: u64) -> Self {
        Self {
            model,
            adam: Adam::new(adam),
            rng: SplitMix64::new(seed ^ 0x5EED_C0DE_B00C_0001),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn train_step(&mut self, frames: &[&SpectralFrame]) -> Result<VqLosses> {
        self.model.zero_grads();
        let losses = self.model.forward_backward(frames, true, true)?;
        self.adam.step(&mut self.model.params_mut())?;
        self.model.codebook.window_steps += 1;
        self.step += 1;
        Ok(losses)
    }

    pub fn reinit_dead_codes(&mut self) -> usize {
        self.model.reinit_dead_codes(&mut self.rng)
    }

    /// Shuffled mini-batch training; dead codes are relocated every
    /// `reinit_window` steps when set.
    pub fn fit(
        &mut self,
        data: &FrameDataset,
        steps: u64,
        batch_size: usize,
        reinit_window: Option<u64>,
        mut on_step: impl FnMut(u64, &VqLosses),
    ) -> Result<Vec<VqLosses>> {
        if data.is_empty() {
            return Err(invalid_arg("empty dataset"));
        }
        let mut history = Vec::with_capacity(steps as usize);
        let mut queue: Vec<Vec<usize>> = Vec::new();
        for _ in 0..steps {
            if queue.is_empty() {
                queue = data.batches(batch_size, &mut self.rng);
                queue.reverse();
            }
            let idx = queue.pop().expect("refilled");
            let frames: Vec<&SpectralFrame> = idx.iter().map(|&i| &data.frames[i]).collect();
            let losses = self.train_step(&frames)?;
            if let Some(w) = reinit_window {
                if w > 0 && self.step % w == 0 {
                    self.reinit_dead_codes();
                }
            }
            on_step(self.step, &losses);
            history.push(losses);
        }
        Ok(history)
    }
}
