//! Continuous VAE with a Gaussian prior and adversarial loudness removal.
//!
//! The encoder sees gain-normalized frames and a latent regressor tries to
//! recover loudness from `z` through a gradient-reversal node, pushing the
//! encoder toward loudness-free codes. Loudness re-enters only at the decoder,
//! both as an input condition and as the output gain.

use crate::dsp::{
    frame_signal, griffin_lim, log_floor, loudness_db, stft, AudioBuffer, DspParams, PhaseInit,
    SpectralFrame,
};
use crate::error::{invalid_arg, Error, Result};
use crate::frame_norm::{
    apply_gain, log_to_input, loudness_to_gain, normalize_frame, output_to_log,
};
use crate::latent::LatentSeries;
use crate::nn::{
    kl_gauss_std, mse_loss, Adam, AdamConfig, Dense, GradientReversal, LogvarClamp, Param,
    Reparameterize, Tanh, Tensor,
};
use crate::rng::SplitMix64;
use crate::corpus::FrameDataset;

pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 2.0;
/// Griffin-Lim iterations used when decoding series.
pub const DEFAULT_GL_ITERATIONS: usize = 32;
/// Seed of the initial phases used by every decoder-side phase reconstruction.
pub const GL_PHASE_SEED: u64 = 0x7153_C0DE;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousConfig {
    pub d_z: usize,
    pub hidden: usize,
    pub adv_hidden: usize,
    pub beta_kl: f64,
    pub lambda_adv: f64,
    /// Encoder sees gain-normalized frames; decoder is loudness conditioned.
    /// Off gives the plain baseline that must carry level in `z`.
    pub factor_loudness: bool,
}

impl Default for ContinuousConfig {
    fn default() -> Self {
        Self {
            d_z: 16,
            hidden: 256,
            adv_hidden: 64,
            beta_kl: 1e-3,
            lambda_adv: 1.0,
            factor_loudness: true,
        }
    }
}

/// Maps dB over [-100, 0] onto [-1, 1].
pub fn loudness_condition(db: f64) -> f64 {
    ((db + 50.0) / 50.0).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousLosses {
    pub recon: f64,
    pub kl: f64,
    pub adv: f64,
}

#[derive(Debug, Clone)]
pub struct ContinuousModel {
    pub config: ContinuousConfig,
    pub params: DspParams,
    enc_hidden: Dense,
    enc_act: Tanh,
    enc_out: Dense,
    clamp: LogvarClamp,
    reparam: Reparameterize,
    dec_hidden: Dense,
    dec_act: Tanh,
    dec_out: Dense,
    adv_hidden: Dense,
    adv_act: Tanh,
    adv_out: Dense,
}

/// What reaches the encoder from the adversarial branch during backward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryPath {
    /// Gradient reversal with the given strength (the training configuration).
    Reversed,
    /// Plain identity in place of the reversal node.
    Identity,
    /// Nothing reaches the encoder (adversary-only probing).
    Detached,
}

struct Batch {
    inputs: Tensor,
    targets: Tensor,
    cond: Tensor,
    adv_targets: Tensor,
}

impl ContinuousModel {
    pub fn new(config: ContinuousConfig, params: DspParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let d_x = params.d_x();
        if config.d_z == 0 || config.d_z >= d_x {
            return Err(invalid_arg(format!("d_z = {} must be in 1..{d_x}", config.d_z)));
        }
        if config.hidden == 0 || config.adv_hidden == 0 {
            return Err(invalid_arg("hidden sizes must be positive"));
        }
        if !(config.beta_kl >= 0.0) || !(config.lambda_adv >= 0.0) {
            return Err(invalid_arg("beta_kl and lambda_adv must be >= 0"));
        }
        let mut rng = SplitMix64::new(seed);
        let cond = usize::from(config.factor_loudness);
        Ok(Self {
            config,
            params,
            enc_hidden: Dense::new("encoder.hidden", d_x, config.hidden, &mut rng),
            enc_act: Tanh::default(),
            enc_out: Dense::new("encoder.out", config.hidden, 2 * config.d_z, &mut rng),
            clamp: LogvarClamp::new(LOGVAR_MIN, LOGVAR_MAX),
            reparam: Reparameterize::default(),
            dec_hidden: Dense::new("decoder.hidden", config.d_z + cond, config.hidden, &mut rng),
            dec_act: Tanh::default(),
            dec_out: Dense::new("decoder.out", config.hidden, d_x, &mut rng),
            adv_hidden: Dense::new("adversary.hidden", config.d_z, config.adv_hidden, &mut rng),
            adv_act: Tanh::default(),
            adv_out: Dense::new("adversary.out", config.adv_hidden, 1, &mut rng),
        })
    }

    pub fn d_x(&self) -> usize {
        self.params.d_x()
    }

    pub fn d_z(&self) -> usize {
        self.config.d_z
    }

    /// Width of the encoder's input layer; equal to `d_x`, so no label can enter it.
    pub fn encoder_input_width(&self) -> usize {
        self.enc_hidden.inputs()
    }

    fn encoder_features(&self, frame: &SpectralFrame) -> Result<Vec<f64>> {
        frame.validate(self.d_x())?;
        let shape = if self.config.factor_loudness {
            normalize_frame(frame).0
        } else {
            frame.log_mags.clone()
        };
        Ok(shape.into_iter().map(log_to_input).collect())
    }

    /// Reconstruction target: the gain-normalized shape, or the raw frame for the baseline.
    fn recon_target(&self, frame: &SpectralFrame) -> Vec<f64> {
        if self.config.factor_loudness {
            normalize_frame(frame).0
        } else {
            frame.log_mags.clone()
        }
    }

    fn encoder_input(&self, frames: &[&SpectralFrame]) -> Result<Tensor> {
        let rows = frames
            .iter()
            .map(|f| self.encoder_features(f))
            .collect::<Result<Vec<_>>>()?;
        Tensor::from_rows(&rows)
    }

    fn split_heads(&self, out: &Tensor) -> (Tensor, Tensor) {
        let d = self.config.d_z;
        (out.columns(0, d), out.columns(d, 2 * d))
    }

    /// Posterior mean and log-variance for a batch of frames.
    pub fn encode_batch(&self, frames: &[&SpectralFrame]) -> Result<(Tensor, Tensor)> {
        let x = self.encoder_input(frames)?;
        let h = Tanh::infer(&self.enc_hidden.infer(&x)?);
        let (mu, lv) = self.split_heads(&self.enc_out.infer(&h)?);
        Ok((mu, self.clamp.infer(&lv)))
    }

    pub fn encode(&self, frame: &SpectralFrame) -> Result<(Vec<f64>, Vec<f64>)> {
        let (mu, lv) = self.encode_batch(&[frame])?;
        Ok((mu.into_data(), lv.into_data()))
    }

    fn decoder_input(&self, z: &Tensor, loudness: &[f64]) -> Result<Tensor> {
        if self.config.factor_loudness {
            let cond = Tensor::from_vec(
                &[loudness.len(), 1],
                loudness.iter().map(|&l| loudness_condition(l)).collect(),
            )?;
            z.hconcat(&cond)
        } else {
            Ok(z.clone())
        }
    }

    fn finish_frame(&self, raw: &[f64], loudness: f64, index: usize) -> SpectralFrame {
        let shape: Vec<f64> = raw.iter().map(|&y| output_to_log(y)).collect();
        if self.config.factor_loudness {
            let gain = loudness_to_gain(loudness, self.params.fft_size);
            SpectralFrame::from_linear(&apply_gain(&shape, gain), index)
        } else {
            SpectralFrame::from_log_mags(shape.into_iter().map(|v| v.max(log_floor())).collect(), index)
        }
    }

    /// Decodes a batch of latents (rows of `z`) with their loudness conditions.
    pub fn decode_batch(&self, z: &Tensor, loudness_db: &[f64]) -> Result<Vec<SpectralFrame>> {
        if z.dims().len() != 2 || z.cols() != self.d_z() || z.rows() != loudness_db.len() {
            return Err(invalid_arg(format!(
                "decode expects [n, {}] latents with n loudness values, got {:?} and {}",
                self.d_z(),
                z.dims(),
                loudness_db.len()
            )));
        }
        if !z.is_finite() || loudness_db.iter().any(|l| !l.is_finite()) {
            return Err(invalid_arg("non-finite latent or loudness"));
        }
        let input = self.decoder_input(z, loudness_db)?;
        let y = self
            .dec_out
            .infer(&Tanh::infer(&self.dec_hidden.infer(&input)?))?;
        Ok((0..y.rows())
            .map(|i| self.finish_frame(y.row(i), loudness_db[i], i))
            .collect())
    }

    pub fn decode(&self, z: &[f64], loudness_db: f64) -> Result<SpectralFrame> {
        if z.len() != self.d_z() {
            return Err(invalid_arg(format!("latent has {} dims, expected {}", z.len(), self.d_z())));
        }
        let t = Tensor::row_vector(z.to_vec());
        Ok(self.decode_batch(&t, &[loudness_db])?.remove(0))
    }

    /// Encodes every analysis window of `audio` to its posterior mean, with
    /// the per-window loudness as the gain sidechain.
    pub fn encode_series(&self, audio: &AudioBuffer) -> Result<LatentSeries> {
        let p = self.params;
        if audio.sample_rate != p.sample_rate {
            return Err(invalid_arg(format!(
                "audio at {} Hz, model expects {} Hz",
                audio.sample_rate, p.sample_rate
            )));
        }
        let frames = stft(audio, p.fft_size, p.hop)?;
        let gains: Vec<f64> = frame_signal(&audio.samples, p.fft_size, p.hop)?
            .iter()
            .map(|w| loudness_db(w))
            .collect();
        let refs: Vec<&SpectralFrame> = frames.iter().map(|f| &f.spectrum).collect();
        let (mu, _) = self.encode_batch(&refs)?;
        LatentSeries::new(mu.to_rows(), gains, p)
    }

    pub fn decode_series_frames(&self, series: &LatentSeries) -> Result<Vec<SpectralFrame>> {
        series.validate()?;
        if series.d_z() != self.d_z() {
            return Err(invalid_arg(format!(
                "series has d_z {}, model has {}",
                series.d_z(),
                self.d_z()
            )));
        }
        if series.params != self.params {
            return Err(invalid_arg("series analysis parameters differ from the model's"));
        }
        self.decode_batch(&Tensor::from_rows(&series.frames)?, &series.gain_db)
    }

    /// Decodes a series frame by frame and inverts it with Griffin-Lim.
    pub fn decode_series(&self, series: &LatentSeries, iterations: usize) -> Result<AudioBuffer> {
        let frames = self.decode_series_frames(series)?;
        Ok(griffin_lim(
            &frames,
            iterations,
            PhaseInit::Random(GL_PHASE_SEED),
            self.params.sample_rate,
        )?
        .audio)
    }

    fn make_batch(&self, frames: &[&SpectralFrame], labels: &[f64]) -> Result<Batch> {
        if frames.is_empty() || frames.len() != labels.len() {
            return Err(invalid_arg("batch must be nonempty with one label per frame"));
        }
        let targets: Vec<Vec<f64>> = frames.iter().map(|f| self.recon_target(f)).collect();
        Ok(Batch {
            inputs: self.encoder_input(frames)?,
            targets: Tensor::from_rows(&targets)?,
            cond: Tensor::from_vec(&[labels.len(), 1], labels.to_vec())?,
            adv_targets: Tensor::from_vec(
                &[labels.len(), 1],
                labels.iter().map(|&l| loudness_condition(l)).collect(),
            )?,
        })
    }

    /// One recorded forward pass and backward pass. Gradients of the enabled
    /// terms are accumulated into the parameters.
    fn forward_backward(
        &mut self,
        batch: &Batch,
        noise: &Tensor,
        terms: Terms,
        lambda: f64,
        path: AdversaryPath,
    ) -> Result<ContinuousLosses> {
        let d_z = self.config.d_z;
        let h = self.enc_hidden.forward(&batch.inputs)?;
        let h = self.enc_act.forward(&h);
        let out = self.enc_out.forward(&h)?;
        let (mu, raw_lv) = self.split_heads(&out);
        let lv = self.clamp.forward(&raw_lv);
        let z = self.reparam.forward(&mu, &lv, noise)?;

        let mut grad_z = Tensor::zeros(&[z.rows(), d_z]);
        let mut grad_mu = Tensor::zeros(mu.dims());
        let mut grad_lv = Tensor::zeros(lv.dims());
        let mut losses = ContinuousLosses {
            recon: 0.0,
            kl: 0.0,
            adv: 0.0,
        };

        // Decoder and reconstruction.
        let loudness: Vec<f64> = batch.cond.data().to_vec();
        let dec_in = self.decoder_input(&z, &loudness)?;
        let dh = self.dec_hidden.forward(&dec_in)?;
        let dh = self.dec_act.forward(&dh);
        let y = self.dec_out.forward(&dh)?;
        let pred = y.map(output_to_log);
        let (recon, grad_pred) = mse_loss(&pred, &batch.targets)?;
        losses.recon = recon;
        let scale = if terms.recon { -log_floor() } else { 0.0 };
        let g = self.dec_out.backward(&grad_pred.scale(scale))?;
        let g = self.dec_act.backward(&g)?;
        let g = self.dec_hidden.backward(&g)?;
        if terms.recon {
            grad_z.add_assign(&g.columns(0, d_z))?;
        }

        // Prior.
        let (kl, gkl_mu, gkl_lv) = kl_gauss_std(&mu, &lv)?;
        losses.kl = kl;
        if terms.kl {
            grad_mu.add_assign(&gkl_mu.scale(self.config.beta_kl))?;
            grad_lv.add_assign(&gkl_lv.scale(self.config.beta_kl))?;
        }

        // Adversary on z, through the reversal node.
        let grl = GradientReversal::new(lambda)?;
        let a = self.adv_hidden.forward(&grl.forward(&z))?;
        let a = self.adv_act.forward(&a);
        let pred_l = self.adv_out.forward(&a)?;
        let (adv, grad_adv) = mse_loss(&pred_l, &batch.adv_targets)?;
        losses.adv = adv;
        let ga = self
            .adv_out
            .backward(&grad_adv.scale(if terms.adv { 1.0 } else { 0.0 }))?;
        let ga = self.adv_act.backward(&ga)?;
        let ga = self.adv_hidden.backward(&ga)?;
        if terms.adv {
            match path {
                AdversaryPath::Reversed => grad_z.add_assign(&grl.backward(&ga))?,
                AdversaryPath::Identity => grad_z.add_assign(&ga)?,
                AdversaryPath::Detached => {}
            }
        }

        // Back into the encoder.
        let (gmu, glv) = self.reparam.backward(&grad_z)?;
        grad_mu.add_assign(&gmu)?;
        grad_lv.add_assign(&glv)?;
        let glv = self.clamp.backward(&grad_lv)?;
        let g = grad_mu.hconcat(&glv)?;
        let g = self.enc_out.backward(&g)?;
        let g = self.enc_act.backward(&g)?;
        self.enc_hidden.backward(&g)?;

        if !(losses.recon.is_finite() && losses.kl.is_finite() && losses.adv.is_finite()) {
            return Err(Error::TrainingDiverged(format!("non-finite loss {losses:?}")));
        }
        Ok(losses)
    }

    pub fn encoder_params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        v.extend(self.enc_hidden.params());
        v.extend(self.enc_out.params());
        v
    }

    pub fn decoder_params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        v.extend(self.dec_hidden.params());
        v.extend(self.dec_out.params());
        v
    }

    pub fn adversary_params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        v.extend(self.adv_hidden.params());
        v.extend(self.adv_out.params());
        v
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = self.encoder_params();
        v.extend(self.decoder_params());
        v.extend(self.adversary_params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = Vec::new();
        for layer in [
            &mut self.enc_hidden,
            &mut self.enc_out,
            &mut self.dec_hidden,
            &mut self.dec_out,
            &mut self.adv_hidden,
            &mut self.adv_out,
        ] {
            v.extend(layer.params_mut());
        }
        v
    }

    fn zero_grads(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    /// Gradients of the encoder parameters due to the adversarial term alone,
    /// for a given noise draw, with the reversal node or an identity in its place.
    pub fn adversarial_encoder_gradients(
        &mut self,
        frames: &[&SpectralFrame],
        labels: &[f64],
        noise: &Tensor,
        lambda: f64,
        path: AdversaryPath,
    ) -> Result<Vec<Tensor>> {
        let batch = self.make_batch(frames, labels)?;
        self.zero_grads();
        let terms = Terms {
            recon: false,
            kl: false,
            adv: true,
        };
        self.forward_backward(&batch, noise, terms, lambda, path)?;
        let grads = self
            .encoder_params()
            .iter()
            .map(|p| p.grad.clone())
            .collect();
        self.zero_grads();
        Ok(grads)
    }

    /// Joint objective `recon + beta_kl * kl + adv` for a fixed noise draw,
    /// computed with the inference kernels only.
    pub fn objective(&self, frames: &[&SpectralFrame], labels: &[f64], noise: &Tensor) -> Result<f64> {
        let batch = self.make_batch(frames, labels)?;
        let d = self.config.d_z;
        let h = Tanh::infer(&self.enc_hidden.infer(&batch.inputs)?);
        let out = self.enc_out.infer(&h)?;
        let (mu, lv) = (out.columns(0, d), self.clamp.infer(&out.columns(d, 2 * d)));
        let z = Reparameterize::infer(&mu, &lv, noise)?;
        let dec_in = self.decoder_input(&z, batch.cond.data())?;
        let y = self.dec_out.infer(&Tanh::infer(&self.dec_hidden.infer(&dec_in)?))?;
        let (recon, _) = mse_loss(&y.map(output_to_log), &batch.targets)?;
        let (kl, _, _) = kl_gauss_std(&mu, &lv)?;
        let a = self.adv_out.infer(&Tanh::infer(&self.adv_hidden.infer(&z)?))?;
        let (adv, _) = mse_loss(&a, &batch.adv_targets)?;
        Ok(recon + self.config.beta_kl * kl + adv)
    }

    /// Reconstruction MSE against the training target, decoding the posterior mean.
    pub fn recon_error(&self, frames: &[&SpectralFrame], labels: &[f64]) -> Result<f64> {
        let batch = self.make_batch(frames, labels)?;
        let (mu, _) = self.encode_batch(frames)?;
        let dec_in = self.decoder_input(&mu, batch.cond.data())?;
        let y = self.dec_out.infer(&Tanh::infer(&self.dec_hidden.infer(&dec_in)?))?;
        Ok(mse_loss(&y.map(output_to_log), &batch.targets)?.0)
    }

    /// Gradients of [`ContinuousModel::objective`] for every parameter, in
    /// [`ContinuousModel::params`] order, with an identity in place of the
    /// reversal node.
    pub fn objective_gradients(
        &mut self,
        frames: &[&SpectralFrame],
        labels: &[f64],
        noise: &Tensor,
    ) -> Result<Vec<Tensor>> {
        let batch = self.make_batch(frames, labels)?;
        self.zero_grads();
        let terms = Terms {
            recon: true,
            kl: true,
            adv: true,
        };
        self.forward_backward(&batch, noise, terms, 1.0, AdversaryPath::Identity)?;
        let grads = self.params().iter().map(|p| p.grad.clone()).collect();
        self.zero_grads();
        Ok(grads)
    }

    /// Adversary's loudness prediction (in dB) from latents.
    pub fn predict_loudness(&self, z: &Tensor) -> Result<Vec<f64>> {
        let a = Tanh::infer(&self.adv_hidden.infer(z)?);
        Ok(self
            .adv_out
            .infer(&a)?
            .data()
            .iter()
            .map(|c| c * 50.0 - 50.0)
            .collect())
    }
}

#[derive(Debug, Clone, Copy)]
struct Terms {
    recon: bool,
    kl: bool,
    adv: bool,
}

/// Owns the optimizer, noise stream and schedule for one training run.
#[derive(Debug, Clone)]
pub struct ContinuousTrainer {
    pub model: ContinuousModel,
    adam: Adam,
    rng: SplitMix64,
    step: u64,
    /// Planned run length; drives the adversarial warm-up schedule.
    pub total_steps: u64,
}

impl ContinuousTrainer {
    pub fn new(model: ContinuousModel, adam: AdamConfig, seed: u64, total_steps: u64) -> Self {
        Self {
            model,
            adam: Adam::new(adam),
            rng: SplitMix64::new(seed ^ 0xA5A5_5A5A_0F0F_F0F0),
            step: 0,
            total_steps: total_steps.max(1),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Reversal strength at `step`: zero for the first 10% of the run, then a
    /// linear ramp reaching the configured value at 30%.
    pub fn lambda_at(&self, step: u64) -> f64 {
        let (s, t) = (step as f64, self.total_steps as f64);
        let ramp = ((10.0 * s - t) / (2.0 * t)).clamp(0.0, 1.0);
        self.model.config.lambda_adv * ramp
    }

    fn draw_noise(&mut self, rows: usize) -> Tensor {
        let d = self.model.d_z();
        let data = (0..rows * d).map(|_| self.rng.normal()).collect();
        Tensor::from_vec(&[rows, d], data).expect("noise shape")
    }

    /// One joint Adam step on encoder, decoder and adversary.
    pub fn train_step(
        &mut self,
        frames: &[&SpectralFrame],
        labels: &[f64],
    ) -> Result<ContinuousLosses> {
        let batch = self.model.make_batch(frames, labels)?;
        let noise = self.draw_noise(frames.len());
        let lambda = self.lambda_at(self.step);
        let terms = Terms {
            recon: true,
            kl: true,
            adv: true,
        };
        self.model.zero_grads();
        let losses =
            self.model
                .forward_backward(&batch, &noise, terms, lambda, AdversaryPath::Reversed)?;
        self.adam.step(&mut self.model.params_mut())?;
        self.step += 1;
        Ok(losses)
    }

    /// Runs `steps` steps over shuffled mini-batches, calling `on_step` after each.
    pub fn fit(
        &mut self,
        data: &FrameDataset,
        steps: u64,
        batch_size: usize,
        mut on_step: impl FnMut(u64, &ContinuousLosses),
    ) -> Result<Vec<ContinuousLosses>> {
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
            let labels: Vec<f64> = idx.iter().map(|&i| data.loudness_labels[i]).collect();
            let losses = self.train_step(&frames, &labels)?;
            on_step(self.step, &losses);
            history.push(losses);
        }
        Ok(history)
    }

    /// Trains only the adversary on frozen encoder outputs (no gradient reaches
    /// the encoder) and returns its final mean squared error on `data`, in the
    /// normalized loudness scale, together with the variance of the targets.
    pub fn fit_adversary_probe(
        &mut self,
        data: &FrameDataset,
        steps: u64,
        batch_size: usize,
    ) -> Result<(f64, f64)> {
        let mut adam = Adam::new(AdamConfig {
            lr: 3e-3,
            ..self.adam.config
        });
        let terms = Terms {
            recon: false,
            kl: false,
            adv: true,
        };
        let mut queue: Vec<Vec<usize>> = Vec::new();
        for _ in 0..steps {
            if queue.is_empty() {
                queue = data.batches(batch_size, &mut self.rng);
            }
            let idx = queue.pop().expect("refilled");
            let frames: Vec<&SpectralFrame> = idx.iter().map(|&i| &data.frames[i]).collect();
            let labels: Vec<f64> = idx.iter().map(|&i| data.loudness_labels[i]).collect();
            let batch = self.model.make_batch(&frames, &labels)?;
            let noise = Tensor::zeros(&[idx.len(), self.model.d_z()]);
            self.model.zero_grads();
            self.model
                .forward_backward(&batch, &noise, terms, 0.0, AdversaryPath::Detached)?;
            let m = &mut self.model;
            let mut adv: Vec<&mut Param> = Vec::new();
            adv.extend(m.adv_hidden.params_mut());
            adv.extend(m.adv_out.params_mut());
            adam.step(&mut adv)?;
            m.zero_grads();
        }
        let refs: Vec<&SpectralFrame> = data.frames.iter().collect();
        let (mu, _) = self.model.encode_batch(&refs)?;
        let pred = self.model.predict_loudness(&mu)?;
        let targets: Vec<f64> = data.loudness_labels.iter().map(|&l| loudness_condition(l)).collect();
        let n = targets.len() as f64;
        let mse = pred
            .iter()
            .zip(&targets)
            .map(|(p, t)| (loudness_condition(*p) - t).powi(2))
            .sum::<f64>()
            / n;
        let mean = targets.iter().sum::<f64>() / n;
        let var = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
        Ok((mse, var))
    }
}
