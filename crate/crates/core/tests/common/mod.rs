#![allow(dead_code)]

use timbre::continuous::{ContinuousConfig, ContinuousModel};
use timbre::discrete::{DiscreteConfig, DiscreteModel};
use timbre::dsp::{DspParams, SpectralFrame};
use timbre::nn::{
    kl_gauss_std, mse_loss, Dense, LogvarClamp, Param, Reparameterize, Tanh, Tensor,
};
use timbre::rng::SplitMix64;

pub const FD_STEP: f64 = 1e-5;
/// Step for whole-model checks. Objectives there reach a few hundred while
/// single weights can move them by 1e-3 per unit, so at `FD_STEP` the
/// rounding of `f(x +- h)` alone costs ~1e-6 relative. A plain central
/// difference at larger h is truncation-bound (errors shrink as h^2), so model
/// checks extrapolate two central differences (see `richardson_grad`), which
/// leaves an h^4 term. Over 20 seeds the worst error is 7.6e-7 at 2e-4,
/// 1.1e-7 at 8e-4 and 1.4e-7 at 1e-3.
pub const MODEL_FD_STEP: f64 = 8e-4;
pub const FD_TOLERANCE: f64 = 1e-6;
/// Magnitude below which errors are measured absolutely rather than relatively.
pub const FD_FLOOR: f64 = 1e-3;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// Central differences of `f` around `x`, one coordinate at a time.
pub fn numeric_grad(x: &[f64], f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    numeric_grad_step(x, FD_STEP, f)
}

/// Richardson extrapolation of central differences at `step` and `step / 2`,
/// cancelling the h^2 truncation term. NaN evaluations propagate, which
/// callers use to flag non-differentiable points.
pub fn richardson_grad(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            let mut central = |h: f64| {
                p[i] = orig + h;
                let up = f(&p);
                p[i] = orig - h;
                let down = f(&p);
                p[i] = orig;
                (up - down) / (2.0 * h)
            };
            let coarse = central(step);
            let fine = central(step / 2.0);
            (4.0 * fine - coarse) / 3.0
        })
        .collect()
}

pub fn numeric_grad_step(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + step;
            let up = f(&p);
            p[i] = orig - step;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

pub fn random_tensor(rng: &mut SplitMix64, dims: &[usize], scale: f64) -> Tensor {
    let n = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| rng.uniform(-scale, scale)).collect()).unwrap()
}

fn weighted_sum(t: &Tensor, r: &Tensor) -> f64 {
    t.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// Result of one finite-difference comparison.
pub struct FdCase {
    pub kernel: &'static str,
    pub max_rel_err: f64,
}

/// Finite-difference check of one randomly configured kernel; `which` picks the kernel.
pub fn fd_case(which: usize, rng: &mut SplitMix64) -> FdCase {
    let n = 1 + rng.below(4);
    let a = 1 + rng.below(6);
    let b = 1 + rng.below(6);
    match which % 9 {
        0 => {
            let mut layer = Dense::new("d", a, b, rng);
            let x = random_tensor(rng, &[n, a], 2.0);
            let r = random_tensor(rng, &[n, b], 1.0);
            layer.forward(&x).unwrap();
            let gx = layer.backward(&r).unwrap();
            let [w, bias] = layer.params();
            let (w0, b0) = (w.value.clone(), bias.value.clone());
            let (gw, gb) = (w.grad.clone(), bias.grad.clone());
            let f_w = |v: &[f64]| {
                let l = Dense::from_parts("d", Tensor::from_vec(w0.dims(), v.to_vec()).unwrap(), b0.clone());
                weighted_sum(&l.infer(&x).unwrap(), &r)
            };
            let f_b = |v: &[f64]| {
                let l = Dense::from_parts("d", w0.clone(), Tensor::from_vec(b0.dims(), v.to_vec()).unwrap());
                weighted_sum(&l.infer(&x).unwrap(), &r)
            };
            let f_x = |v: &[f64]| {
                let l = Dense::from_parts("d", w0.clone(), b0.clone());
                weighted_sum(&l.infer(&Tensor::from_vec(x.dims(), v.to_vec()).unwrap()).unwrap(), &r)
            };
            let e = max_rel_err(gw.data(), &numeric_grad(w0.data(), f_w))
                .max(max_rel_err(gb.data(), &numeric_grad(b0.data(), f_b)))
                .max(max_rel_err(gx.data(), &numeric_grad(x.data(), f_x)));
            FdCase { kernel: "dense", max_rel_err: e }
        }
        1 => {
            let x = random_tensor(rng, &[n, a], 3.0);
            let r = random_tensor(rng, &[n, a], 1.0);
            let mut t = Tanh::default();
            t.forward(&x);
            let g = t.backward(&r).unwrap();
            let num = numeric_grad(x.data(), |v| {
                weighted_sum(&Tanh::infer(&Tensor::from_vec(x.dims(), v.to_vec()).unwrap()), &r)
            });
            FdCase { kernel: "tanh", max_rel_err: max_rel_err(g.data(), &num) }
        }
        2 => {
            let p = random_tensor(rng, &[n, a], 3.0);
            let y = random_tensor(rng, &[n, a], 3.0);
            let (_, g) = mse_loss(&p, &y).unwrap();
            let num = numeric_grad(p.data(), |v| {
                mse_loss(&Tensor::from_vec(p.dims(), v.to_vec()).unwrap(), &y).unwrap().0
            });
            FdCase { kernel: "mse", max_rel_err: max_rel_err(g.data(), &num) }
        }
        3 => {
            let mu = random_tensor(rng, &[n, a], 2.0);
            let lv = random_tensor(rng, &[n, a], 3.0);
            let (_, gmu, glv) = kl_gauss_std(&mu, &lv).unwrap();
            let nmu = numeric_grad(mu.data(), |v| {
                kl_gauss_std(&Tensor::from_vec(mu.dims(), v.to_vec()).unwrap(), &lv).unwrap().0
            });
            let nlv = numeric_grad(lv.data(), |v| {
                kl_gauss_std(&mu, &Tensor::from_vec(lv.dims(), v.to_vec()).unwrap()).unwrap().0
            });
            FdCase {
                kernel: "kl",
                max_rel_err: max_rel_err(gmu.data(), &nmu).max(max_rel_err(glv.data(), &nlv)),
            }
        }
        4 => {
            let mu = random_tensor(rng, &[n, a], 2.0);
            let lv = random_tensor(rng, &[n, a], 2.0);
            let eps = random_tensor(rng, &[n, a], 2.0);
            let r = random_tensor(rng, &[n, a], 1.0);
            let mut rep = Reparameterize::default();
            rep.forward(&mu, &lv, &eps).unwrap();
            let (gmu, glv) = rep.backward(&r).unwrap();
            let nmu = numeric_grad(mu.data(), |v| {
                let m = Tensor::from_vec(mu.dims(), v.to_vec()).unwrap();
                weighted_sum(&Reparameterize::infer(&m, &lv, &eps).unwrap(), &r)
            });
            let nlv = numeric_grad(lv.data(), |v| {
                let l = Tensor::from_vec(lv.dims(), v.to_vec()).unwrap();
                weighted_sum(&Reparameterize::infer(&mu, &l, &eps).unwrap(), &r)
            });
            FdCase {
                kernel: "reparameterize",
                max_rel_err: max_rel_err(gmu.data(), &nmu).max(max_rel_err(glv.data(), &nlv)),
            }
        }
        5 => {
            // Keep inputs away from the clamp edges, where the derivative jumps.
            let data: Vec<f64> = (0..n * a)
                .map(|_| loop {
                    let v = rng.uniform(-14.0, 6.0);
                    if (v + 10.0).abs() > 0.01 && (v - 2.0).abs() > 0.01 {
                        break v;
                    }
                })
                .collect();
            let x = Tensor::from_vec(&[n, a], data).unwrap();
            let r = random_tensor(rng, &[n, a], 1.0);
            let mut c = LogvarClamp::new(-10.0, 2.0);
            c.forward(&x);
            let g = c.backward(&r).unwrap();
            let num = numeric_grad(x.data(), |v| {
                weighted_sum(&c.infer(&Tensor::from_vec(x.dims(), v.to_vec()).unwrap()), &r)
            });
            FdCase { kernel: "logvar_clamp", max_rel_err: max_rel_err(g.data(), &num) }
        }
        6 => {
            // Dense -> Tanh -> Dense -> MSE, gradient with respect to the input.
            let mut l1 = Dense::new("l1", a, b, rng);
            let mut act = Tanh::default();
            let mut l2 = Dense::new("l2", b, a, rng);
            let x = random_tensor(rng, &[n, a], 1.5);
            let y = random_tensor(rng, &[n, a], 1.5);
            let h = act.forward(&l1.forward(&x).unwrap());
            let out = l2.forward(&h).unwrap();
            let (_, g) = mse_loss(&out, &y).unwrap();
            let gx = l1.backward(&act.backward(&l2.backward(&g).unwrap()).unwrap()).unwrap();
            let num = numeric_grad(x.data(), |v| {
                let xi = Tensor::from_vec(x.dims(), v.to_vec()).unwrap();
                let o = l2.infer(&Tanh::infer(&l1.infer(&xi).unwrap())).unwrap();
                mse_loss(&o, &y).unwrap().0
            });
            FdCase { kernel: "mlp", max_rel_err: max_rel_err(gx.data(), &num) }
        }
        7 => {
            let (mut model, frames, labels) = tiny_continuous(rng, n);
            let refs: Vec<&SpectralFrame> = frames.iter().collect();
            let noise = random_tensor(rng, &[n, model.d_z()], 1.0);
            let grads = model.objective_gradients(&refs, &labels, &noise).unwrap();
            let e = model_fd(&mut model, &grads, |m| m.objective(&refs, &labels, &noise).unwrap(), |m| m.params_mut());
            FdCase { kernel: "continuous_model", max_rel_err: e }
        }
        _ => {
            let (mut model, frames) = tiny_discrete(rng, n);
            let refs: Vec<&SpectralFrame> = frames.iter().collect();
            let (_, grads) = model.step_gradients(&refs).unwrap();
            // The decoder only sees the reconstruction term and the codebook
            // only the codebook term; the encoder's straight-through gradient
            // has no finite-difference counterpart.
            let names: Vec<String> = model.params().iter().map(|p| p.name.clone()).collect();
            let mut worst: f64 = 0.0;
            for (i, name) in names.iter().enumerate() {
                let objective: fn(&DiscreteModel, &[&SpectralFrame]) -> f64 = if name.starts_with("decoder") {
                    |m, f| m.losses(f).unwrap().recon
                } else if name == "codebook" {
                    |m, f| m.losses(f).unwrap().codebook
                } else {
                    continue;
                };
                // A codebook nudge that flips a nearest-code choice makes the
                // loss jump; such coordinates have no derivative to compare.
                let codes = |m: &DiscreteModel| m.encode_codes(&refs).unwrap().iter().map(|c| c.0).collect::<Vec<_>>();
                let base_codes = codes(&model);
                let base = model.params_mut()[i].value.data().to_vec();
                let num = richardson_grad(&base, MODEL_FD_STEP, |v| {
                    model.params_mut()[i].value.data_mut().copy_from_slice(v);
                    if codes(&model) != base_codes {
                        return f64::NAN;
                    }
                    objective(&model, &refs)
                });
                model.params_mut()[i].value.data_mut().copy_from_slice(&base);
                for (&a, &n) in grads[i].data().iter().zip(&num) {
                    if n.is_finite() {
                        worst = worst.max(rel_err(a, n));
                    }
                }
            }
            FdCase { kernel: "discrete_model", max_rel_err: worst }
        }
    }
}

/// Finite differences over every parameter of a model.
fn model_fd<M>(
    model: &mut M,
    grads: &[Tensor],
    objective: impl Fn(&M) -> f64,
    params_mut: impl Fn(&mut M) -> Vec<&mut Param>,
) -> f64 {
    let count = params_mut(model).len();
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let base = params_mut(model)[i].value.data().to_vec();
        let num = richardson_grad(&base, MODEL_FD_STEP, |v| {
            params_mut(model)[i].value.data_mut().copy_from_slice(v);
            objective(model)
        });
        params_mut(model)[i].value.data_mut().copy_from_slice(&base);
        worst = worst.max(max_rel_err(grads[i].data(), &num));
    }
    worst
}

pub fn tiny_params() -> DspParams {
    DspParams {
        sample_rate: 8000,
        fft_size: 16,
        hop: 4,
    }
}

pub fn random_frame(rng: &mut SplitMix64, d_x: usize, scale: f64) -> SpectralFrame {
    let mags: Vec<f64> = (0..d_x).map(|_| scale * rng.uniform(0.0, 1.0)).collect();
    SpectralFrame::from_linear(&mags, 0)
}

pub fn tiny_continuous(rng: &mut SplitMix64, n: usize) -> (ContinuousModel, Vec<SpectralFrame>, Vec<f64>) {
    let p = tiny_params();
    let config = ContinuousConfig {
        d_z: 1 + rng.below(3),
        hidden: 2 + rng.below(4),
        adv_hidden: 2 + rng.below(3),
        beta_kl: rng.uniform(0.0, 1.0),
        lambda_adv: 1.0,
        factor_loudness: rng.below(2) == 0,
    };
    let model = ContinuousModel::new(config, p, rng.next_u64()).unwrap();
    let frames = (0..n).map(|_| random_frame(rng, p.d_x(), 4.0)).collect();
    let labels = (0..n).map(|_| rng.uniform(-60.0, 0.0)).collect();
    (model, frames, labels)
}

pub fn tiny_discrete(rng: &mut SplitMix64, n: usize) -> (DiscreteModel, Vec<SpectralFrame>) {
    let p = tiny_params();
    let config = DiscreteConfig {
        k: 2 + rng.below(4),
        d_z: 1 + rng.below(3),
        hidden: 2 + rng.below(4),
        beta_commit: 0.25,
    };
    let model = DiscreteModel::new(config, p, rng.next_u64()).unwrap();
    let frames = (0..n).map(|_| random_frame(rng, p.d_x(), 4.0)).collect();
    (model, frames)
}
