use super::tensor::Tensor;
use crate::error::{invalid_arg, Result};

/// Mean squared error over all entries, with its gradient w.r.t. `pred`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    pred.same_shape(target)?;
    if pred.is_empty() {
        return Err(invalid_arg("mse of empty tensors"));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, Tensor::from_vec(pred.dims(), grad)?))
}

/// KL divergence from `N(mu, exp(logvar))` to `N(0, 1)`, summed over latent
/// dimensions and averaged over the batch (rows). Returns the loss and the
/// gradients w.r.t. `mu` and `logvar`.
pub fn kl_gauss_std(mu: &Tensor, logvar: &Tensor) -> Result<(f64, Tensor, Tensor)> {
    mu.same_shape(logvar)?;
    if mu.dims().len() != 2 || mu.rows() == 0 {
        return Err(invalid_arg("kl expects a non-empty [batch, d_z] matrix"));
    }
    let batch = mu.rows() as f64;
    let mut kl = 0.0;
    let mut gm = Vec::with_capacity(mu.len());
    let mut gl = Vec::with_capacity(mu.len());
    for (&m, &lv) in mu.data().iter().zip(logvar.data()) {
        let e = lv.exp();
        kl += m * m + e - 1.0 - lv;
        gm.push(m / batch);
        gl.push(0.5 * (e - 1.0) / batch);
    }
    Ok((
        0.5 * kl / batch,
        Tensor::from_vec(mu.dims(), gm)?,
        Tensor::from_vec(mu.dims(), gl)?,
    ))
}
