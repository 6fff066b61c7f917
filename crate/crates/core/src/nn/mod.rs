//! A small differentiable-computation kernel. Layers cache what they need
//! during `forward` and accumulate parameter gradients during `backward`;
//! models compose them explicitly rather than through a general tape.

mod adam;
mod layers;
mod loss;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use layers::{Dense, GradientReversal, LogvarClamp, Reparameterize, Tanh};
pub use loss::{kl_gauss_std, mse_loss};
pub use tensor::{matmul, Param, Tensor};

use crate::error::{invalid_arg, Result};

/// Checks that a parameter collection has unique names and consistent gradient shapes.
pub fn check_parameter_set(params: &[&Param]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for p in params {
        if !seen.insert(p.name.as_str()) {
            return Err(invalid_arg(format!("duplicate parameter name `{}`", p.name)));
        }
        if p.grad.dims() != p.value.dims() {
            return Err(invalid_arg(format!("gradient shape mismatch for `{}`", p.name)));
        }
    }
    Ok(())
}
