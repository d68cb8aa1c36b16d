//! Learning-rate schedule and the SGD update.

use std::ops::Range;

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Inverse decay: `lr_new * (1 + gamma * t / max_steps)^(-power)`.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> f64 {
    let progress = step as f64 / cfg.max_steps as f64;
    cfg.lr_new * (1.0 + cfg.sched_gamma * progress).powf(-cfg.sched_power)
}

/// One Nesterov-momentum SGD step in the PyTorch formulation:
///
/// ```text
/// g = grad + wd * w      (wd skipped inside `bias`)
/// v = mu * v + g
/// w = w - lr * (g + mu * v)
/// ```
pub fn nesterov_step<T: Scalar>(
    params: &mut [T],
    velocity: &mut [T],
    grad: &[f64],
    bias: &[Range<usize>],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != velocity.len() || params.len() != grad.len() {
        return Err(Error::shape(format!(
            "optimizer got {} parameters, {} velocities, {} gradients",
            params.len(),
            velocity.len(),
            grad.len()
        )));
    }
    let mut decayed = vec![true; params.len()];
    for r in bias {
        decayed[r.clone()].iter_mut().for_each(|d| *d = false);
    }
    for i in 0..params.len() {
        let w = params[i].as_f64();
        let g = if decayed[i] { grad[i] + weight_decay * w } else { grad[i] };
        let v = momentum * velocity[i].as_f64() + g;
        velocity[i] = T::of_f64(v);
        params[i] = T::of_f64(w - lr * (g + momentum * v));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numerics("parameters diverged".into()));
    }
    Ok(())
}
