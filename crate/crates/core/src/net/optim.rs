use serde::{Deserialize, Serialize};

use super::params::to_f32_grid;
use super::{Gradients, ModelParams, NetError};

pub const MOMENTUM: f64 = 0.9;

/// Optimizer state, one buffer per trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity {
    pub tensors: Vec<Vec<f64>>,
}

impl Velocity {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Velocity {
            tensors: params.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }
}

/// One step of SGD with Nesterov momentum:
/// `v <- momentum * v + g`, then `p <- p - lr * (g + momentum * v)`.
///
/// Parameters and velocity are rounded to `f32` afterwards so that a
/// checkpoint captures the state exactly. Nothing is modified when any
/// gradient is not finite.
pub fn sgd_nesterov_step(
    params: &mut ModelParams,
    grads: &Gradients,
    velocity: &mut Velocity,
    lr: f64,
    momentum: f64,
) -> Result<(), NetError> {
    let shapes_match = grads.tensors.len() == params.tensors().len()
        && velocity.tensors.len() == params.tensors().len()
        && params
            .tensors()
            .iter()
            .zip(&grads.tensors)
            .zip(&velocity.tensors)
            .all(|((p, g), v)| p.len() == g.len() && p.len() == v.len());
    if !shapes_match {
        return Err(NetError::ShapeMismatch("gradients, velocity and parameters differ".into()));
    }
    if let Some((t, _)) = params
        .tensors()
        .iter()
        .zip(&grads.tensors)
        .find(|(_, g)| g.iter().any(|x| !x.is_finite()))
    {
        return Err(NetError::NonFiniteGradient(t.name.clone()));
    }
    for ((p, g), v) in params
        .tensors_mut()
        .iter_mut()
        .zip(&grads.tensors)
        .zip(&mut velocity.tensors)
    {
        for ((pi, gi), vi) in p.data.iter_mut().zip(g).zip(v.iter_mut()) {
            let vel = momentum * *vi + gi;
            *pi = to_f32_grid(*pi - lr * (gi + momentum * vel));
            *vi = to_f32_grid(vel);
        }
    }
    Ok(())
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.l2_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Cyclic exponential decay: `base / decay^(epoch mod cycle)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub base: f64,
    pub decay: f64,
    pub cycle: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            base: 3e-4,
            decay: 1.1,
            cycle: 50,
        }
    }
}

impl LrSchedule {
    pub fn at(&self, epoch: usize) -> f64 {
        self.base / self.decay.powi((epoch % self.cycle.max(1)) as i32)
    }
}

/// Learning rate of the default schedule.
pub fn lr_at_epoch(epoch: usize) -> f64 {
    LrSchedule::default().at(epoch)
}
