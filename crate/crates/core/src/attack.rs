//! White-box adversarial example generation against the detector: one-step
//! FGSM and iterative PGD under an L-infinity budget, with projection onto
//! the intersection of the epsilon-ball and the valid pixel range.

use alloc::vec::Vec;

use rand::Rng;

use crate::perception::{input_gradient, LossWeights, ModelParams, PerceptionError};
use crate::render::{ImageTensor, LabelSet};
use crate::rng::{self, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    None,
    Fgsm,
    Pgd,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Fgsm => "fgsm",
            AttackKind::Pgd => "pgd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// L-infinity budget on the `[0, 1]` pixel scale.
    pub epsilon: f64,
    /// PGD step size (alpha).
    pub step_size: f64,
    /// PGD iteration count (T).
    pub iterations: usize,
    /// Optional uniform start within the epsilon ball; off by default so
    /// PGD stays deterministic and degenerates exactly to FGSM at T = 1,
    /// alpha = epsilon.
    pub random_start: bool,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            kind: AttackKind::None,
            epsilon: 0.02,
            step_size: 0.01,
            iterations: 10,
            random_start: false,
            seed: 99,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        if self.epsilon < 0.0 || !self.epsilon.is_finite() {
            return Err(PerceptionError::BadConfig(alloc::format!(
                "attack epsilon {} must be >= 0",
                self.epsilon
            )));
        }
        if self.kind == AttackKind::Pgd && !(self.step_size > 0.0) {
            return Err(PerceptionError::BadConfig(alloc::format!(
                "pgd step size {} must be > 0",
                self.step_size
            )));
        }
        Ok(())
    }
}

/// Sign with `sign(0) = 0`, so dead pixels stay untouched.
#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Elementwise projection onto `[origin - eps, origin + eps] ∩ [0, 1]`.
/// Idempotent.
pub fn project(candidate: &ImageTensor, origin: &ImageTensor, epsilon: f64) -> ImageTensor {
    let mut out = candidate.clone();
    for (v, &o) in out.data.iter_mut().zip(&origin.data) {
        *v = v.clamp(o - epsilon, o + epsilon).clamp(0.0, 1.0);
    }
    out
}

/// One ascent step from a precomputed gradient:
/// `clamp(x + eps * sign(g), 0, 1)`.
pub fn fgsm_step(x: &ImageTensor, gradient: &[f64], epsilon: f64) -> ImageTensor {
    let mut out = x.clone();
    for (v, &g) in out.data.iter_mut().zip(gradient) {
        *v = (*v + epsilon * sign(g)).clamp(0.0, 1.0);
    }
    out
}

/// Fast Gradient Sign Method against the detector loss.
pub fn fgsm(
    theta: &ModelParams,
    x: &ImageTensor,
    y: &LabelSet,
    weights: &LossWeights,
    epsilon: f64,
) -> Result<ImageTensor, PerceptionError> {
    let g = input_gradient(theta, x, y, weights)?;
    Ok(fgsm_step(x, &g, epsilon))
}

/// PGD core over an arbitrary gradient callback; the public [`pgd`] wires in
/// the detector gradient.
pub fn pgd_with_gradient<F>(
    x: &ImageTensor,
    epsilon: f64,
    alpha: f64,
    iterations: usize,
    random_start: bool,
    rng_seed: u64,
    mut grad_fn: F,
) -> ImageTensor
where
    F: FnMut(&ImageTensor) -> Vec<f64>,
{
    let mut current = x.clone();
    if random_start {
        let mut r = stream_rng(rng_seed, rng::stream::ATTACK, 0);
        for v in current.data.iter_mut() {
            *v += r.gen_range(-epsilon..=epsilon);
        }
        current = project(&current, x, epsilon);
    }
    for _ in 0..iterations {
        let g = grad_fn(&current);
        for (v, &gv) in current.data.iter_mut().zip(&g) {
            *v += alpha * sign(gv);
        }
        current = project(&current, x, epsilon);
    }
    current
}

/// Projected Gradient Descent against the detector loss. With
/// `iterations = 0` the input is returned unchanged.
#[allow(clippy::too_many_arguments)]
pub fn pgd(
    theta: &ModelParams,
    x: &ImageTensor,
    y: &LabelSet,
    weights: &LossWeights,
    epsilon: f64,
    alpha: f64,
    iterations: usize,
    random_start: bool,
    rng_seed: u64,
) -> Result<ImageTensor, PerceptionError> {
    let mut err = None;
    let out = pgd_with_gradient(x, epsilon, alpha, iterations, random_start, rng_seed, |xt| {
        match input_gradient(theta, xt, y, weights) {
            Ok(g) => g,
            Err(e) => {
                err = Some(e);
                alloc::vec![0.0; xt.data.len()]
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Applies the configured attack to a frame; `AttackKind::None` is the
/// identity.
pub fn apply_attack(
    cfg: &AttackConfig,
    theta: &ModelParams,
    x: &ImageTensor,
    y: &LabelSet,
    weights: &LossWeights,
    instance_seed: u64,
) -> Result<ImageTensor, PerceptionError> {
    match cfg.kind {
        AttackKind::None => Ok(x.clone()),
        AttackKind::Fgsm => fgsm(theta, x, y, weights, cfg.epsilon),
        AttackKind::Pgd => pgd(
            theta,
            x,
            y,
            weights,
            cfg.epsilon,
            cfg.step_size,
            cfg.iterations,
            cfg.random_start,
            instance_seed,
        ),
    }
}
