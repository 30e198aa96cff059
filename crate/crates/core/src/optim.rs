//! Parameter updates: bias-corrected Adam and the DP-SGD gradient aggregator.

use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient in tensor {index}")]
    NonFiniteGradient { index: usize },
    #[error("gradient bundle has {got} tensors, expected {expected}")]
    BundleLength { expected: usize, got: usize },
    #[error("gradient tensor {index} has shape {got}, parameter has {expected}")]
    ShapeMismatch { index: usize, expected: String, got: String },
    #[error("dp aggregation needs at least one per-sample gradient")]
    EmptyBatch,
    #[error("invalid dp config: {0}")]
    InvalidDpConfig(String),
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    /// Zero moments shaped like `params`, betas `(0.9, 0.999)`, `eps = 1e-8`.
    pub fn new(params: &[Tensor], lr: f64) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        AdamState { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moment(&self) -> &[Tensor] {
        &self.v
    }

    /// One Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<(), OptimError> {
        check_bundle(params, grads)?;
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(OptimError::NonFiniteGradient { index });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let (p, g, m, v) = (p.as_mut_slice(), g.as_slice(), m.as_mut_slice(), v.as_mut_slice());
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

fn check_bundle(params: &[Tensor], grads: &[Tensor]) -> Result<(), OptimError> {
    if params.len() != grads.len() {
        return Err(OptimError::BundleLength { expected: params.len(), got: grads.len() });
    }
    for (index, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(OptimError::ShapeMismatch {
                index,
                expected: p.shape().to_string(),
                got: g.shape().to_string(),
            });
        }
    }
    Ok(())
}

/// DP-SGD settings: clip norm `C` and noise multiplier `sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub enabled: bool,
    pub clip_norm: f64,
    pub noise_multiplier: f64,
    /// Truncate with the previous update's threshold so each sample's loss
    /// term depends on that sample alone.
    pub shift_threshold: bool,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig { enabled: false, clip_norm: 10.0, noise_multiplier: 0.7, shift_threshold: true }
    }
}

impl DpConfig {
    /// `C = 10`, `sigma = 0.7`, shifted threshold.
    pub fn enabled() -> Self {
        DpConfig { enabled: true, ..DpConfig::default() }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.clip_norm > 0.0) {
            return Err(OptimError::InvalidDpConfig(format!("clip norm must be > 0, got {}", self.clip_norm)));
        }
        if !(self.noise_multiplier >= 0.0) || !self.noise_multiplier.is_finite() {
            return Err(OptimError::InvalidDpConfig(format!(
                "noise multiplier must be finite and >= 0, got {}",
                self.noise_multiplier
            )));
        }
        Ok(())
    }
}

/// Global l2 norm over every tensor of a gradient bundle.
pub fn global_norm(bundle: &[Tensor]) -> f64 {
    bundle.iter().map(Tensor::norm_sq).sum::<f64>().sqrt()
}

/// Scales `bundle` so its global norm is at most `clip_norm`.
pub fn clip_bundle(bundle: &mut [Tensor], clip_norm: f64) {
    let norm = global_norm(bundle);
    if norm <= clip_norm {
        return;
    }
    let mut factor = clip_norm / norm;
    loop {
        for t in bundle.iter_mut() {
            t.scale_assign(factor);
        }
        // rounding can leave the norm a few ulps above the bound
        if global_norm(bundle) <= clip_norm {
            break;
        }
        factor = 1.0 - 4.0 * f64::EPSILON;
    }
}

/// Clip each per-sample gradient to global norm `C`, sum in order, add
/// `N(0, sigma^2 C^2)` noise to every coordinate of the sum and divide by
/// the number of samples `B`.
///
/// The per-coordinate variance of the returned gradient is therefore
/// `sigma^2 C^2 / B^2`. Samples removed by truncation should be passed as
/// zero bundles: they count towards `B` and contribute only noise.
pub fn dp_aggregate<R: Rng + ?Sized>(
    per_sample: Vec<Vec<Tensor>>,
    cfg: &DpConfig,
    rng: &mut R,
) -> Result<Vec<Tensor>, OptimError> {
    cfg.validate()?;
    let batch = per_sample.len();
    let mut iter = per_sample.into_iter();
    let mut sum = iter.next().ok_or(OptimError::EmptyBatch)?;
    clip_bundle(&mut sum, cfg.clip_norm);
    for mut g in iter {
        if g.len() != sum.len() {
            return Err(OptimError::BundleLength { expected: sum.len(), got: g.len() });
        }
        clip_bundle(&mut g, cfg.clip_norm);
        for (s, t) in sum.iter_mut().zip(&g) {
            s.add_assign(t);
        }
    }
    let std = cfg.noise_multiplier * cfg.clip_norm;
    if std > 0.0 {
        for t in sum.iter_mut() {
            for v in t.as_mut_slice() {
                *v += std * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let b = batch as f64;
    Ok(sum.into_iter().map(|t| t.map(|v| v / b)).collect())
}
