//! Importance-weighted autoencoder with Gaussian encoder and decoder.
//!
//! The per-sample loss is the negative IWAE bound
//!
//! ```text
//! l(x) = -log( (1/K) * sum_k p(x | z_k) p(z_k) / q(z_k | x) ),   z_k ~ q(z | x)
//! ```
//!
//! with diagonal Gaussians everywhere and a standard-normal prior. Both
//! networks are ReLU MLPs with linear mean and log-variance heads; every
//! log-variance is clamped to `[-5, 5]` before use.

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const LOGVAR_MIN: f64 = -5.0;
pub const LOGVAR_MAX: f64 = 5.0;
const LN_2PI: f64 = 1.837_877_066_409_345_5;
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IwaeError {
    #[error("input has {got} features, model expects {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("non-finite loss for sample {index}")]
    NonFiniteLoss { index: usize },
    #[error("noise has shape {got}, expected {expected}")]
    NoiseShape { expected: String, got: String },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

/// Layer widths, latent size and importance-sample count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    /// Importance samples per input.
    pub k: usize,
}

impl Architecture {
    /// Encoder `[100, 50]`, decoder `[50, 100]`, `K = 2` and the default latent size.
    pub fn for_input(input_dim: usize) -> Self {
        Architecture {
            input_dim,
            latent_dim: default_latent_dim(input_dim),
            encoder_hidden: vec![100, 50],
            decoder_hidden: vec![50, 100],
            k: 2,
        }
    }

    pub fn validate(&self) -> Result<(), IwaeError> {
        if self.input_dim == 0 || self.latent_dim == 0 || self.k == 0 {
            return Err(IwaeError::Architecture(format!(
                "input_dim={}, latent_dim={}, k={} must all be positive",
                self.input_dim, self.latent_dim, self.k
            )));
        }
        if self.encoder_hidden.iter().chain(&self.decoder_hidden).any(|&w| w == 0) {
            return Err(IwaeError::Architecture("hidden widths must be positive".into()));
        }
        Ok(())
    }

    /// `(rows, cols)` of every parameter tensor in storage order.
    fn param_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut mlp = |input: usize, hidden: &[usize], head: usize| {
            let mut prev = input;
            for &h in hidden {
                shapes.push((prev, h));
                shapes.push((1, h));
                prev = h;
            }
            // mean head, log-variance head
            for _ in 0..2 {
                shapes.push((prev, head));
                shapes.push((1, head));
            }
        };
        mlp(self.input_dim, &self.encoder_hidden, self.latent_dim);
        mlp(self.latent_dim, &self.decoder_hidden, self.input_dim);
        shapes
    }
}

/// `clamp(ceil(D / 4), 2, 32)`.
pub fn default_latent_dim(input_dim: usize) -> usize {
    input_dim.div_ceil(4).clamp(2, 32)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IwaeModel {
    arch: Architecture,
    params: Vec<Tensor>,
}

/// One recorded forward pass: the tape, the parameter leaves on it, and the
/// `n x 1` node of per-sample losses.
pub struct LossGraph {
    pub tape: Tape,
    pub params: Vec<Var>,
    pub losses: Var,
}

impl LossGraph {
    pub fn loss_values(&self) -> &[f64] {
        self.tape.value(self.losses).as_slice()
    }
}

impl IwaeModel {
    /// Xavier-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self, IwaeError> {
        arch.validate()?;
        let params = arch
            .param_shapes()
            .into_iter()
            .map(|(r, c)| {
                if r == 1 {
                    Tensor::zeros(r, c)
                } else {
                    let limit = (6.0 / (r + c) as f64).sqrt();
                    Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-limit..limit)).collect())
                }
            })
            .collect();
        Ok(IwaeModel { arch, params })
    }

    pub fn from_params(arch: Architecture, params: Vec<Tensor>) -> Result<Self, IwaeError> {
        arch.validate()?;
        let shapes = arch.param_shapes();
        if shapes.len() != params.len()
            || shapes.iter().zip(&params).any(|(&(r, c), p)| p.rows() != r || p.cols() != c)
        {
            return Err(IwaeError::Format("parameter shapes do not match architecture".into()));
        }
        Ok(IwaeModel { arch, params })
    }

    /// Same parameters, different importance-sample count.
    pub fn with_k(&self, k: usize) -> Result<Self, IwaeError> {
        let arch = Architecture { k, ..self.arch.clone() };
        IwaeModel::from_params(arch, self.params.clone())
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn k(&self) -> usize {
        self.arch.k
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Human-readable name of parameter tensor `i`, e.g. `decoder.1.weight`.
    pub fn param_name(&self, i: usize) -> String {
        let enc = 2 * (self.arch.encoder_hidden.len() + 2);
        let (net, j, hidden) = if i < enc {
            ("encoder", i, self.arch.encoder_hidden.len())
        } else {
            ("decoder", i - enc, self.arch.decoder_hidden.len())
        };
        let layer = j / 2;
        let kind = if j % 2 == 0 { "weight" } else { "bias" };
        match layer.checked_sub(hidden) {
            None => format!("{net}.{layer}.{kind}"),
            Some(0) => format!("{net}.mean.{kind}"),
            Some(_) => format!("{net}.logvar.{kind}"),
        }
    }

    /// Standard-normal noise for `n` inputs: `(n * K) x latent_dim`, drawn
    /// input by input so row `i * K + k` belongs to input `i`.
    pub fn draw_noise<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Tensor {
        let len = n * self.arch.k * self.arch.latent_dim;
        Tensor::from_vec(
            n * self.arch.k,
            self.arch.latent_dim,
            (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        )
    }

    /// Records the loss of every row of `x` under fixed noise `eps`.
    pub fn loss_graph(&self, x: &Tensor, eps: &Tensor) -> Result<LossGraph, IwaeError> {
        let (n, k, dz, d) = (x.rows(), self.arch.k, self.arch.latent_dim, self.arch.input_dim);
        if x.cols() != d {
            return Err(IwaeError::DimMismatch { expected: d, got: x.cols() });
        }
        if eps.rows() != n * k || eps.cols() != dz {
            return Err(IwaeError::NoiseShape {
                expected: format!("{}x{}", n * k, dz),
                got: eps.shape().to_string(),
            });
        }

        let mut t = Tape::new();
        let params: Vec<Var> = self.params.iter().map(|p| t.leaf(p.clone())).collect();
        let enc_layers = self.arch.encoder_hidden.len();
        let dec_layers = self.arch.decoder_hidden.len();
        let (enc, dec) = params.split_at(2 * (enc_layers + 2));

        let xv = t.leaf(x.clone());
        let (mu_z, lv_z) = gaussian_mlp(&mut t, xv, enc, enc_layers)?;

        // z = mu + sigma * eps, one row per (input, sample)
        let mu_r = t.repeat_rows(mu_z, k);
        let lv_r = t.repeat_rows(lv_z, k);
        let half_lv = t.scale(lv_r, 0.5);
        let sd = t.exp(half_lv);
        let eps_v = t.leaf(eps.clone());
        let noise = t.mul(sd, eps_v)?;
        let z = t.add(mu_r, noise)?;

        let (mu_x, lv_x) = gaussian_mlp(&mut t, z, dec, dec_layers)?;

        // log p(x|z) = -1/2 sum_d [ln 2pi + lv + (x - mu)^2 exp(-lv)]
        let x_rep = t.repeat_rows(xv, k);
        let diff = t.sub(x_rep, mu_x)?;
        let sq = t.square(diff);
        let neg_lv = t.scale(lv_x, -1.0);
        let prec = t.exp(neg_lv);
        let maha = t.mul(sq, prec)?;
        let per_dim = t.add(lv_x, maha)?;
        let s = t.row_sum(per_dim);
        let s = t.scale(s, -0.5);
        let log_px = t.add_scalar(s, -0.5 * d as f64 * LN_2PI);

        // log p(z) = -1/2 sum_j [ln 2pi + z^2]
        let zsq = t.square(z);
        let s = t.row_sum(zsq);
        let s = t.scale(s, -0.5);
        let log_pz = t.add_scalar(s, -0.5 * dz as f64 * LN_2PI);

        // log q(z|x) = -1/2 sum_j [ln 2pi + lv + eps^2]; (z - mu)/sigma = eps
        let eps_sq = t.leaf(eps.map(|e| e * e));
        let q_terms = t.add(lv_r, eps_sq)?;
        let s = t.row_sum(q_terms);
        let s = t.scale(s, -0.5);
        let log_q = t.add_scalar(s, -0.5 * dz as f64 * LN_2PI);

        let joint = t.add(log_px, log_pz)?;
        let log_w = t.sub(joint, log_q)?;
        let log_w = t.reshape(log_w, n, k)?;
        let lse = t.logsumexp_rows(log_w);
        let neg = t.scale(lse, -1.0);
        let losses = t.add_scalar(neg, (k as f64).ln());

        if let Some(index) = t.value(losses).as_slice().iter().position(|l| !l.is_finite()) {
            return Err(IwaeError::NonFiniteLoss { index });
        }
        Ok(LossGraph { tape: t, params, losses })
    }

    /// Loss for a single feature vector with fresh noise from `rng`.
    pub fn per_sample_loss<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        rng: &mut R,
    ) -> Result<(f64, LossGraph), IwaeError> {
        let xt = Tensor::from_vec(1, x.len(), x.to_vec());
        let eps = self.draw_noise(1, rng);
        let g = self.loss_graph(&xt, &eps)?;
        Ok((g.loss_values()[0], g))
    }

    /// Per-row losses, noise drawn row by row from `rng`.
    pub fn batch_losses<R: Rng + ?Sized>(&self, x: &Tensor, rng: &mut R) -> Result<Vec<f64>, IwaeError> {
        if x.cols() != self.arch.input_dim {
            return Err(IwaeError::DimMismatch { expected: self.arch.input_dim, got: x.cols() });
        }
        let eps = self.draw_noise(x.rows(), rng);
        self.losses_with_noise(x, &eps)
    }

    /// Per-row losses under fixed noise, without keeping the tape.
    pub fn losses_with_noise(&self, x: &Tensor, eps: &Tensor) -> Result<Vec<f64>, IwaeError> {
        if x.rows() == 0 {
            return Ok(Vec::new());
        }
        Ok(self.loss_graph(x, eps)?.loss_values().to_vec())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IwaeError> {
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            arch: self.arch.clone(),
            params: self
                .params
                .iter()
                .map(|p| StoredTensor { rows: p.rows(), cols: p.cols(), values: p.as_slice().to_vec() })
                .collect(),
        };
        let json = serde_json::to_string(&ck).map_err(|e| IwaeError::Format(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IwaeError> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| IwaeError::Format(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(IwaeError::Format(format!("unsupported checkpoint version {}", ck.version)));
        }
        let mut params = Vec::with_capacity(ck.params.len());
        for p in ck.params {
            if p.values.len() != p.rows * p.cols {
                return Err(IwaeError::Format("tensor length does not match its shape".into()));
            }
            params.push(Tensor::from_vec(p.rows, p.cols, p.values));
        }
        IwaeModel::from_params(ck.arch, params)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    arch: Architecture,
    params: Vec<StoredTensor>,
}

#[derive(Serialize, Deserialize)]
struct StoredTensor {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

/// ReLU hidden layers followed by linear mean and clamped log-variance heads.
fn gaussian_mlp(t: &mut Tape, input: Var, params: &[Var], hidden: usize) -> Result<(Var, Var), IwaeError> {
    let mut h = input;
    for layer in 0..hidden {
        let pre = t.matmul(h, params[2 * layer])?;
        let pre = t.add_row(pre, params[2 * layer + 1])?;
        h = t.relu(pre);
    }
    let base = 2 * hidden;
    let mu = t.matmul(h, params[base])?;
    let mu = t.add_row(mu, params[base + 1])?;
    let lv = t.matmul(h, params[base + 2])?;
    let lv = t.add_row(lv, params[base + 3])?;
    let lv = t.clamp(lv, LOGVAR_MIN, LOGVAR_MAX);
    Ok((mu, lv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::logsumexp;
    use crate::seeding::{rng_for, Stream};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(d: usize, dz: usize, k: usize, seed: u64) -> IwaeModel {
        let arch = Architecture { input_dim: d, latent_dim: dz, encoder_hidden: vec![6, 5], decoder_hidden: vec![5, 6], k };
        IwaeModel::new(arch, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn unit_input(d: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..d).map(|_| rng.random_range(0.0..1.0)).collect()
    }

    /// Direct scalar evaluation of the bound, independent of the tape.
    fn reference_loss(m: &IwaeModel, x: &[f64], eps: &Tensor) -> f64 {
        let mlp = |input: &[f64], params: &[Tensor], hidden: usize| {
            let mut h = input.to_vec();
            let affine = |h: &[f64], w: &Tensor, b: &Tensor| {
                (0..w.cols()).map(|j| b.get(0, j) + (0..w.rows()).map(|i| h[i] * w.get(i, j)).sum::<f64>()).collect::<Vec<_>>()
            };
            for l in 0..hidden {
                h = affine(&h, &params[2 * l], &params[2 * l + 1]).into_iter().map(|v| v.max(0.0)).collect();
            }
            let mu = affine(&h, &params[2 * hidden], &params[2 * hidden + 1]);
            let lv: Vec<f64> = affine(&h, &params[2 * hidden + 2], &params[2 * hidden + 3])
                .into_iter()
                .map(|v| v.clamp(LOGVAR_MIN, LOGVAR_MAX))
                .collect();
            (mu, lv)
        };
        let a = m.arch();
        let enc_n = 2 * (a.encoder_hidden.len() + 2);
        let (enc, dec) = m.params().split_at(enc_n);
        let (mu_z, lv_z) = mlp(x, enc, a.encoder_hidden.len());
        let mut log_w = Vec::new();
        for k in 0..a.k {
            let e = eps.row(k);
            let z: Vec<f64> = (0..a.latent_dim).map(|j| mu_z[j] + (0.5 * lv_z[j]).exp() * e[j]).collect();
            let (mu_x, lv_x) = mlp(&z, dec, a.decoder_hidden.len());
            let lpx: f64 = (0..a.input_dim)
                .map(|d| -0.5 * (LN_2PI + lv_x[d] + (x[d] - mu_x[d]).powi(2) / lv_x[d].exp()))
                .sum();
            let lpz: f64 = z.iter().map(|v| -0.5 * (LN_2PI + v * v)).sum();
            let lq: f64 = (0..a.latent_dim).map(|j| -0.5 * (LN_2PI + lv_z[j] + e[j] * e[j])).sum();
            log_w.push(lpx + lpz - lq);
        }
        -(logsumexp(&log_w) - (a.k as f64).ln())
    }

    #[test]
    fn tape_loss_matches_scalar_reference() {
        for seed in 0..5 {
            let m = tiny(5, 3, 3, seed);
            let x = unit_input(5, seed + 50);
            let eps = m.draw_noise(1, &mut ChaCha8Rng::seed_from_u64(seed + 99));
            let got = m.losses_with_noise(&Tensor::from_vec(1, 5, x.clone()), &eps).unwrap()[0];
            let want = reference_loss(&m, &x, &eps);
            assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn k1_is_the_single_draw_negative_elbo() {
        let m = tiny(4, 2, 1, 3);
        let x = unit_input(4, 4);
        let eps = m.draw_noise(1, &mut ChaCha8Rng::seed_from_u64(9));
        let g = m.loss_graph(&Tensor::from_vec(1, 4, x.clone()), &eps).unwrap();
        // With K = 1 the loss is minus the single log-weight (log K = 0).
        let l = g.loss_values()[0];
        assert!((l - reference_loss(&m, &x, &eps)).abs() < 1e-12);
    }

    #[test]
    fn single_row_batch_matches_per_sample_loss() {
        let m = tiny(4, 2, 2, 1);
        let x = unit_input(4, 2);
        let (l, _) = m.per_sample_loss(&x, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = m.batch_losses(&Tensor::from_vec(1, 4, x), &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(b, vec![l]);
    }

    #[test]
    fn batch_rows_match_sequential_draws() {
        let m = tiny(4, 2, 2, 1);
        let rows: Vec<Vec<f64>> = (0..5).map(|i| unit_input(4, 20 + i)).collect();
        let batch = m.batch_losses(&Tensor::from_rows(&rows), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (i, r) in rows.iter().enumerate() {
            let (l, _) = m.per_sample_loss(r, &mut rng).unwrap();
            assert!((l - batch[i]).abs() <= 1e-12 * l.abs().max(1.0));
        }
    }

    #[test]
    fn duplicated_rows_with_same_noise_give_same_loss() {
        let m = tiny(3, 2, 2, 8);
        let x = unit_input(3, 1);
        let one = m.draw_noise(1, &mut ChaCha8Rng::seed_from_u64(2));
        let mut eps = Tensor::zeros(4, 2);
        for r in 0..4 {
            eps.row_mut(r).copy_from_slice(one.row(r % 2));
        }
        let l = m.losses_with_noise(&Tensor::from_rows(&[x.clone(), x]), &eps).unwrap();
        assert_eq!(l[0], l[1]);
    }

    #[test]
    fn permuted_rows_with_content_seeded_noise_permute_losses() {
        let m = tiny(3, 2, 2, 4);
        let rows: Vec<Vec<f64>> = (0..6).map(|i| unit_input(3, 40 + i)).collect();
        let noise_for = |rows: &[Vec<f64>]| {
            let mut eps = Tensor::zeros(rows.len() * 2, 2);
            for (i, r) in rows.iter().enumerate() {
                let seed = r.iter().fold(0u64, |h, v| h.rotate_left(7) ^ v.to_bits());
                let e = m.draw_noise(1, &mut ChaCha8Rng::seed_from_u64(seed));
                eps.row_mut(2 * i).copy_from_slice(e.row(0));
                eps.row_mut(2 * i + 1).copy_from_slice(e.row(1));
            }
            eps
        };
        let base = m.losses_with_noise(&Tensor::from_rows(&rows), &noise_for(&rows)).unwrap();
        let perm = [3, 0, 5, 1, 4, 2];
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let got = m.losses_with_noise(&Tensor::from_rows(&shuffled), &noise_for(&shuffled)).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            assert!((got[j] - base[i]).abs() <= 1e-12 * base[i].abs().max(1.0));
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = tiny(4, 2, 2, 0);
        let err = m.batch_losses(&Tensor::zeros(2, 3), &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, IwaeError::DimMismatch { expected: 4, got: 3 }));
    }

    #[test]
    fn default_latent_dim_rule() {
        assert_eq!(default_latent_dim(1), 2);
        assert_eq!(default_latent_dim(9), 3);
        assert_eq!(default_latent_dim(32), 8);
        assert_eq!(default_latent_dim(166), 32);
    }

    #[test]
    fn param_names_follow_layout() {
        let m = tiny(3, 2, 1, 0);
        assert_eq!(m.param_name(0), "encoder.0.weight");
        assert_eq!(m.param_name(3), "encoder.1.bias");
        assert_eq!(m.param_name(4), "encoder.mean.weight");
        assert_eq!(m.param_name(7), "encoder.logvar.bias");
        assert_eq!(m.param_name(8), "decoder.0.weight");
        assert_eq!(m.param_name(15), "decoder.logvar.bias");
    }

    #[test]
    fn checkpoint_round_trip_is_lossless() {
        let m = IwaeModel::new(Architecture::for_input(7), &mut rng_for(3, Stream::Init, 0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        m.save(&p).unwrap();
        assert_eq!(IwaeModel::load(&p).unwrap(), m);
    }

    #[test]
    fn losses_are_finite_on_unit_cube_for_random_models() {
        for seed in 0..100 {
            let m = IwaeModel::new(Architecture::for_input(6), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
            let rows: Vec<Vec<f64>> = (0..8)
                .map(|i| match i {
                    0 => vec![0.0; 6],
                    1 => vec![1.0; 6],
                    _ => (0..6).map(|_| rng.random_range(0.0..1.0)).collect(),
                })
                .collect();
            let l = m.batch_losses(&Tensor::from_rows(&rows), &mut rng).unwrap();
            assert!(l.iter().all(|v| v.is_finite()));
        }
    }
}
