//! Reference detectors: ODIM (bi-modality-selected update, averaged over
//! independently initialised models) and plain fixed-batch IWAE scoring.

use crate::data::Dataset;
use crate::trainer::{init_model, HyperParams, TrainError, Trainer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const VAR_FLOOR: f64 = 1e-8;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("GMM needs at least two distinct values")]
    Degenerate,
    #[error("invalid ODIM config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Two-component 1-D Gaussian mixture, components ordered by mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gmm1d {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub variances: [f64; 2],
    /// Log-likelihood after initialisation and after every accepted EM step.
    pub log_likelihoods: Vec<f64>,
}

impl Gmm1d {
    fn log_density(&self, c: usize, x: f64) -> f64 {
        let v = self.variances[c];
        self.weights[c].ln() - 0.5 * (LN_2PI + v.ln() + (x - self.means[c]).powi(2) / v)
    }

    pub fn log_likelihood(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .map(|&x| {
                let (a, b) = (self.log_density(0, x), self.log_density(1, x));
                let m = a.max(b);
                m + ((a - m).exp() + (b - m).exp()).ln()
            })
            .sum()
    }

    /// Posterior probability of each component for every value.
    pub fn responsibilities(&self, values: &[f64]) -> Vec<[f64; 2]> {
        values
            .iter()
            .map(|&x| {
                let (a, b) = (self.log_density(0, x), self.log_density(1, x));
                let r1 = 1.0 / (1.0 + (a - b).exp());
                [1.0 - r1, r1]
            })
            .collect()
    }

    /// W2 distance between the two fitted components.
    pub fn separation(&self) -> f64 {
        w2_gaussians((self.means[0], self.variances[0]), (self.means[1], self.variances[1]))
    }

    fn canonical(mut self) -> Self {
        if self.means[0] > self.means[1] {
            self.weights.swap(0, 1);
            self.means.swap(0, 1);
            self.variances.swap(0, 1);
        }
        self
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// EM fit of a two-component mixture. Starts from means at the 25th/75th
/// percentiles, equal weights and the sample variance; stops once the
/// log-likelihood gain drops below `tol` or after `max_iters` steps. A step
/// that would lower the log-likelihood (rounding near convergence) is
/// discarded, so the recorded sequence never decreases.
pub fn fit_gmm1d(values: &[f64], max_iters: usize, tol: f64) -> Result<Gmm1d, BaselineError> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.len() < 2 || sorted[0] == sorted[sorted.len() - 1] || !sorted.iter().all(|v| v.is_finite()) {
        return Err(BaselineError::Degenerate);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).max(VAR_FLOOR);
    let mut lo = percentile(&sorted, 0.25);
    let mut hi = percentile(&sorted, 0.75);
    if lo == hi {
        lo = sorted[0];
        hi = sorted[sorted.len() - 1];
    }

    let mut g = Gmm1d { weights: [0.5, 0.5], means: [lo, hi], variances: [var, var], log_likelihoods: Vec::new() };
    let mut ll = g.log_likelihood(values);
    g.log_likelihoods.push(ll);
    for _ in 0..max_iters {
        let resp = g.responsibilities(values);
        let mut next = g.clone();
        for c in 0..2 {
            let nk: f64 = resp.iter().map(|r| r[c]).sum();
            if nk <= 0.0 {
                continue;
            }
            let mu = resp.iter().zip(values).map(|(r, x)| r[c] * x).sum::<f64>() / nk;
            let v = resp.iter().zip(values).map(|(r, x)| r[c] * (x - mu).powi(2)).sum::<f64>() / nk;
            next.weights[c] = nk / n;
            next.means[c] = mu;
            next.variances[c] = v.max(VAR_FLOOR);
        }
        let next_ll = next.log_likelihood(values);
        if !(next_ll >= ll) {
            break;
        }
        let gain = next_ll - ll;
        g = next;
        ll = next_ll;
        g.log_likelihoods.push(ll);
        if gain < tol {
            break;
        }
    }
    Ok(g.canonical())
}

/// Closed-form W2 distance between 1-D Gaussians given as `(mean, variance)`.
pub fn w2_gaussians(c1: (f64, f64), c2: (f64, f64)) -> f64 {
    let ds = c1.1.sqrt() - c2.1.sqrt();
    ((c1.0 - c2.0).powi(2) + ds * ds).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdimConfig {
    /// Independently initialised models (`B`).
    pub models: usize,
    pub max_updates: usize,
    pub batch_size: usize,
    pub gmm_max_iters: usize,
    pub gmm_tol: f64,
    /// Use this update for every model instead of the W2 argmax.
    pub forced_update: Option<usize>,
}

impl Default for OdimConfig {
    fn default() -> Self {
        OdimConfig { models: 3, max_updates: 100, batch_size: 128, gmm_max_iters: 200, gmm_tol: 1e-8, forced_update: None }
    }
}

impl OdimConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        let bad = |m: &str| Err(BaselineError::InvalidConfig(m.into()));
        if self.models == 0 {
            return bad("B must be at least 1");
        }
        if self.max_updates == 0 || self.batch_size == 0 {
            return bad("updates and batch size must be at least 1");
        }
        match self.forced_update {
            Some(u) if u == 0 || u > self.max_updates => bad("forced update must lie in 1..=max_updates"),
            _ => Ok(()),
        }
    }
}

/// Per-model outcome of an ODIM run.
#[derive(Clone, Debug, PartialEq)]
pub struct OdimModelRun {
    pub selected_update: usize,
    /// W2 separation per update, index 0 = update 1.
    pub separations: Vec<f64>,
    pub losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OdimOutcome {
    pub scores: Vec<f64>,
    pub runs: Vec<OdimModelRun>,
}

/// Update (1-based) whose loss vector has the largest W2 gap between the
/// two mixture components; earliest on ties, degenerate updates count as 0.
pub fn select_update(per_update: &[Vec<f64>], gmm_max_iters: usize, gmm_tol: f64) -> (usize, Vec<f64>) {
    let seps: Vec<f64> = per_update
        .iter()
        .map(|l| fit_gmm1d(l, gmm_max_iters, gmm_tol).map(|g| g.separation()).unwrap_or(0.0))
        .collect();
    let mut best = 0;
    for (i, &s) in seps.iter().enumerate() {
        if s > seps[best] {
            best = i;
        }
    }
    (best + 1, seps)
}

pub fn odim_train_and_score(ds: &Dataset, cfg: &OdimConfig, hp: &HyperParams) -> Result<OdimOutcome, BaselineError> {
    cfg.validate()?;
    let hp = HyperParams { n0: cfg.batch_size, gamma: 1.0, rho: 1.0, ..hp.clone() };
    let mut runs = Vec::with_capacity(cfg.models);
    for b in 0..cfg.models as u64 {
        let model = init_model(ds.dim(), &hp, b)?;
        let mut tr = Trainer::new(ds, model, &hp, b)?;
        let mut per_update = Vec::with_capacity(cfg.max_updates);
        for u in 1..=cfg.max_updates {
            tr.warm_up_step()?;
            per_update.push(tr.score_pass(&ds.x, u)?);
        }
        let (mut selected, separations) = select_update(&per_update, cfg.gmm_max_iters, cfg.gmm_tol);
        if let Some(u) = cfg.forced_update {
            selected = u;
        }
        let losses = per_update.swap_remove(selected - 1);
        runs.push(OdimModelRun { selected_update: selected, separations, losses });
    }
    let mut scores = vec![0.0; ds.n()];
    for r in &runs {
        for (s, l) in scores.iter_mut().zip(&r.losses) {
            *s += l;
        }
    }
    let b = runs.len() as f64;
    scores.iter_mut().for_each(|s| *s /= b);
    Ok(OdimOutcome { scores, runs })
}

/// Per-sample losses after `at_update` plain updates (batch `n0`, no
/// truncation, no growth). `at_update = 0` scores the freshly initialised model.
pub fn plain_score(ds: &Dataset, hp: &HyperParams, at_update: usize) -> Result<Vec<f64>, BaselineError> {
    let model = init_model(ds.dim(), hp, 0)?;
    let mut tr = Trainer::new(ds, model, hp, 0)?;
    for _ in 0..at_update {
        tr.warm_up_step()?;
    }
    Ok(tr.score_pass(&ds.x, at_update)?)
}
