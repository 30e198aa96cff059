//! Adaptive loss truncation with batch increment.
//!
//! Training runs in two phases on one IWAE:
//!
//! 1. warm-up: `T0` Adam updates on plain mean losses over batches of `n0`;
//! 2. enhancement: for `t = 1..=T2`, a batch of `floor(n0 * gamma^(t-1))`
//!    rows, per-sample losses under the current parameters, the threshold
//!    `tau_t` = nearest-rank `rho`-quantile of those losses, and an update on
//!    the mean of the losses at or below `tau_t`.
//!
//! After every enhancement update with `t > T1` the whole dataset is scored
//! and the per-sample losses are summed; the outlier score is the average
//! over those `T2 - T1` passes.

use crate::data::Dataset;
use crate::iwae::{Architecture, IwaeError, IwaeModel};
use crate::metrics;
use crate::optim::{dp_aggregate, AdamState, DpConfig, OptimError};
use crate::seeding::{rng_for, Stream};
use crate::tensor::Tensor;
use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),
    #[error("non-finite loss in {phase} update {update} (dataset row {row})")]
    NonFiniteLoss { phase: &'static str, update: usize, row: usize },
    #[error("heldout data has {got} features, training data has {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("empty loss vector")]
    EmptyLosses,
    #[error("no loss at or below the threshold {tau}")]
    NothingKept { tau: f64 },
    #[error(transparent)]
    Model(#[from] IwaeError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Initial batch size.
    pub n0: usize,
    /// Batch growth factor per enhancement update (1 disables growth).
    pub gamma: f64,
    /// Quantile of batch losses kept by truncation (1 disables truncation).
    pub rho: f64,
    /// Warm-up updates.
    pub t0: usize,
    /// Updates before score accumulation starts.
    pub t1: usize,
    /// Total enhancement updates.
    pub t2: usize,
    /// Importance samples during training.
    pub k: usize,
    /// Importance samples in scoring passes; `None` uses `k`.
    pub score_k: Option<usize>,
    /// Latent size; `None` uses `clamp(ceil(D / 4), 2, 32)`.
    pub latent_dim: Option<usize>,
    pub lr: f64,
    pub seed: u64,
    pub dp: DpConfig,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            n0: 128,
            gamma: 1.03,
            rho: 0.92,
            t0: 10,
            t1: 60,
            t2: 80,
            k: 2,
            score_k: None,
            latent_dim: None,
            lr: 1e-3,
            seed: 0,
            dp: DpConfig::default(),
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidHyperParams(m));
        if self.n0 == 0 {
            return bad("n0 must be at least 1".into());
        }
        if !(self.gamma >= 1.0) || !self.gamma.is_finite() {
            return bad(format!("gamma must be >= 1, got {}", self.gamma));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad(format!("rho must be in (0, 1], got {}", self.rho));
        }
        if self.t1 >= self.t2 {
            return bad(format!("T1 ({}) must be smaller than T2 ({})", self.t1, self.t2));
        }
        if self.k == 0 || self.score_k == Some(0) {
            return bad("K must be at least 1".into());
        }
        if self.latent_dim == Some(0) {
            return bad("latent dim must be at least 1".into());
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.dp.enabled {
            self.dp.validate()?;
        }
        Ok(())
    }

    /// Default architecture for `input_dim` features with this K and latent size.
    pub fn architecture(&self, input_dim: usize) -> Architecture {
        let mut arch = Architecture::for_input(input_dim);
        arch.k = self.k;
        if let Some(dz) = self.latent_dim {
            arch.latent_dim = dz;
        }
        arch
    }

    pub fn scoring_k(&self) -> usize {
        self.score_k.unwrap_or(self.k)
    }
}

/// Freshly initialised model for `input_dim` features. `replica` selects an
/// independent initialisation stream under the same seed.
pub fn init_model(input_dim: usize, hp: &HyperParams, replica: u64) -> Result<IwaeModel, TrainError> {
    Ok(IwaeModel::new(hp.architecture(input_dim), &mut rng_for(hp.seed, Stream::Init, replica))?)
}

/// Batch size of enhancement update `t >= 1`: `floor(n0 * gamma^(t-1))`,
/// capped at the dataset size `n` and never below 1.
pub fn batch_size_at(t: usize, hp: &HyperParams, n: usize) -> usize {
    let exponent = t.saturating_sub(1) as i32;
    let raw = (hp.n0 as f64 * hp.gamma.powi(exponent)).floor();
    let raw = if raw >= usize::MAX as f64 { usize::MAX } else { raw as usize };
    raw.min(n).max(1)
}

/// `ceil(rho * len)` with products within 1e-9 of an integer taken as exact.
fn nearest_rank(rho: f64, len: usize) -> usize {
    let x = rho * len as f64;
    let r = x.round();
    let k = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    (k as usize).clamp(1, len)
}

/// Nearest-rank `rho`-quantile: the `ceil(rho * len)`-th smallest loss.
pub fn quantile_threshold(losses: &[f64], rho: f64) -> Result<f64, TrainError> {
    if losses.is_empty() {
        return Err(TrainError::EmptyLosses);
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(TrainError::InvalidHyperParams(format!("rho must be in (0, 1], got {rho}")));
    }
    let k = nearest_rank(rho, losses.len());
    let mut sorted = losses.to_vec();
    let (_, kth, _) = sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

/// Mean of the losses at or below `tau`, with the mask of kept entries.
pub fn truncated_loss(losses: &[f64], tau: f64) -> Result<(f64, Vec<bool>), TrainError> {
    let mask: Vec<bool> = losses.iter().map(|&l| l <= tau).collect();
    let kept = mask.iter().filter(|&&m| m).count();
    if kept == 0 {
        return Err(TrainError::NothingKept { tau });
    }
    let sum: f64 = losses.iter().zip(&mask).filter(|(_, &m)| m).map(|(l, _)| l).sum();
    Ok((sum / kept as f64, mask))
}

/// Running per-sample sums of scoring-pass losses.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreAccumulator {
    sums: Vec<f64>,
    passes: usize,
}

impl ScoreAccumulator {
    pub fn new(n: usize) -> Self {
        ScoreAccumulator { sums: vec![0.0; n], passes: 0 }
    }

    pub fn add_pass(&mut self, losses: &[f64]) {
        debug_assert_eq!(losses.len(), self.sums.len());
        for (s, l) in self.sums.iter_mut().zip(losses) {
            *s += l;
        }
        self.passes += 1;
    }

    pub fn passes(&self) -> usize {
        self.passes
    }

    /// Average loss per sample over the recorded passes.
    pub fn scores(&self) -> Vec<f64> {
        let p = self.passes.max(1) as f64;
        self.sums.iter().map(|s| s / p).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// Enhancement update index, starting at 1.
    pub t: usize,
    pub batch_size: usize,
    /// Threshold applied at this update (`inf` when nothing is truncated).
    pub tau: f64,
    pub kept: usize,
    pub kept_outlier_frac: Option<f64>,
    /// Mean loss over the kept samples; `None` when nothing was kept.
    pub mean_loss: Option<f64>,
    /// Training AUC of the accumulated scores so far (labelled data, `t > T1`).
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainTrace {
    /// CSV with columns `t,n_t,tau,kept,kept_outlier_frac,mean_loss,auc`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,n_t,tau,kept,kept_outlier_frac,mean_loss,auc")?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{:?},{},{},{},{}",
                r.t,
                r.batch_size,
                r.tau,
                r.kept,
                opt(r.kept_outlier_frac),
                opt(r.mean_loss),
                opt(r.auc)
            )?;
        }
        Ok(())
    }

    /// Mean kept-set outlier fraction over updates `from..=to`.
    pub fn mean_kept_outlier_frac(&self, from: usize, to: usize) -> Option<f64> {
        let v: Vec<f64> =
            self.rows.iter().filter(|r| r.t >= from && r.t <= to).filter_map(|r| r.kept_outlier_frac).collect();
        (!v.is_empty()).then(|| metrics::mean(&v))
    }
}

/// Writes `sample_index,score` rows.
pub fn write_scores_csv<W: Write>(scores: &[f64], mut w: W) -> std::io::Result<()> {
    writeln!(w, "sample_index,score")?;
    for (i, s) in scores.iter().enumerate() {
        writeln!(w, "{i},{s:?}")?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: IwaeModel,
    /// Ensemble score per training row.
    pub scores: Vec<f64>,
    /// Ensemble score per heldout row, when heldout data was supplied.
    pub heldout_scores: Option<Vec<f64>>,
    pub trace: TrainTrace,
}

/// Training state shared by ALTBI and the fixed-batch baselines.
pub struct Trainer<'a> {
    ds: &'a Dataset,
    hp: HyperParams,
    replica: u64,
    model: IwaeModel,
    adam: AdamState,
    batch_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    dp_rng: ChaCha8Rng,
    warmup_steps: usize,
}

/// Result of one enhancement update.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub batch: Vec<usize>,
    pub losses: Vec<f64>,
    pub tau: f64,
    pub mask: Vec<bool>,
}

impl<'a> Trainer<'a> {
    pub fn new(ds: &'a Dataset, model: IwaeModel, hp: &HyperParams, replica: u64) -> Result<Self, TrainError> {
        hp.validate()?;
        if model.input_dim() != ds.dim() {
            return Err(TrainError::DimMismatch { expected: model.input_dim(), got: ds.dim() });
        }
        if ds.n() == 0 {
            return Err(TrainError::InvalidHyperParams("dataset is empty".into()));
        }
        let adam = AdamState::new(model.params(), hp.lr);
        Ok(Trainer {
            ds,
            hp: hp.clone(),
            replica,
            model,
            adam,
            batch_rng: rng_for(hp.seed, Stream::Batch, replica),
            noise_rng: rng_for(hp.seed, Stream::TrainNoise, replica),
            dp_rng: rng_for(hp.seed, Stream::DpNoise, replica),
            warmup_steps: 0,
        })
    }

    pub fn model(&self) -> &IwaeModel {
        &self.model
    }

    pub fn into_model(self) -> IwaeModel {
        self.model
    }

    /// Uniform sample without replacement; the whole dataset when `size >= n`.
    fn draw_batch(&mut self, size: usize) -> Vec<usize> {
        let n = self.ds.n();
        if size >= n {
            (0..n).collect()
        } else {
            index::sample(&mut self.batch_rng, n, size).into_vec()
        }
    }

    fn non_finite(&self, err: IwaeError, phase: &'static str, update: usize, batch: &[usize]) -> TrainError {
        match err {
            IwaeError::NonFiniteLoss { index } => TrainError::NonFiniteLoss { phase, update, row: batch[index] },
            other => other.into(),
        }
    }

    /// Weighted-sum gradient step: minimises `sum_i weights[i] * l_i` over the batch graph.
    fn weighted_step(
        &mut self,
        graph: crate::iwae::LossGraph,
        weights: Vec<f64>,
    ) -> Result<(), TrainError> {
        let mut graph = graph;
        let w = graph.tape.leaf(Tensor::column(weights));
        let weighted = graph.tape.mul(graph.losses, w).map_err(IwaeError::from)?;
        let root = graph.tape.sum(weighted);
        let mut grads = graph.tape.backward(root).map_err(IwaeError::from)?;
        let g: Vec<Tensor> = graph.params.iter().map(|&p| grads.take(p)).collect();
        self.adam.step(self.model.params_mut(), &g)?;
        Ok(())
    }

    /// One update on the plain mean loss of a batch of `n0` rows.
    pub fn warm_up_step(&mut self) -> Result<Vec<usize>, TrainError> {
        self.warmup_steps += 1;
        let batch = self.draw_batch(self.hp.n0);
        let x = self.ds.x.select_rows(&batch);
        let eps = self.model.draw_noise(batch.len(), &mut self.noise_rng);
        let graph = self
            .model
            .loss_graph(&x, &eps)
            .map_err(|e| self.non_finite(e, "warm-up", self.warmup_steps, &batch))?;
        let w = vec![1.0 / batch.len() as f64; batch.len()];
        self.weighted_step(graph, w)?;
        Ok(batch)
    }

    /// Enhancement update `t`: truncated mean over the batch at threshold
    /// `tau_t`, the `rho`-quantile of the batch's own losses.
    pub fn truncated_step(&mut self, t: usize) -> Result<StepReport, TrainError> {
        let size = batch_size_at(t, &self.hp, self.ds.n());
        let batch = self.draw_batch(size);
        let x = self.ds.x.select_rows(&batch);
        let eps = self.model.draw_noise(batch.len(), &mut self.noise_rng);
        let graph = self.model.loss_graph(&x, &eps).map_err(|e| self.non_finite(e, "enhancement", t, &batch))?;
        let losses = graph.loss_values().to_vec();
        let tau = quantile_threshold(&losses, self.hp.rho)?;
        let (_, mask) = truncated_loss(&losses, tau)?;
        let kept = mask.iter().filter(|&&m| m).count() as f64;
        let w = mask.iter().map(|&m| if m { 1.0 / kept } else { 0.0 }).collect();
        self.weighted_step(graph, w)?;
        Ok(StepReport { batch, losses, tau, mask })
    }

    /// DP enhancement update `t`. Per-sample gradients of kept samples are
    /// clipped, summed, noised and averaged over the batch size. With
    /// `shift_threshold`, `prev_tau` (the previous update's quantile) decides
    /// which samples are kept and is replaced by this update's quantile.
    pub fn dp_step(&mut self, t: usize, prev_tau: &mut Option<f64>) -> Result<StepReport, TrainError> {
        let size = batch_size_at(t, &self.hp, self.ds.n());
        let batch = self.draw_batch(size);
        let eps = self.model.draw_noise(batch.len(), &mut self.noise_rng);
        let (k, d) = (self.model.k(), self.ds.dim());

        let mut graphs = Vec::with_capacity(batch.len());
        let mut losses = Vec::with_capacity(batch.len());
        for (j, &row) in batch.iter().enumerate() {
            let x = Tensor::from_vec(1, d, self.ds.x.row(row).to_vec());
            let e = Tensor::from_vec(k, eps.cols(), eps.as_slice()[j * k * eps.cols()..(j + 1) * k * eps.cols()].to_vec());
            let g = self
                .model
                .loss_graph(&x, &e)
                .map_err(|_| TrainError::NonFiniteLoss { phase: "dp enhancement", update: t, row })?;
            losses.push(g.loss_values()[0]);
            graphs.push(g);
        }

        let current = quantile_threshold(&losses, self.hp.rho)?;
        let tau = if self.hp.dp.shift_threshold {
            prev_tau.replace(current).unwrap_or(f64::INFINITY)
        } else {
            current
        };
        let mask: Vec<bool> = losses.iter().map(|&l| l <= tau).collect();

        // truncated samples enter as zero bundles: they count towards the batch size
        let mut per_sample = Vec::with_capacity(batch.len());
        for (graph, &keep) in graphs.into_iter().zip(&mask) {
            if keep {
                let mut grads = graph.tape.backward(graph.losses).map_err(IwaeError::from)?;
                per_sample.push(graph.params.iter().map(|&p| grads.take(p)).collect::<Vec<_>>());
            } else {
                per_sample.push(self.model.params().iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect());
            }
        }
        let g = dp_aggregate(per_sample, &self.hp.dp, &mut self.dp_rng)?;
        self.adam.step(self.model.params_mut(), &g)?;
        Ok(StepReport { batch, losses, tau, mask })
    }

    /// Per-row losses of `x` under the current parameters with the noise of
    /// scoring pass `pass`. Identical rows get identical noise across calls
    /// with the same `pass`.
    pub fn score_pass(&self, x: &Tensor, pass: usize) -> Result<Vec<f64>, TrainError> {
        let model = self.model.with_k(self.hp.scoring_k())?;
        let mut rng = rng_for(self.hp.seed, Stream::ScoreNoise, (self.replica << 20) | pass as u64);
        model.batch_losses(x, &mut rng).map_err(|e| match e {
            IwaeError::NonFiniteLoss { index } => TrainError::NonFiniteLoss { phase: "scoring", update: pass, row: index },
            other => other.into(),
        })
    }
}

fn trace_row(report: &StepReport, t: usize, labels: Option<&[u8]>, auc: Option<f64>) -> TraceRow {
    let kept = report.mask.iter().filter(|&&m| m).count();
    let mean_loss = (kept > 0).then(|| {
        report.losses.iter().zip(&report.mask).filter(|(_, &m)| m).map(|(l, _)| l).sum::<f64>() / kept as f64
    });
    let kept_outlier_frac =
        labels.and_then(|l| metrics::kept_outlier_fraction(&report.mask, l, &report.batch).ok());
    TraceRow { t, batch_size: report.batch.len(), tau: report.tau, kept, kept_outlier_frac, mean_loss, auc }
}

fn run(
    ds: &Dataset,
    heldout: Option<&Tensor>,
    model: IwaeModel,
    hp: &HyperParams,
    dp: bool,
) -> Result<TrainOutcome, TrainError> {
    if let Some(h) = heldout {
        if h.cols() != ds.dim() && h.rows() > 0 {
            return Err(TrainError::DimMismatch { expected: ds.dim(), got: h.cols() });
        }
    }
    let mut tr = Trainer::new(ds, model, hp, 0)?;
    for _ in 0..hp.t0 {
        tr.warm_up_step()?;
    }

    let labels = ds.labels.as_deref();
    let mut acc = ScoreAccumulator::new(ds.n());
    let mut held_acc = heldout.map(|h| ScoreAccumulator::new(h.rows()));
    let mut trace = TrainTrace::default();
    let mut prev_tau = None;
    for t in 1..=hp.t2 {
        let report = if dp { tr.dp_step(t, &mut prev_tau)? } else { tr.truncated_step(t)? };
        let mut auc = None;
        if t > hp.t1 {
            acc.add_pass(&tr.score_pass(&ds.x, t)?);
            if let (Some(h), Some(a)) = (heldout, held_acc.as_mut()) {
                if h.rows() > 0 {
                    a.add_pass(&tr.score_pass(h, t)?);
                }
            }
            auc = labels.and_then(|l| metrics::roc_auc(&acc.scores(), l).ok());
        }
        trace.rows.push(trace_row(&report, t, labels, auc));
    }

    Ok(TrainOutcome {
        scores: acc.scores(),
        heldout_scores: held_acc.map(|a| a.scores()),
        model: tr.into_model(),
        trace,
    })
}

/// Full two-phase training; scores are the ensemble over updates `T1+1..=T2`.
pub fn train(ds: &Dataset, model: IwaeModel, hp: &HyperParams) -> Result<TrainOutcome, TrainError> {
    run(ds, None, model, hp, false)
}

/// As [`train`], also scoring `heldout` rows in every scoring pass.
pub fn train_with_heldout(
    ds: &Dataset,
    heldout: &Tensor,
    model: IwaeModel,
    hp: &HyperParams,
) -> Result<TrainOutcome, TrainError> {
    run(ds, Some(heldout), model, hp, hp.dp.enabled)
}

/// Ensemble scores for `heldout` rows from a training run on `ds`.
pub fn score_heldout(ds: &Dataset, heldout: &Tensor, model: IwaeModel, hp: &HyperParams) -> Result<Vec<f64>, TrainError> {
    if heldout.rows() == 0 {
        return Ok(Vec::new());
    }
    Ok(train_with_heldout(ds, heldout, model, hp)?.heldout_scores.unwrap_or_default())
}

/// DP-SGD variant of [`train`]; requires `hp.dp.enabled`.
pub fn dp_train(ds: &Dataset, model: IwaeModel, hp: &HyperParams) -> Result<TrainOutcome, TrainError> {
    if !hp.dp.enabled {
        return Err(TrainError::InvalidHyperParams("dp_train needs dp.enabled".into()));
    }
    run(ds, None, model, hp, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let hp = HyperParams::default();
        assert_eq!(batch_size_at(1, &hp, 10_000), 128);
        assert_eq!(batch_size_at(2, &hp, 10_000), 131);
        assert_eq!(batch_size_at(80, &hp, 10_000), 1322);
        assert_eq!(batch_size_at(80, &hp, 500), 500);
        let flat = HyperParams { gamma: 1.0, ..hp };
        assert_eq!(batch_size_at(80, &flat, 10_000), 128);
        let tiny = HyperParams { n0: 1, gamma: 1.0, ..HyperParams::default() };
        assert_eq!(batch_size_at(3, &tiny, 0), 1);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile_threshold(&[0.3; 7], 0.5).unwrap(), 0.3);
        let v: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(quantile_threshold(&v, 0.92).unwrap(), 1.0);
        assert_eq!(quantile_threshold(&v, 1.0).unwrap(), 1.0);
        assert_eq!(quantile_threshold(&v, 0.5).unwrap(), 0.5);
        assert!(matches!(quantile_threshold(&[], 0.5), Err(TrainError::EmptyLosses)));
    }

    #[test]
    fn truncated_examples() {
        let (l, m) = truncated_loss(&[0.2, 0.4, 0.6, 0.8], 0.5).unwrap();
        assert!((l - 0.3).abs() < 1e-15);
        assert_eq!(m, vec![true, true, false, false]);
        let (l, m) = truncated_loss(&[0.2, 0.4], 10.0).unwrap();
        assert!((l - 0.3).abs() < 1e-15);
        assert!(m.iter().all(|&k| k));
        assert!(matches!(truncated_loss(&[1.0, 2.0], 0.5), Err(TrainError::NothingKept { .. })));
    }

    #[test]
    fn hyperparam_validation() {
        assert!(HyperParams::default().validate().is_ok());
        for bad in [
            HyperParams { rho: 0.0, ..Default::default() },
            HyperParams { rho: 1.1, ..Default::default() },
            HyperParams { gamma: 0.9, ..Default::default() },
            HyperParams { t1: 80, t2: 80, ..Default::default() },
            HyperParams { k: 0, ..Default::default() },
            HyperParams { n0: 0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(TrainError::InvalidHyperParams(_))), "{bad:?}");
        }
    }

    #[test]
    fn accumulator_averages_passes() {
        let mut a = ScoreAccumulator::new(2);
        a.add_pass(&[1.0, 2.0]);
        a.add_pass(&[3.0, 6.0]);
        assert_eq!(a.passes(), 2);
        assert_eq!(a.scores(), vec![2.0, 4.0]);
    }

    #[test]
    fn trace_csv_layout() {
        let trace = TrainTrace {
            rows: vec![TraceRow {
                t: 1,
                batch_size: 128,
                tau: 1.5,
                kept: 118,
                kept_outlier_frac: Some(0.0),
                mean_loss: Some(-2.25),
                auc: None,
            }],
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,n_t,tau,kept,kept_outlier_frac,mean_loss,auc\n1,128,1.5,118,0.0,-2.25,\n");
    }
}
