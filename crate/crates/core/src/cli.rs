//! Command-line front end: argument parsing, multi-seed runs, output files.
//!
//! Every run writes `<out>/seed-<s>/scores.csv` (and `trace.csv` for the
//! truncated trainers) per seed plus `<out>/report.json`.

use crate::baselines::{odim_train_and_score, plain_score, BaselineError, OdimConfig};
use crate::data::{self, DataError, Dataset, OutlierMode, SynthSpec};
use crate::metrics::{self, EvalResult, MetricError};
use crate::optim::DpConfig;
use crate::tensor::Tensor;
use crate::trainer::{self, init_model, HyperParams, TrainError, TrainTrace};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Parser)]
#[command(name = "altbi", version, about = "Unsupervised outlier detection with adaptive loss truncation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train with truncation and batch increment; score the training rows.
    Train(TrainArgs),
    /// As `train`, with clipped and noised per-sample gradients.
    DpTrain(DpTrainArgs),
    /// ODIM baseline.
    Odim(OdimArgs),
    /// Plain fixed-batch training, scored at one update.
    Plain(PlainArgs),
    /// ROC-AUC and PR-AUC of a score file against labels.
    Eval(EvalArgs),
    /// Write a synthetic labelled dataset.
    Synth(SynthArgs),
    /// Repeat `train` over values of one hyperparameter.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Input CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the 0/1 label column (removed from the features).
    #[arg(long)]
    pub label: Option<String>,
    /// Skip min-max scaling.
    #[arg(long)]
    pub no_scale: bool,
    /// Semi-supervised protocol: train on this fraction of the inliers, score the rest.
    #[arg(long, value_name = "RATIO")]
    pub ssod: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct HpArgs {
    #[arg(long, default_value_t = 128)]
    pub n0: usize,
    #[arg(long, default_value_t = 1.03)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.92)]
    pub rho: f64,
    #[arg(long, default_value_t = 10)]
    pub t0: usize,
    #[arg(long, default_value_t = 60)]
    pub t1: usize,
    #[arg(long, default_value_t = 80)]
    pub t2: usize,
    /// Importance samples.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Importance samples in scoring passes (defaults to K).
    #[arg(long)]
    pub score_k: Option<usize>,
    /// Latent dimension (defaults to clamp(ceil(D/4), 2, 32)).
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
}

impl HpArgs {
    pub fn to_hyper_params(&self) -> HyperParams {
        HyperParams {
            n0: self.n0,
            gamma: self.gamma,
            rho: self.rho,
            t0: self.t0,
            t1: self.t1,
            t2: self.t2,
            k: self.k,
            score_k: self.score_k,
            latent_dim: self.latent_dim,
            lr: self.lr,
            seed: 0,
            dp: DpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hp: HpArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DpTrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hp: HpArgs,
    /// Per-sample clipping norm C.
    #[arg(long, default_value_t = 10.0)]
    pub clip: f64,
    /// Noise multiplier sigma.
    #[arg(long, default_value_t = 0.7)]
    pub sigma: f64,
    /// Truncate with the current update's threshold instead of the previous one.
    #[arg(long)]
    pub no_shift: bool,
}

#[derive(Debug, Clone, Args)]
pub struct OdimArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hp: HpArgs,
    /// Number of independently initialised models (B).
    #[arg(long, default_value_t = 3)]
    pub models: usize,
    #[arg(long, default_value_t = 100)]
    pub updates: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
}

#[derive(Debug, Clone, Args)]
pub struct PlainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hp: HpArgs,
    /// Number of updates before scoring.
    #[arg(long, default_value_t = 100)]
    pub at_update: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Score CSV; the last column is used.
    #[arg(long)]
    pub scores: PathBuf,
    /// Label CSV; the `--label` column, or the last column.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub label: Option<String>,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutlierKind {
    Uniform,
    Shifted,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 2)]
    pub components: usize,
    #[arg(long, default_value_t = 3.0)]
    pub margin: f64,
    #[arg(long, value_enum, default_value_t = OutlierKind::Uniform)]
    pub outliers: OutlierKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hp: HpArgs,
    /// Hyperparameter to vary: rho, gamma, k, lr, n0, t0, t1, t2.
    #[arg(long)]
    pub param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Train,
    DpTrain,
    Odim,
    Plain,
}

/// Effective configuration of one multi-seed run; echoed in the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub data: PathBuf,
    pub label: Option<String>,
    pub scale: bool,
    pub ssod_ratio: Option<f64>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Seed field is ignored; each run uses its entry of `seeds`.
    pub hp: HyperParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub odim: Option<OdimConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub at_update: Option<usize>,
}

impl RunConfig {
    fn new(method: Method, d: &DataArgs, hp: HyperParams) -> Self {
        RunConfig {
            method,
            data: d.data.clone(),
            label: d.label.clone(),
            scale: !d.no_scale,
            ssod_ratio: d.ssod,
            seeds: d.seeds.clone(),
            out: d.out.clone(),
            hp,
            odim: None,
            at_update: None,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Invalid("at least one seed is required".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(CliError::Invalid("seeds must be distinct".into()));
        }
        if let Some(r) = self.ssod_ratio {
            if !matches!(self.method, Method::Train | Method::DpTrain) {
                return Err(CliError::Invalid("--ssod is only available for train and dp-train".into()));
            }
            if self.label.is_none() {
                return Err(CliError::Invalid("--ssod needs --label".into()));
            }
            if !(r > 0.0 && r < 1.0) {
                return Err(CliError::Invalid(format!("--ssod ratio must be in (0, 1), got {r}")));
            }
        }
        self.hp.validate()?;
        if let Some(o) = &self.odim {
            o.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub auc: Option<f64>,
    pub prauc: Option<f64>,
    pub scores_path: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: RunConfig,
    pub seeds: Vec<SeedResult>,
    pub mean_auc: Option<f64>,
    pub std_auc: Option<f64>,
    pub mean_prauc: Option<f64>,
    pub std_prauc: Option<f64>,
    pub wall_clock_seconds: f64,
}

/// Training and evaluation rows for one seed.
struct Prepared {
    train: Dataset,
    eval_x: Option<Tensor>,
    eval_labels: Option<Vec<u8>>,
}

fn prepare(full: &Dataset, cfg: &RunConfig, seed: u64) -> Result<Prepared, CliError> {
    match cfg.ssod_ratio {
        None => {
            let train = if cfg.scale { data::minmax_scale(full) } else { full.clone() };
            let labels = train.labels.clone();
            Ok(Prepared { train, eval_x: None, eval_labels: labels })
        }
        Some(ratio) => {
            let split = data::split_ssod(full, ratio, seed)?;
            let (train, test_x) = if cfg.scale {
                let train = data::minmax_scale(&split.train);
                let scaler = train.scaling.clone().expect("scaled dataset keeps its scaler");
                let x = scaler.apply(&split.test.x)?;
                (train, x)
            } else {
                (split.train, split.test.x.clone())
            };
            Ok(Prepared { train, eval_x: Some(test_x), eval_labels: split.test.labels })
        }
    }
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(io_err(path))?;
    std::io::Write::flush(&mut w).map_err(io_err(path))
}

fn score_seed(p: &Prepared, cfg: &RunConfig, seed: u64) -> Result<(Vec<f64>, Option<TrainTrace>), CliError> {
    let hp = HyperParams { seed, ..cfg.hp.clone() };
    let ds = &p.train;
    Ok(match cfg.method {
        Method::Train | Method::DpTrain => {
            let model = init_model(ds.dim(), &hp, 0)?;
            let out = match (&p.eval_x, cfg.method == Method::DpTrain) {
                (Some(x), _) => trainer::train_with_heldout(ds, x, model, &hp)?,
                (None, false) => trainer::train(ds, model, &hp)?,
                (None, true) => trainer::dp_train(ds, model, &hp)?,
            };
            let scores = match out.heldout_scores {
                Some(s) => s,
                None => out.scores,
            };
            (scores, Some(out.trace))
        }
        Method::Odim => {
            let o = cfg.odim.clone().unwrap_or_default();
            (odim_train_and_score(ds, &o, &hp)?.scores, None)
        }
        Method::Plain => (plain_score(ds, &hp, cfg.at_update.unwrap_or(100))?, None),
    })
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        (None, None)
    } else {
        (Some(metrics::mean(v)), Some(metrics::std_dev(v)))
    }
}

/// Runs every seed in order, writes the per-seed files and `report.json`.
pub fn run(cfg: &RunConfig) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let full = data::load_csv(&cfg.data, cfg.label.as_deref())?;
    create_dir(&cfg.out)?;

    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let p = prepare(&full, cfg, seed)?;
        let (scores, trace) = score_seed(&p, cfg, seed)?;
        let dir = cfg.out.join(format!("seed-{seed}"));
        create_dir(&dir)?;
        let scores_path = dir.join("scores.csv");
        write_with(&scores_path, |w| trainer::write_scores_csv(&scores, w))?;
        let trace_path = match trace {
            Some(t) => {
                let path = dir.join("trace.csv");
                write_with(&path, |w| t.write_csv(w))?;
                Some(path)
            }
            None => None,
        };
        let eval = p.eval_labels.as_deref().and_then(|l| metrics::evaluate(&scores, l).ok());
        seeds.push(SeedResult {
            seed,
            auc: eval.map(|e| e.auc),
            prauc: eval.map(|e| e.prauc),
            scores_path,
            trace_path,
        });
    }

    let aucs: Vec<f64> = seeds.iter().filter_map(|s| s.auc).collect();
    let praucs: Vec<f64> = seeds.iter().filter_map(|s| s.prauc).collect();
    let (mean_auc, std_auc) = mean_std(&aucs);
    let (mean_prauc, std_prauc) = mean_std(&praucs);
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        seeds,
        mean_auc,
        std_auc,
        mean_prauc,
        std_prauc,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let path = cfg.out.join("report.json");
    let json = serde_json::to_string_pretty(&report)?;
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub value: f64,
    pub mean_auc: Option<f64>,
    pub std_auc: Option<f64>,
    pub report_path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub param: String,
    pub entries: Vec<SweepEntry>,
}

/// Sets one named hyperparameter; integer parameters must be whole numbers.
pub fn set_param(hp: &mut HyperParams, param: &str, value: f64) -> Result<(), CliError> {
    let whole = || {
        if value >= 0.0 && value.fract() == 0.0 {
            Ok(value as usize)
        } else {
            Err(CliError::Invalid(format!("{param} needs a non-negative integer, got {value}")))
        }
    };
    match param {
        "rho" => hp.rho = value,
        "gamma" => hp.gamma = value,
        "lr" => hp.lr = value,
        "k" => hp.k = whole()?,
        "n0" => hp.n0 = whole()?,
        "t0" => hp.t0 = whole()?,
        "t1" => hp.t1 = whole()?,
        "t2" => hp.t2 = whole()?,
        other => return Err(CliError::Invalid(format!("unknown sweep parameter {other:?}"))),
    }
    Ok(())
}

/// One `train` run per value, each in `<out>/<param>-<value>/`; writes `<out>/sweep.json`.
pub fn sweep(base: &RunConfig, param: &str, values: &[f64]) -> Result<SweepReport, CliError> {
    if values.is_empty() {
        return Err(CliError::Invalid("sweep needs at least one value".into()));
    }
    let mut entries = Vec::with_capacity(values.len());
    for &value in values {
        let mut cfg = base.clone();
        set_param(&mut cfg.hp, param, value)?;
        cfg.out = base.out.join(format!("{param}-{value}"));
        let report = run(&cfg)?;
        entries.push(SweepEntry {
            value,
            mean_auc: report.mean_auc,
            std_auc: report.std_auc,
            report_path: cfg.out.join("report.json"),
        });
    }
    let report = SweepReport { schema_version: SCHEMA_VERSION, param: param.to_string(), entries };
    create_dir(&base.out)?;
    let path = base.out.join("sweep.json");
    fs::write(&path, serde_json::to_string_pretty(&report)? + "\n").map_err(io_err(&path))?;
    Ok(report)
}

fn last_column(ds: &Dataset) -> Vec<f64> {
    let d = ds.dim();
    (0..ds.n()).map(|i| ds.x.get(i, d - 1)).collect()
}

/// Metrics of a score file against a label file.
pub fn eval_files(scores: &Path, labels: &Path, label: Option<&str>) -> Result<EvalResult, CliError> {
    let s = data::load_csv(scores, None)?;
    let scores = last_column(&s);
    let labels: Vec<u8> = match label {
        Some(col) => data::load_csv(labels, Some(col))?.labels.ok_or(DataError::NoLabels)?,
        None => {
            let l = data::load_csv(labels, None)?;
            let col = last_column(&l);
            col.iter()
                .enumerate()
                .map(|(i, &v)| match v {
                    0.0 => Ok(0),
                    1.0 => Ok(1),
                    _ => Err(DataError::BadLabel { row: i + 1, value: v }),
                })
                .collect::<Result<_, _>>()?
        }
    };
    Ok(metrics::evaluate(&scores, &labels)?)
}

pub fn synth(args: &SynthArgs) -> Result<Dataset, CliError> {
    let mut spec = SynthSpec::new(args.n, args.d, args.alpha, args.seed);
    spec.components = args.components;
    spec.margin = args.margin;
    if args.outliers == OutlierKind::Shifted {
        spec.outliers = OutlierMode::ShiftedGaussian { shift: 8.0, scale: 1.0 };
    }
    let (ds, _) = data::gen_synthetic(&spec)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    data::save_csv(&ds, &args.out)?;
    Ok(ds)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn print_report(r: &RunReport) {
    for s in &r.seeds {
        println!("seed {:>4}  auc {}  prauc {}", s.seed, fmt_opt(s.auc), fmt_opt(s.prauc));
    }
    println!(
        "mean auc {} (std {})  mean prauc {} (std {})  [{:.1}s]",
        fmt_opt(r.mean_auc),
        fmt_opt(r.std_auc),
        fmt_opt(r.mean_prauc),
        fmt_opt(r.std_prauc),
        r.wall_clock_seconds
    );
    println!("report: {}", r.config.out.join("report.json").display());
}

/// Executes a parsed command line.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => print_report(&run(&RunConfig::new(Method::Train, &a.data, a.hp.to_hyper_params()))?),
        Command::DpTrain(a) => {
            let mut hp = a.hp.to_hyper_params();
            hp.dp = DpConfig {
                enabled: true,
                clip_norm: a.clip,
                noise_multiplier: a.sigma,
                shift_threshold: !a.no_shift,
            };
            print_report(&run(&RunConfig::new(Method::DpTrain, &a.data, hp))?);
        }
        Command::Odim(a) => {
            let mut cfg = RunConfig::new(Method::Odim, &a.data, a.hp.to_hyper_params());
            cfg.odim = Some(OdimConfig {
                models: a.models,
                max_updates: a.updates,
                batch_size: a.batch,
                ..OdimConfig::default()
            });
            print_report(&run(&cfg)?);
        }
        Command::Plain(a) => {
            let mut cfg = RunConfig::new(Method::Plain, &a.data, a.hp.to_hyper_params());
            cfg.at_update = Some(a.at_update);
            print_report(&run(&cfg)?);
        }
        Command::Eval(a) => {
            let r = eval_files(&a.scores, &a.labels, a.label.as_deref())?;
            if a.json {
                println!("{}", serde_json::to_string(&r)?);
            } else {
                println!("auc {:.6}  prauc {:.6}  (n_pos {}, n_neg {})", r.auc, r.prauc, r.n_pos, r.n_neg);
            }
        }
        Command::Synth(a) => {
            let ds = synth(&a)?;
            let outliers = ds.labels.as_ref().map_or(0, |l| l.iter().filter(|&&y| y == 1).count());
            println!("wrote {} rows ({} outliers) to {}", ds.n(), outliers, a.out.display());
        }
        Command::Sweep(a) => {
            let base = RunConfig::new(Method::Train, &a.data, a.hp.to_hyper_params());
            let r = sweep(&base, &a.param, &a.values)?;
            for e in &r.entries {
                println!("{} = {:<8} mean auc {} (std {})", r.param, e.value, fmt_opt(e.mean_auc), fmt_opt(e.std_auc));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_fixed_hyperparameters() {
        let cli = Cli::try_parse_from(["altbi", "train", "--data", "x.csv"]).unwrap();
        let Command::Train(a) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(a.hp.to_hyper_params(), HyperParams::default());
        assert_eq!(a.data.seeds, vec![1, 2, 3]);
    }

    #[test]
    fn seeds_are_comma_separated() {
        let cli = Cli::try_parse_from(["altbi", "plain", "--data", "x.csv", "--seeds", "4,5"]).unwrap();
        let Command::Plain(a) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(a.data.seeds, vec![4, 5]);
        assert_eq!(a.at_update, 100);
    }

    #[test]
    fn set_param_rejects_fractional_integers() {
        let mut hp = HyperParams::default();
        set_param(&mut hp, "rho", 0.9).unwrap();
        assert_eq!(hp.rho, 0.9);
        set_param(&mut hp, "t2", 90.0).unwrap();
        assert_eq!(hp.t2, 90);
        assert!(set_param(&mut hp, "k", 2.5).is_err());
        assert!(set_param(&mut hp, "beta", 1.0).is_err());
    }

    #[test]
    fn ssod_only_for_trainers() {
        let args = DataArgs {
            data: "x.csv".into(),
            label: Some("y".into()),
            no_scale: false,
            ssod: Some(0.7),
            out: "o".into(),
            seeds: vec![1],
        };
        assert!(RunConfig::new(Method::Train, &args, HyperParams::default()).validate().is_ok());
        assert!(RunConfig::new(Method::Odim, &args, HyperParams::default()).validate().is_err());
        let dup = DataArgs { seeds: vec![1, 1], ..args };
        assert!(RunConfig::new(Method::Train, &dup, HyperParams::default()).validate().is_err());
    }
}
