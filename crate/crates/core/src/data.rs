//! Datasets: CSV ingestion, min-max scaling, the inlier-only train/test
//! split and the synthetic inlier/outlier generator.

use crate::seeding::{rng_for, Stream};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}, column {col}: cannot parse {value:?} as a number")]
    NotNumeric { row: usize, col: usize, value: String },
    #[error("row {row}, column {col}: non-finite value")]
    NonFinite { row: usize, col: usize },
    #[error("row {row}: expected {expected} fields, found {found}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("label column {0:?} not found in header")]
    MissingLabelColumn(String),
    #[error("row {row}: label must be 0 or 1, found {value}")]
    BadLabel { row: usize, value: f64 },
    #[error("dataset has no rows")]
    Empty,
    #[error("dataset has no labels")]
    NoLabels,
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("could not place outlier {index} outside the inlier envelope after {attempts} attempts")]
    InfeasibleMargin { index: usize, attempts: usize },
}

/// Per-feature minimum and maximum of the data a scaler was fitted on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit(x: &Tensor) -> Self {
        let d = x.cols();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for r in 0..x.rows() {
            for (j, &v) in x.row(r).iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        MinMax { min, max }
    }

    /// `(x - min) / (max - min)` per feature; constant features map to 0.
    /// Values outside the fitted range are not clipped.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor, DataError> {
        if x.cols() != self.min.len() {
            return Err(DataError::DimMismatch { expected: self.min.len(), got: x.cols() });
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                let range = self.max[j] - self.min[j];
                *v = if range > 0.0 { (*v - self.min[j]) / range } else { 0.0 };
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub x: Tensor,
    /// 0 = inlier, 1 = outlier. Never used for training.
    pub labels: Option<Vec<u8>>,
    /// Scaler fitted on this data, when [`minmax_scale`] has been applied.
    pub scaling: Option<MinMax>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, x: Tensor, labels: Option<Vec<u8>>) -> Self {
        Dataset { name: name.into(), x, labels, scaling: None }
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Empirical outlier fraction, when labelled.
    pub fn outlier_fraction(&self) -> Option<f64> {
        self.labels
            .as_ref()
            .map(|l| l.iter().filter(|&&y| y == 1).count() as f64 / l.len().max(1) as f64)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            x: self.x.select_rows(indices),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            scaling: self.scaling.clone(),
        }
    }
}

/// Reads a numeric CSV. A first row that does not parse as numbers is a
/// header; `label_column` (which needs a header) is split off as labels.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_csv(file, &name, label_column)
}

pub fn read_csv<R: std::io::Read>(reader: R, name: &str, label_column: Option<&str>) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut records = rdr.records();
    let first = match records.next() {
        Some(r) => r?,
        None => return Err(DataError::Empty),
    };
    let header_row = first.iter().any(|c| c.parse::<f64>().is_err());
    let width = first.len();

    let label_idx = match label_column {
        None => None,
        Some(col) => {
            if !header_row {
                return Err(DataError::MissingLabelColumn(col.to_string()));
            }
            Some(first.iter().position(|h| h == col).ok_or_else(|| DataError::MissingLabelColumn(col.to_string()))?)
        }
    };

    let mut feats = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0usize;
    let mut parse_record = |rec: &csv::StringRecord, row: usize| -> Result<(), DataError> {
        if rec.len() != width {
            return Err(DataError::Ragged { row, expected: width, found: rec.len() });
        }
        for (col, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| DataError::NotNumeric { row, col: col + 1, value: cell.to_string() })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite { row, col: col + 1 });
            }
            if Some(col) == label_idx {
                if v != 0.0 && v != 1.0 {
                    return Err(DataError::BadLabel { row, value: v });
                }
                labels.push(v as u8);
            } else {
                feats.push(v);
            }
        }
        rows += 1;
        Ok(())
    };

    // Rows are numbered from 1 as they appear in the file.
    if !header_row {
        parse_record(&first, 1)?;
    }
    for (i, rec) in records.enumerate() {
        parse_record(&rec?, i + 2)?;
    }
    if rows == 0 {
        return Err(DataError::Empty);
    }
    let d = width - usize::from(label_idx.is_some());
    Ok(Dataset::new(name, Tensor::from_vec(rows, d, feats), label_idx.map(|_| labels)))
}

/// Writes features as `f1..fD` plus a `y` column when labelled.
pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=ds.dim()).map(|j| format!("f{j}")).collect();
    if ds.labels.is_some() {
        header.push("y".into());
    }
    w.write_record(&header)?;
    for r in 0..ds.n() {
        let mut rec: Vec<String> = ds.x.row(r).iter().map(|v| format!("{v:?}")).collect();
        if let Some(l) = &ds.labels {
            rec.push(l[r].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    Ok(())
}

/// Fits a scaler on `ds` and returns the scaled copy carrying it.
pub fn minmax_scale(ds: &Dataset) -> Dataset {
    let mm = MinMax::fit(&ds.x);
    let x = mm.apply(&ds.x).expect("scaler fitted on the same matrix");
    Dataset { name: ds.name.clone(), x, labels: ds.labels.clone(), scaling: Some(mm) }
}

/// Inlier-only training split for the semi-supervised protocol.
#[derive(Clone, Debug)]
pub struct SsodSplit {
    pub train: Dataset,
    pub test: Dataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Training set: `round(ratio * n_inliers)` randomly chosen inliers. Test
/// set: the remaining inliers and every outlier, in original order.
pub fn split_ssod(ds: &Dataset, ratio: f64, seed: u64) -> Result<SsodSplit, DataError> {
    let labels = ds.labels.as_ref().ok_or(DataError::NoLabels)?;
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(DataError::InvalidSpec(format!("split ratio must be in (0, 1], got {ratio}")));
    }
    let mut inliers: Vec<usize> = (0..ds.n()).filter(|&i| labels[i] == 0).collect();
    inliers.shuffle(&mut rng_for(seed, Stream::Split, 0));
    let n_train = (ratio * inliers.len() as f64).round() as usize;
    let mut train_indices = inliers[..n_train].to_vec();
    train_indices.sort_unstable();
    let mut in_train = vec![false; ds.n()];
    for &i in &train_indices {
        in_train[i] = true;
    }
    let test_indices: Vec<usize> = (0..ds.n()).filter(|&i| !in_train[i]).collect();
    Ok(SsodSplit {
        train: ds.subset(&train_indices),
        test: ds.subset(&test_indices),
        train_indices,
        test_indices,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OutlierMode {
    /// Uniform over the component-mean bounding box widened by `pad` on each side.
    UniformBox { pad: f64 },
    /// Gaussian around the centroid of the component means shifted by
    /// `shift` along a random direction, with per-coordinate std `scale`.
    ShiftedGaussian { shift: f64, scale: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub dim: usize,
    /// Outlier fraction in `[0, 1)`.
    pub alpha: f64,
    /// Number of unit-variance inlier Gaussians.
    pub components: usize,
    /// Component means are uniform in `[-mean_spread, mean_spread]^D`.
    pub mean_spread: f64,
    /// Minimum distance from any outlier to any component mean, in inlier std-devs.
    pub margin: f64,
    pub outliers: OutlierMode,
    pub seed: u64,
}

impl SynthSpec {
    /// Two inlier components, margin 3, uniform-box outliers.
    pub fn new(n: usize, dim: usize, alpha: f64, seed: u64) -> Self {
        SynthSpec {
            n,
            dim,
            alpha,
            components: 2,
            mean_spread: 3.0,
            margin: 3.0,
            outliers: OutlierMode::UniformBox { pad: 6.0 },
            seed,
        }
    }

    /// Number of outliers, `round(alpha * n)`.
    pub fn outlier_count(&self) -> usize {
        (self.alpha * self.n as f64).round() as usize
    }
}

const PLACEMENT_ATTEMPTS: usize = 10_000;

/// Inliers from an equal-weight Gaussian mixture, outliers kept at least
/// `margin` away from every component mean. Rows are shuffled.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<(Dataset, Vec<Vec<f64>>), DataError> {
    if spec.n == 0 || spec.dim == 0 || spec.components == 0 {
        return Err(DataError::InvalidSpec("n, dim and components must be positive".into()));
    }
    if !(0.0..1.0).contains(&spec.alpha) {
        return Err(DataError::InvalidSpec(format!("alpha must be in [0, 1), got {}", spec.alpha)));
    }
    let mut rng = rng_for(spec.seed, Stream::Synthetic, 0);
    let d = spec.dim;
    let means: Vec<Vec<f64>> = (0..spec.components)
        .map(|_| (0..d).map(|_| rng.random_range(-spec.mean_spread..=spec.mean_spread)).collect())
        .collect();
    let n_out = spec.outlier_count();
    let n_in = spec.n - n_out;

    let mut rows: Vec<(Vec<f64>, u8)> = Vec::with_capacity(spec.n);
    for _ in 0..n_in {
        let m = &means[rng.random_range(0..spec.components)];
        rows.push((m.iter().map(|&mu| mu + rng.sample::<f64, _>(StandardNormal)).collect(), 0));
    }

    let far_enough = |p: &[f64]| {
        means.iter().all(|m| m.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= spec.margin)
    };
    let (lo, hi) = (0..d)
        .map(|j| {
            let col = means.iter().map(|m| m[j]);
            (col.clone().fold(f64::INFINITY, f64::min), col.fold(f64::NEG_INFINITY, f64::max))
        })
        .unzip::<f64, f64, Vec<f64>, Vec<f64>>();
    let direction: Vec<f64> = {
        let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect()
    };
    let centroid: Vec<f64> = (0..d).map(|j| means.iter().map(|m| m[j]).sum::<f64>() / means.len() as f64).collect();

    for index in 0..n_out {
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let p: Vec<f64> = match spec.outliers {
                OutlierMode::UniformBox { pad } => {
                    (0..d).map(|j| rng.random_range(lo[j] - pad..=hi[j] + pad)).collect()
                }
                OutlierMode::ShiftedGaussian { shift, scale } => (0..d)
                    .map(|j| centroid[j] + shift * direction[j] + scale * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            };
            if far_enough(&p) {
                placed = Some(p);
                break;
            }
        }
        let p = placed.ok_or(DataError::InfeasibleMargin { index, attempts: PLACEMENT_ATTEMPTS })?;
        rows.push((p, 1));
    }
    rows.shuffle(&mut rng);

    let labels = rows.iter().map(|r| r.1).collect();
    let x = Tensor::from_rows(&rows.into_iter().map(|r| r.0).collect::<Vec<_>>());
    Ok((Dataset::new(format!("synthetic-n{}-d{}-a{}", spec.n, d, spec.alpha), x, Some(labels)), means))
}
