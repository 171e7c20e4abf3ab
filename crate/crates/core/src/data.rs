//! Datasets, the synthetic mixture tasks, CSV ingestion, normalization and
//! train/test splitting.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

/// Covariates and responses, `x.nrows() == y.len()`, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub name: String,
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>, name: impl Into<String>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::data(format!(
                "{} covariate rows but {} responses",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::data("dataset contains NaN or infinite values"));
        }
        Ok(Self {
            x,
            y,
            name: name.into(),
            feature_names: None,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), indices),
            y: self.y.select(Axis(0), indices),
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    PiecewiseConstant,
    PiecewiseGaussian,
    Sine,
    /// `f*` is a finite kernel expansion, so it lies in the RKHS of its kernel.
    KernelExpansion,
}

impl TaskId {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskId::PiecewiseConstant => "piecewise_constant",
            TaskId::PiecewiseGaussian => "piecewise_gaussian",
            TaskId::Sine => "sine",
            TaskId::KernelExpansion => "kernel_expansion",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "piecewise_constant" => Ok(TaskId::PiecewiseConstant),
            "piecewise_gaussian" => Ok(TaskId::PiecewiseGaussian),
            "sine" => Ok(TaskId::Sine),
            "kernel_expansion" => Ok(TaskId::KernelExpansion),
            other => Err(Error::input(format!("unknown task id `{other}`"))),
        }
    }
}

/// How a noise level is to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseConvention {
    #[default]
    Variance,
    StdDev,
}

impl NoiseConvention {
    pub fn to_variance(self, level: f64) -> f64 {
        match self {
            NoiseConvention::Variance => level,
            NoiseConvention::StdDev => level * level,
        }
    }
}

/// Covariate distribution of a synthetic task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Covariates {
    /// Equal-weight one-dimensional gaussian mixture with a shared standard deviation.
    Mixture { means: Vec<f64>, std: f64 },
    StandardNormal { dim: usize },
}

impl Covariates {
    pub fn dim(&self) -> usize {
        match self {
            Covariates::Mixture { .. } => 1,
            Covariates::StandardNormal { dim } => *dim,
        }
    }

    /// Draws one row; for mixtures also returns the component it came from.
    fn draw<R: Rng>(&self, rng: &mut R, out: &mut [f64]) -> Option<usize> {
        match self {
            Covariates::Mixture { means, std } => {
                let c = rng.random_range(0..means.len());
                let normal = Normal::new(means[c], *std).expect("validated std");
                out[0] = normal.sample(rng);
                Some(c)
            }
            Covariates::StandardNormal { .. } => {
                for v in out.iter_mut() {
                    *v = StandardNormal.sample(rng);
                }
                None
            }
        }
    }
}

/// `f*(x) = sum_j coeffs[j] * K(centers[j], x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelExpansion {
    pub spec: KernelSpec,
    pub centers: Array2<f64>,
    pub coeffs: Array1<f64>,
}

impl KernelExpansion {
    pub fn new(spec: KernelSpec, centers: Array2<f64>, coeffs: Array1<f64>) -> Result<Self> {
        spec.validate()?;
        if centers.nrows() != coeffs.len() || centers.nrows() == 0 {
            return Err(Error::input("kernel expansion needs one coefficient per center"));
        }
        Ok(Self { spec, centers, coeffs })
    }

    /// Random expansion: centers drawn from `covariates`, coefficients standard normal.
    pub fn random(spec: KernelSpec, covariates: &Covariates, n_centers: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = covariates.dim();
        let mut centers = Array2::zeros((n_centers, d));
        for mut row in centers.rows_mut() {
            covariates.draw(&mut rng, row.as_slice_mut().expect("standard layout"));
        }
        let coeffs = Array1::from_iter((0..n_centers).map(|_| StandardNormal.sample(&mut rng)));
        Self::new(spec, centers, coeffs)
    }

    pub fn eval(&self, x: ArrayView1<f64>) -> f64 {
        self.centers
            .rows()
            .into_iter()
            .zip(self.coeffs.iter())
            .map(|(c, a)| a * self.spec.eval_unchecked(c, x))
            .sum()
    }
}

/// Noise level of the mixture toys.
pub const TOY_NOISE_LEVEL: f64 = 0.05;
/// Kernel scale inside the piecewise-gaussian regression function.
pub const PIECEWISE_GAUSSIAN_GAMMA: f64 = 0.1;

/// A regression problem with a known regression function `f*`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub id: TaskId,
    pub covariates: Covariates,
    /// Variance of the additive gaussian noise.
    pub noise_var: f64,
    expansion: Option<KernelExpansion>,
}

impl SyntheticTask {
    /// One of the three mixture toys, with noise variance 0.05.
    pub fn toy(id: TaskId) -> Result<Self> {
        let covariates = match id {
            TaskId::PiecewiseConstant | TaskId::PiecewiseGaussian => Covariates::Mixture {
                means: vec![0.5, 1.5, 2.5],
                std: 0.2,
            },
            TaskId::Sine => {
                let pi = std::f64::consts::PI;
                Covariates::Mixture {
                    means: vec![pi / 2.0, 3.0 * pi / 2.0, 3.0 * pi],
                    std: 1.0,
                }
            }
            TaskId::KernelExpansion => {
                return Err(Error::input("kernel_expansion tasks are built with SyntheticTask::from_expansion"))
            }
        };
        Ok(Self {
            id,
            covariates,
            noise_var: TOY_NOISE_LEVEL,
            expansion: None,
        })
    }

    pub fn from_expansion(expansion: KernelExpansion, covariates: Covariates, noise_var: f64) -> Result<Self> {
        if expansion.centers.ncols() != covariates.dim() {
            return Err(Error::DimensionMismatch {
                expected: covariates.dim(),
                got: expansion.centers.ncols(),
            });
        }
        if !(noise_var >= 0.0) {
            return Err(Error::input("noise variance must be nonnegative"));
        }
        Ok(Self {
            id: TaskId::KernelExpansion,
            covariates,
            noise_var,
            expansion: Some(expansion),
        })
    }

    /// Replaces the noise level, read under `convention`.
    pub fn with_noise(mut self, level: f64, convention: NoiseConvention) -> Self {
        self.noise_var = convention.to_variance(level);
        self
    }

    pub fn dim(&self) -> usize {
        self.covariates.dim()
    }

    pub fn expansion(&self) -> Option<&KernelExpansion> {
        self.expansion.as_ref()
    }

    /// Whether `f*` lies in the RKHS of `spec` (known only for kernel expansions).
    pub fn in_rkhs(&self, spec: &KernelSpec) -> bool {
        self.expansion.as_ref().is_some_and(|e| &e.spec == spec)
    }

    pub fn f_star(&self, x: ArrayView1<f64>) -> f64 {
        match self.id {
            TaskId::PiecewiseConstant => {
                let t = x[0];
                if t <= 1.0 {
                    1.0
                } else if t < 2.0 {
                    1.5
                } else {
                    2.0
                }
            }
            TaskId::PiecewiseGaussian => {
                let t = x[0];
                let center = if t <= 1.0 {
                    0.5
                } else if t < 2.0 {
                    1.5
                } else {
                    2.5
                };
                (-PIECEWISE_GAUSSIAN_GAMMA * (t - center) * (t - center)).exp()
            }
            TaskId::Sine => x[0].sin(),
            TaskId::KernelExpansion => self.expansion.as_ref().expect("expansion task").eval(x),
        }
    }

    pub fn f_star_rows(&self, x: &Array2<f64>) -> Array1<f64> {
        Array1::from_iter(x.rows().into_iter().map(|r| self.f_star(r)))
    }

    pub fn sample_x<R: Rng>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        self.sample_x_with_components(n, rng).0
    }

    /// Covariates plus the mixture component of each row (empty for non-mixtures).
    pub fn sample_x_with_components<R: Rng>(&self, n: usize, rng: &mut R) -> (Array2<f64>, Vec<usize>) {
        let mut x = Array2::zeros((n, self.dim()));
        let mut comps = Vec::new();
        for mut row in x.rows_mut() {
            if let Some(c) = self.covariates.draw(rng, row.as_slice_mut().expect("standard layout")) {
                comps.push(c);
            }
        }
        (x, comps)
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Dataset {
        let x = self.sample_x(n, rng);
        let sd = self.noise_var.sqrt();
        let y = Array1::from_iter(x.rows().into_iter().map(|r| {
            let z: f64 = StandardNormal.sample(rng);
            self.f_star(r) + sd * z
        }));
        Dataset::new(x, y, self.id.as_str()).expect("generated data is finite")
    }

    pub fn sample_seeded(&self, n: usize, seed: u64) -> Dataset {
        self.sample(n, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

/// Draws `n` samples of a mixture toy with the default noise.
pub fn gen_toy(id: TaskId, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::input("gen_toy needs n >= 1"));
    }
    Ok(SyntheticTask::toy(id)?.sample_seeded(n, seed))
}

/// Reads a headed numeric CSV. Every column except `target_column` becomes a feature.
pub fn load_csv(path: &Path, target_column: &str, delimiter: u8) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let target = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::data(format!("target column `{target_column}` not found in {}", path.display())))?;

    let mut features = Vec::new();
    let mut y = Vec::new();
    let mut bad_rows = Vec::new();
    let mut n_rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // data rows are numbered from 2; row 1 is the header
        let row_no = i + 2;
        n_rows += 1;
        if record.len() != headers.len() {
            bad_rows.push(row_no);
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(vals) if vals.iter().all(|v| v.is_finite()) => {
                for (j, v) in vals.into_iter().enumerate() {
                    if j == target {
                        y.push(v);
                    } else {
                        features.push(v);
                    }
                }
            }
            _ => bad_rows.push(row_no),
        }
    }
    if !bad_rows.is_empty() {
        let shown: Vec<String> = bad_rows.iter().take(10).map(|r| r.to_string()).collect();
        return Err(Error::data(format!(
            "{}: {} row(s) with non-numeric or missing cells (rows {}{})",
            path.display(),
            bad_rows.len(),
            shown.join(", "),
            if bad_rows.len() > 10 { ", ..." } else { "" }
        )));
    }
    if n_rows == 0 {
        return Err(Error::data(format!("{}: no data rows", path.display())));
    }
    let d = headers.len() - 1;
    let x = Array2::from_shape_vec((n_rows, d), features).expect("row-major fill");
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut ds = Dataset::new(x, Array1::from(y), name)?;
    ds.feature_names = Some(
        headers
            .into_iter()
            .enumerate()
            .filter(|(j, _)| *j != target)
            .map(|(_, h)| h)
            .collect(),
    );
    Ok(ds)
}

/// Writes `ds` as a headed CSV with the response in a final `target_name` column.
pub fn write_csv(ds: &Dataset, path: &Path, target_name: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = match &ds.feature_names {
        Some(names) => names.clone(),
        None => (0..ds.dim()).map(|j| format!("x{j}")).collect(),
    };
    header.push(target_name.to_string());
    w.write_record(&header)?;
    for (row, y) in ds.x.rows().into_iter().zip(ds.y.iter()) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(y.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Per-feature centering and scaling learned from a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Sample standard deviations; zero marks a constant column.
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.dim() != self.means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.means.len(),
                got: ds.dim(),
            });
        }
        let mut out = ds.clone();
        for (j, mut col) in out.x.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.means[j], self.stds[j]);
            col.mapv_inplace(|v| if s > 0.0 { (v - m) / s } else { 0.0 });
        }
        Ok(out)
    }
}

/// Centers every feature to mean 0 and scales it to sample standard deviation 1.
/// Responses are left alone. Constant columns become all zeros.
pub fn normalize(ds: &Dataset) -> Result<(Dataset, Standardizer)> {
    let n = ds.len();
    if n < 2 {
        return Err(Error::input("normalize needs at least two rows"));
    }
    let mut means = Vec::with_capacity(ds.dim());
    let mut stds = Vec::with_capacity(ds.dim());
    for (j, col) in ds.x.columns().into_iter().enumerate() {
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        // the mean of identical values can be off by an ulp, so compare against scale
        let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if std <= 1e-14 * scale {
            log::warn!("feature {j} is constant; mapped to zeros");
            means.push(mean);
            stds.push(0.0);
        } else {
            means.push(mean);
            stds.push(std);
        }
    }
    let st = Standardizer { means, stds };
    Ok((st.apply(ds)?, st))
}

/// Uniform random split; the test side has `round(n * test_fraction)` rows.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::input(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let n = ds.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::data(format!(
            "split of {n} rows at fraction {test_fraction} leaves one side empty"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test_idx, train_idx) = idx.split_at(n_test);
    Ok((ds.select(train_idx), ds.select(test_idx)))
}

/// Uniform subsample of `n` rows without replacement (all rows if `n >= len`).
pub fn subsample(ds: &Dataset, n: usize, seed: u64) -> Dataset {
    if n >= ds.len() {
        return ds.clone();
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(n);
    ds.select(&idx)
}
