//! Spectral and Monte-Carlo diagnostics.
//!
//! The spectral half estimates effective dimensionality `S(lambda)` from the
//! eigenvalues of `K/n`, the goodness `g(lambda)` of a partition, and the
//! closed-form covariance-error bound. The Monte-Carlo half estimates the
//! partition-wise approximation / regularization / bias / variance terms on
//! tasks whose regression function is known.
//!
//! Population KRR solutions cannot be computed exactly. They are replaced by
//! KRR fits on a much larger sample (`n_pop`, default `20 * n_train`) with
//! noiseless targets `f*(x)`, solved in the feature space of a pivoted
//! Cholesky factor so `n_pop` in the tens of thousands stays cheap.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Covariates, SyntheticTask};
use crate::error::{Error, Result};
use crate::estimators::{fit_dc, LambdaRule};
use crate::kernels::KernelSpec;
use crate::linalg::{clamp_nonnegative, eigvals_sym, solve_spd_vec, PivotedCholesky, SpdSolveConfig};
use crate::partition::{kmeans_fit, KMeansConfig, PartitionKind, PartitionModel};
use crate::stats::{compensated_sum, mean_and_se};

pub const DEFAULT_SUBSAMPLE_CAP: usize = 2000;
const SUBSAMPLE_SEED: u64 = 0;

/// `S(lambda) = sum_j eig_j / (eig_j + lambda)`, negatives treated as 0.
pub fn spectral_sum(eigs: &[f64], lambda: f64) -> f64 {
    compensated_sum(eigs.iter().map(|&e| {
        let e = e.max(0.0);
        if e == 0.0 {
            0.0
        } else {
            e / (e + lambda)
        }
    }))
}

/// `(U, L)`: the spectral sum over the first `d` eigenvalues and over the rest.
pub fn truncated_sums(eigs: &[f64], d: usize, lambda: f64) -> Result<(f64, f64)> {
    if d == 0 {
        return Err(Error::input("truncation index d must be at least 1"));
    }
    let cut = d.min(eigs.len());
    Ok((spectral_sum(&eigs[..cut], lambda), spectral_sum(&eigs[cut..], lambda)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// Eigenvalues of `K/n`, descending, clamped at 0.
    pub global_eigs: Vec<f64>,
    /// Eigenvalues of `K_i/n_i` per partition.
    pub per_partition_eigs: Vec<Vec<f64>>,
    pub s_global: f64,
    /// `S_i(lambda * p_i)`.
    pub s_partition: Vec<f64>,
    pub g: f64,
    pub lambda: f64,
    /// Empirical masses `n_i / n`.
    pub masses: Vec<f64>,
    pub counts: Vec<usize>,
    pub empty_partitions: Vec<usize>,
    pub subsample_cap: usize,
}

fn capped(indices: &[usize], cap: usize) -> Vec<usize> {
    if indices.len() <= cap {
        return indices.to_vec();
    }
    let mut v = indices.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(SUBSAMPLE_SEED));
    v.truncate(cap);
    v.sort_unstable();
    v
}

fn normalized_spectrum(spec: &KernelSpec, x: ArrayView2<f64>, rows: &[usize]) -> Result<Vec<f64>> {
    let xs = x.select(Axis(0), rows);
    let g = spec.gram(xs.view())? / rows.len() as f64;
    let mut eigs = eigvals_sym(g.view())?.to_vec();
    clamp_nonnegative(&mut eigs);
    Ok(eigs)
}

/// Effective dimensionality of the whole sample and of each partition, and
/// the goodness `g = sum_i S_i(lambda p_i) / S(lambda)`.
///
/// Samples (global or per partition) larger than `subsample_cap` rows are
/// sub-sampled with a fixed seed before the eigendecomposition.
pub fn effective_dimensions(
    spec: &KernelSpec,
    x: ArrayView2<f64>,
    partition: &PartitionModel,
    lambda: f64,
    subsample_cap: usize,
) -> Result<SpectralReport> {
    spec.validate()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::input(format!("lambda must be positive, got {lambda}")));
    }
    if subsample_cap == 0 {
        return Err(Error::input("subsample cap must be positive"));
    }
    let n = x.nrows();
    if n == 0 {
        return Err(Error::input("no samples"));
    }
    if partition.n_train() != n {
        return Err(Error::input(format!(
            "partition covers {} points but {n} were given",
            partition.n_train()
        )));
    }
    let all: Vec<usize> = (0..n).collect();
    let global_eigs = normalized_spectrum(spec, x, &capped(&all, subsample_cap))?;
    let s_global = spectral_sum(&global_eigs, lambda);
    if s_global <= 0.0 {
        return Err(Error::input("kernel matrix has no positive eigenvalue"));
    }

    let stats = partition.stats();
    let members = partition.members();
    let mut per_partition_eigs = Vec::with_capacity(partition.m);
    let mut s_partition = Vec::with_capacity(partition.m);
    let mut empty_partitions = Vec::new();
    for (i, idx) in members.iter().enumerate() {
        if idx.is_empty() {
            log::warn!("partition {i} is empty; it contributes S_i = 0");
            empty_partitions.push(i);
            per_partition_eigs.push(Vec::new());
            s_partition.push(0.0);
            continue;
        }
        let eigs = normalized_spectrum(spec, x, &capped(idx, subsample_cap))?;
        s_partition.push(spectral_sum(&eigs, lambda * stats.masses[i]));
        per_partition_eigs.push(eigs);
    }
    let g = compensated_sum(s_partition.iter().copied()) / s_global;
    Ok(SpectralReport {
        global_eigs,
        per_partition_eigs,
        s_global,
        s_partition,
        g,
        lambda,
        masses: stats.masses,
        counts: stats.counts,
        empty_partitions,
        subsample_cap,
    })
}

/// Parameters of the covariance-error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Truncation index.
    pub d: usize,
    /// Moment order, at least 2.
    pub k: f64,
    pub a1: f64,
    /// Penalty at which the spectral sums are taken (`lambda * p_i`).
    pub lambda_pi: f64,
    pub n: usize,
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::input("d must be at least 1"));
        }
        if !(self.k >= 2.0 && self.k.is_finite()) {
            return Err(Error::input(format!("k must be >= 2, got {}", self.k)));
        }
        if !(self.a1 > 0.0 && self.a1.is_finite()) {
            return Err(Error::input("a1 must be positive"));
        }
        if !(self.lambda_pi > 0.0 && self.lambda_pi.is_finite()) {
            return Err(Error::input("lambda_pi must be positive"));
        }
        if self.n == 0 {
            return Err(Error::input("n must be positive"));
        }
        Ok(())
    }
}

/// Upper bound on the k-th moment of the whitened covariance error:
///
/// `a1 L + a1 sqrt(L U) + a1 sqrt(e ln d) U / sqrt(n)
///  + 4 e ln d (a1 U + l_1/(l_1+lam)) / n^(1-1/k) + l_{d+1}/(l_{d+1}+lam)`
///
/// With `d = 1` both logarithmic terms vanish. `l_{d+1}` is 0 when `d` reaches
/// the end of the eigenvalue list.
pub fn coverr_bound(params: &BoundParams, eigs: &[f64]) -> Result<f64> {
    params.validate()?;
    let lam = params.lambda_pi;
    let ratio = |e: f64| {
        let e = e.max(0.0);
        if e == 0.0 {
            0.0
        } else {
            e / (e + lam)
        }
    };
    let (u, l) = truncated_sums(eigs, params.d, lam)?;
    let a1 = params.a1;
    let n = params.n as f64;
    let ln_d = (params.d as f64).ln();
    let e = std::f64::consts::E;
    let first = eigs.first().copied().map_or(0.0, ratio);
    let tail = eigs.get(params.d).copied().map_or(0.0, ratio);
    Ok(a1 * l
        + a1 * (l * u).sqrt()
        + a1 * (e * ln_d).sqrt() * u / n.sqrt()
        + 4.0 * e * ln_d * (a1 * u + first) / n.powf(1.0 - 1.0 / params.k)
        + tail)
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    fn of(values: &[f64]) -> Self {
        let (value, se) = mean_and_se(values);
        Estimate { value, se }
    }

    fn clamped(self) -> Self {
        Estimate {
            value: self.value.max(0.0),
            se: self.se,
        }
    }
}

/// Stand-in for a population KRR solution: KRR on a large sample, solved in
/// the span of a pivoted Cholesky factor of its Gram matrix.
#[derive(Debug, Clone)]
pub struct PopulationSurrogate {
    spec: KernelSpec,
    pivot_x: Array2<f64>,
    chol: PivotedCholesky,
    theta: Array1<f64>,
    /// `trace(G - L L^T) / trace(G)`.
    pub residual_ratio: f64,
}

const SURROGATE_TOL: f64 = 1e-12;
const SURROGATE_MAX_RANK: usize = 2000;

impl PopulationSurrogate {
    /// Minimizes `(1/n) sum (y_j - f(x_j))^2 + lambda |f|^2` over the span of
    /// the pivot columns. `lambda = 0` is allowed.
    pub fn fit(spec: &KernelSpec, x: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64) -> Result<Self> {
        let n = x.nrows();
        if n == 0 || n != y.len() {
            return Err(Error::input("surrogate needs a nonempty sample with matching targets"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::input(format!("surrogate lambda must be >= 0, got {lambda}")));
        }
        let chol = PivotedCholesky::compute(
            n,
            |i| spec.self_eval(x.row(i)),
            |p, out| {
                let xp = x.row(p);
                out.par_iter_mut()
                    .enumerate()
                    .for_each(|(j, o)| *o = spec.eval_unchecked(x.row(j), xp));
            },
            SURROGATE_TOL,
            SURROGATE_MAX_RANK.min(n),
        );
        let trace: f64 = (0..n).map(|i| spec.self_eval(x.row(i))).sum();
        let residual_ratio = if trace > 0.0 { chol.residual_trace / trace } else { 0.0 };
        if residual_ratio > 1e-8 {
            log::warn!("surrogate factor stopped at rank {} with residual {residual_ratio:.2e}", chol.rank());
        }
        let l = &chol.factor;
        let mut a = l.t().dot(l);
        let ridge = n as f64 * lambda;
        a.diag_mut().mapv_inplace(|v| v + ridge);
        let b = l.t().dot(&y);
        let (theta, _) = if a.nrows() == 0 {
            (Array1::zeros(0), 0.0)
        } else {
            solve_spd_vec(a.view(), b.as_slice().expect("contiguous"), &SpdSolveConfig::default())?
        };
        let pivot_x = x.select(Axis(0), &chol.pivots);
        Ok(PopulationSurrogate {
            spec: *spec,
            pivot_x,
            chol,
            theta,
            residual_ratio,
        })
    }

    pub fn rank(&self) -> usize {
        self.chol.rank()
    }

    pub fn predict_one(&self, x: ArrayView1<f64>) -> f64 {
        let kp: Vec<f64> = self
            .pivot_x
            .rows()
            .into_iter()
            .map(|p| self.spec.eval_unchecked(p, x))
            .collect();
        let phi = self.chol.features(&kp);
        phi.iter().zip(self.theta.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let v: Vec<f64> = (0..x.nrows()).into_par_iter().map(|i| self.predict_one(x.row(i))).collect();
        Array1::from(v)
    }
}

/// Which fixed partition of the input space the Monte-Carlo studies use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum PartitionScheme {
    Single,
    /// Nearest generating mixture mean.
    Components,
    /// k-means fitted once on a separate design sample of `n_train` points.
    Kmeans { m: usize, seed: u64 },
    Centroids { centroids: Vec<Vec<f64>> },
}

impl PartitionScheme {
    /// A partition template (routing rule) for `task`.
    pub fn build(&self, task: &SyntheticTask, n_design: usize, seed: u64) -> Result<PartitionModel> {
        let empty = Array2::zeros((0, task.dim()));
        match self {
            PartitionScheme::Single => Ok(PartitionModel::single(0)),
            PartitionScheme::Components => match &task.covariates {
                Covariates::Mixture { means, .. } => PartitionModel::from_centroids(
                    PartitionKind::Kmeans,
                    means.iter().map(|&m| vec![m]).collect(),
                    empty.view(),
                ),
                _ => Err(Error::input("component partitions need mixture covariates")),
            },
            PartitionScheme::Kmeans { m, seed: km_seed } => {
                let x = task.sample_x(n_design, &mut stream_rng(seed, STREAM_DESIGN));
                let fit = kmeans_fit(x.view(), &KMeansConfig::new(*m, *km_seed))?;
                fit.model.rebind(empty.view())
            }
            PartitionScheme::Centroids { centroids } => {
                PartitionModel::from_centroids(PartitionKind::Kmeans, centroids.clone(), empty.view())
            }
        }
    }
}

const STREAM_DESIGN: u64 = 0;
const STREAM_POPULATION: u64 = 1;
const STREAM_TEST: u64 = 2;
const STREAM_REPEAT_BASE: u64 = 100;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_train: usize,
    /// Defaults to `20 * n_train`.
    #[serde(default)]
    pub n_pop: Option<usize>,
    pub n_test: usize,
    pub n_repeats: usize,
    pub seed: u64,
}

impl McConfig {
    pub fn new(n_train: usize, seed: u64) -> Self {
        Self {
            n_train,
            n_pop: None,
            n_test: 5000,
            n_repeats: 20,
            seed,
        }
    }

    pub fn population_size(&self) -> usize {
        self.n_pop.unwrap_or(20 * self.n_train)
    }

    fn validate(&self, need_repeats: bool) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 || self.population_size() == 0 {
            return Err(Error::input("n_train, n_pop and n_test must be positive"));
        }
        if need_repeats && self.n_repeats < 2 {
            return Err(Error::input("at least 2 repeats are needed for a variance estimate"));
        }
        Ok(())
    }
}

/// `lambda_bar = 0` when `f*` lies in the RKHS of `spec`, else `lambda / 10`.
pub fn default_lambda_bar(task: &SyntheticTask, spec: &KernelSpec, lambda: f64) -> f64 {
    if task.in_rkhs(spec) {
        0.0
    } else {
        lambda / 10.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionTerms {
    pub partition: usize,
    /// Fraction of test points routed here.
    pub mass: f64,
    pub n_pop: usize,
    pub skipped: bool,
    pub approx: Estimate,
    pub reg: Estimate,
    pub bias: Estimate,
    pub var: Estimate,
    /// `E_D E[(f_lambda - f_hat)^2 1{x in C_i}]`, estimated directly.
    pub estimation: Estimate,
    pub err: Estimate,
    /// `2 [approx + 2 reg + 2 bias + 2 var]`.
    pub decomp_bound: Estimate,
    /// Standard error of the paired difference `err - decomp_bound`.
    pub decomp_gap_se: f64,
    /// `err <= decomp_bound + 3 * decomp_gap_se`.
    pub decomp_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionTotals {
    pub approx: Estimate,
    pub reg: Estimate,
    pub bias: Estimate,
    pub var: Estimate,
    pub err: Estimate,
    pub decomp_bound: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub kernel: KernelSpec,
    pub scheme: PartitionScheme,
    pub lambda: f64,
    pub lambda_bar: f64,
    pub config: McConfig,
    pub partitions: Vec<PartitionTerms>,
    pub totals: DecompositionTotals,
    pub max_surrogate_residual: f64,
    pub surrogate_note: String,
}

const SURROGATE_NOTE: &str = "population estimates are KRR fits on n_pop noiseless samples f*(x) restricted to each \
partition; their own sampling error is not separated from the Monte-Carlo standard errors";

/// Population sample split by partition, with one surrogate per partition.
struct PartitionSurrogates {
    fits: Vec<Option<PopulationSurrogate>>,
    counts: Vec<usize>,
}

impl PartitionSurrogates {
    fn fit(spec: &KernelSpec, x: &Array2<f64>, target: &Array1<f64>, routes: &[usize], m: usize, lambda: f64) -> Result<Self> {
        let mut groups = vec![Vec::new(); m];
        for (j, &p) in routes.iter().enumerate() {
            groups[p].push(j);
        }
        let counts = groups.iter().map(Vec::len).collect();
        let fits = groups
            .iter()
            .enumerate()
            .map(|(i, idx)| {
                if idx.is_empty() {
                    log::warn!("partition {i} received no population samples; skipped");
                    return Ok(None);
                }
                let xi = x.select(Axis(0), idx);
                let yi = target.select(Axis(0), idx);
                PopulationSurrogate::fit(spec, xi.view(), yi.view(), lambda).map(Some)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { fits, counts })
    }

    /// Surrogate value at each test point (0 where the partition was skipped).
    fn eval(&self, x: &Array2<f64>, routes: &[usize]) -> Array1<f64> {
        let v: Vec<f64> = (0..x.nrows())
            .into_par_iter()
            .map(|t| self.fits[routes[t]].as_ref().map_or(0.0, |s| s.predict_one(x.row(t))))
            .collect();
        Array1::from(v)
    }

    fn max_residual(&self) -> f64 {
        self.fits.iter().flatten().map(|s| s.residual_ratio).fold(0.0, f64::max)
    }
}

fn masked(values: &Array1<f64>, routes: &[usize], i: usize) -> Vec<f64> {
    values
        .iter()
        .zip(routes)
        .map(|(&v, &p)| if p == i { v } else { 0.0 })
        .collect()
}

fn check_task(task: &SyntheticTask, spec: &KernelSpec, lambda_bar: f64) -> Result<()> {
    spec.validate()?;
    if task.dim() == 0 {
        return Err(Error::input("task has zero-dimensional covariates"));
    }
    if !(lambda_bar >= 0.0 && lambda_bar.is_finite()) {
        return Err(Error::input(format!("lambda_bar must be >= 0, got {lambda_bar}")));
    }
    Ok(())
}

/// Monte-Carlo estimate of the four partition-wise error terms and the
/// partition-wise error of the divide-and-conquer estimator.
///
/// Every term is an average over `n_test` fresh covariates of a per-point
/// quantity times the partition indicator; standard errors are across test
/// points. The bias uses `(f_lambda - f_bar)^2 - v/R` so that it is unbiased
/// for the finite number of repeats `R`, where `v` is the per-point variance
/// across repeats.
pub fn decompose_error_mc(
    task: &SyntheticTask,
    spec: &KernelSpec,
    scheme: &PartitionScheme,
    lambda: f64,
    lambda_bar: f64,
    cfg: &McConfig,
) -> Result<DecompositionReport> {
    check_task(task, spec, lambda_bar)?;
    cfg.validate(true)?;
    if !(lambda > 0.0 && lambda.is_finite()) || lambda_bar > lambda {
        return Err(Error::input(format!(
            "need lambda > 0 and lambda_bar in [0, lambda], got {lambda} and {lambda_bar}"
        )));
    }
    let template = scheme.build(task, cfg.n_train, cfg.seed)?;
    let m = template.m;

    let x_pop = task.sample_x(cfg.population_size(), &mut stream_rng(cfg.seed, STREAM_POPULATION));
    let f_pop = task.f_star_rows(&x_pop);
    let pop_routes = template.assign_rows(x_pop.view())?;
    let sur_bar = PartitionSurrogates::fit(spec, &x_pop, &f_pop, &pop_routes, m, lambda_bar)?;
    let sur_lam = if lambda_bar == lambda {
        None
    } else {
        Some(PartitionSurrogates::fit(spec, &x_pop, &f_pop, &pop_routes, m, lambda)?)
    };
    let sur_lam_ref = sur_lam.as_ref().unwrap_or(&sur_bar);

    let x_test = task.sample_x(cfg.n_test, &mut stream_rng(cfg.seed, STREAM_TEST));
    let f_test = task.f_star_rows(&x_test);
    let routes = template.assign_rows(x_test.view())?;
    let s_bar = sur_bar.eval(&x_test, &routes);
    let s_lam = if sur_lam.is_some() {
        sur_lam_ref.eval(&x_test, &routes)
    } else {
        s_bar.clone()
    };

    let preds = (0..cfg.n_repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(cfg.seed, STREAM_REPEAT_BASE + r as u64);
            let ds = task.sample(cfg.n_train, &mut rng);
            let part = template.rebind(ds.x.view())?;
            let model = fit_dc(spec, ds.x.view(), ds.y.view(), &part, &LambdaRule::Fixed { lambda })?;
            model.predict(x_test.view())
        })
        .collect::<Result<Vec<_>>>()?;

    let reps = cfg.n_repeats as f64;
    let nt = cfg.n_test;
    let mut a = Array1::zeros(nt);
    let mut rg = Array1::zeros(nt);
    let mut b = Array1::zeros(nt);
    let mut v = Array1::zeros(nt);
    let mut est = Array1::zeros(nt);
    let mut e = Array1::zeros(nt);
    for t in 0..nt {
        let f_bar = compensated_sum(preds.iter().map(|p| p[t])) / reps;
        let var_t = compensated_sum(preds.iter().map(|p| (p[t] - f_bar).powi(2))) / (reps - 1.0);
        a[t] = (f_test[t] - s_bar[t]).powi(2);
        rg[t] = (s_bar[t] - s_lam[t]).powi(2);
        b[t] = (s_lam[t] - f_bar).powi(2) - var_t / reps;
        v[t] = var_t;
        est[t] = compensated_sum(preds.iter().map(|p| (s_lam[t] - p[t]).powi(2))) / reps;
        e[t] = compensated_sum(preds.iter().map(|p| (f_test[t] - p[t]).powi(2))) / reps;
    }
    let bound = 2.0 * (&a + &(2.0 * (&rg + &b + &v)));
    let gap = &e - &bound;

    let mut partitions = Vec::with_capacity(m);
    for i in 0..m {
        let skipped = sur_bar.fits[i].is_none();
        let term = |vals: &Array1<f64>| Estimate::of(&masked(vals, &routes, i));
        let err = term(&e);
        let decomp_bound = term(&bound);
        let gap_est = term(&gap);
        partitions.push(PartitionTerms {
            partition: i,
            mass: routes.iter().filter(|&&p| p == i).count() as f64 / nt as f64,
            n_pop: sur_bar.counts[i],
            skipped,
            approx: term(&a).clamped(),
            reg: term(&rg).clamped(),
            bias: term(&b).clamped(),
            var: term(&v).clamped(),
            estimation: term(&est),
            err,
            decomp_bound,
            decomp_gap_se: gap_est.se,
            decomp_holds: gap_est.value <= 3.0 * gap_est.se,
        });
    }
    let total = |vals: &Array1<f64>| Estimate::of(vals.as_slice().expect("contiguous"));
    let totals = DecompositionTotals {
        approx: total(&a).clamped(),
        reg: total(&rg).clamped(),
        bias: total(&b).clamped(),
        var: total(&v).clamped(),
        err: total(&e),
        decomp_bound: total(&bound),
    };
    let max_surrogate_residual = sur_bar.max_residual().max(sur_lam_ref.max_residual());
    Ok(DecompositionReport {
        kernel: *spec,
        scheme: scheme.clone(),
        lambda,
        lambda_bar,
        config: *cfg,
        partitions,
        totals,
        max_surrogate_residual,
        surrogate_note: SURROGATE_NOTE.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub kernel: KernelSpec,
    pub scheme: PartitionScheme,
    pub lambda_bar: f64,
    pub config: McConfig,
    /// `Approx_i(lambda_bar)` of each partition surrogate.
    pub partition_approx: Vec<Estimate>,
    /// Contribution of each partition to the global surrogate's error.
    pub global_approx_by_partition: Vec<Estimate>,
    pub sum_partition_approx: Estimate,
    pub global_approx: Estimate,
    /// `global - sum`, with the paired standard error.
    pub difference: Estimate,
    /// `sum <= global + 2 se`.
    pub within: bool,
    /// `global - sum > 2 se`.
    pub strict: bool,
    pub max_surrogate_residual: f64,
    pub surrogate_note: String,
}

/// Compares the summed partition-wise approximation error with that of one
/// global surrogate, both at penalty `lambda_bar`.
pub fn approx_dominance_check(
    task: &SyntheticTask,
    spec: &KernelSpec,
    scheme: &PartitionScheme,
    lambda_bar: f64,
    cfg: &McConfig,
) -> Result<DominanceReport> {
    check_task(task, spec, lambda_bar)?;
    cfg.validate(false)?;
    let template = scheme.build(task, cfg.n_train, cfg.seed)?;
    let m = template.m;

    let x_pop = task.sample_x(cfg.population_size(), &mut stream_rng(cfg.seed, STREAM_POPULATION));
    let f_pop = task.f_star_rows(&x_pop);
    let pop_routes = template.assign_rows(x_pop.view())?;
    let local = PartitionSurrogates::fit(spec, &x_pop, &f_pop, &pop_routes, m, lambda_bar)?;
    let global = PopulationSurrogate::fit(spec, x_pop.view(), f_pop.view(), lambda_bar)?;

    let x_test = task.sample_x(cfg.n_test, &mut stream_rng(cfg.seed, STREAM_TEST));
    let f_test = task.f_star_rows(&x_test);
    let routes = template.assign_rows(x_test.view())?;
    let s_local = local.eval(&x_test, &routes);
    let s_global = global.predict(x_test.view());
    let a_local = (&f_test - &s_local).mapv(|d| d * d);
    let a_global = (&f_test - &s_global).mapv(|d| d * d);
    let diff = &a_global - &a_local;

    let sl = |vals: &Array1<f64>| Estimate::of(vals.as_slice().expect("contiguous"));
    let partition_approx = (0..m).map(|i| Estimate::of(&masked(&a_local, &routes, i))).collect();
    let global_approx_by_partition = (0..m).map(|i| Estimate::of(&masked(&a_global, &routes, i))).collect();
    let difference = sl(&diff);
    Ok(DominanceReport {
        kernel: *spec,
        scheme: scheme.clone(),
        lambda_bar,
        config: *cfg,
        partition_approx,
        global_approx_by_partition,
        sum_partition_approx: sl(&a_local),
        global_approx: sl(&a_global),
        difference,
        within: -difference.value <= 2.0 * difference.se,
        strict: difference.value > 2.0 * difference.se,
        max_surrogate_residual: local.max_residual().max(global.residual_ratio),
        surrogate_note: SURROGATE_NOTE.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{KernelExpansion, TaskId};
    use crate::estimators::fit_krr;
    use crate::linalg::tests::gauss_jordan_inverse;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn spectral_sum_examples() {
        assert!((spectral_sum(&[1.0, 0.5], 0.5) - 7.0 / 6.0).abs() < 1e-15);
        assert_eq!(spectral_sum(&[0.0, 0.0, 0.0], 0.3), 0.0);
        let eigs = [2.0, 1.0, 0.5, 0.1];
        let eps = 1e-6;
        let lam = 2.0 / eps * eigs.len() as f64;
        assert!(spectral_sum(&eigs, lam) < eps);
        assert_eq!(spectral_sum(&[-1e-16, 1.0], 1.0), 0.5);
    }

    #[test]
    fn truncated_sum_examples() {
        assert_eq!(truncated_sums(&[1.0, 1.0], 1, 1.0).unwrap(), (0.5, 0.5));
        let (u, l) = truncated_sums(&[3.0, 2.0], 5, 1.0).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(u, spectral_sum(&[3.0, 2.0], 1.0));
        assert!(truncated_sums(&[1.0], 0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn truncated_sums_add_up(eigs in prop::collection::vec(0.0f64..10.0, 1..40), d in 1usize..50, lam in 1e-6f64..10.0) {
            let mut eigs = eigs;
            eigs.sort_by(|a, b| b.total_cmp(a));
            let (u, l) = truncated_sums(&eigs, d, lam).unwrap();
            prop_assert!((u + l - spectral_sum(&eigs, lam)).abs() < 1e-12);
        }

        #[test]
        fn spectral_sum_strictly_decreasing(eigs in prop::collection::vec(1e-6f64..10.0, 1..30), lam in 1e-6f64..10.0, f in 1.001f64..100.0) {
            prop_assert!(spectral_sum(&eigs, lam * f) < spectral_sum(&eigs, lam));
        }

        #[test]
        fn coverr_non_increasing_in_n(eigs in prop::collection::vec(0.0f64..5.0, 1..20), d in 1usize..25, k in 2.0f64..6.0, n in 1usize..100000) {
            let mut eigs = eigs;
            eigs.sort_by(|a, b| b.total_cmp(a));
            let p = BoundParams { d, k, a1: 1.5, lambda_pi: 0.01, n };
            let q = BoundParams { n: n + 1 + n / 3, ..p };
            prop_assert!(coverr_bound(&q, &eigs).unwrap() <= coverr_bound(&p, &eigs).unwrap() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn coverr_examples() {
        let p = BoundParams { d: 3, k: 3.0, a1: 2.0, lambda_pi: 0.1, n: 50 };
        assert_eq!(coverr_bound(&p, &[0.0; 5]).unwrap(), 0.0);

        // d = len: L and the tail ratio vanish
        let eigs = [1.0, 0.1];
        let p = BoundParams { d: 2, k: 2.0, a1: 1.0, lambda_pi: 0.1, n: 100 };
        let u: f64 = 1.0 / 1.1 + 0.1 / 0.2;
        let e = std::f64::consts::E;
        let ln2 = 2f64.ln();
        let t3 = (e * ln2).sqrt() * u / 10.0;
        let t4 = 4.0 * e * ln2 * (u + 1.0 / 1.1) / 100f64.powf(0.5);
        let got = coverr_bound(&p, &eigs).unwrap();
        assert!((got - (t3 + t4)).abs() < 1e-13, "{got} vs {}", t3 + t4);

        // d = 1: the logarithmic terms drop
        let p1 = BoundParams { d: 1, ..p };
        let l: f64 = 0.1 / 0.2;
        let want = l + (l * (1.0 / 1.1)).sqrt() + 0.1 / 0.2;
        assert!((coverr_bound(&p1, &eigs).unwrap() - want).abs() < 1e-14);

        assert!(coverr_bound(&BoundParams { k: 1.5, ..p }, &eigs).is_err());
        assert!(coverr_bound(&BoundParams { d: 0, ..p }, &eigs).is_err());
    }

    fn mixture_x(n: usize, seed: u64) -> Array2<f64> {
        SyntheticTask::toy(TaskId::PiecewiseConstant)
            .unwrap()
            .sample_x(n, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn goodness_is_one_for_single_partition() {
        let spec = KernelSpec::Gaussian { gamma: 0.1 };
        for (n, cap) in [(50, 2000), (120, 40)] {
            let x = mixture_x(n, n as u64);
            let r = effective_dimensions(&spec, x.view(), &PartitionModel::single(n), 1.0 / n as f64, cap).unwrap();
            assert_eq!(r.g, 1.0);
            assert_eq!(r.masses, vec![1.0]);
        }
    }

    #[test]
    fn goodness_duplicated_halves() {
        let spec = KernelSpec::Gaussian { gamma: 0.5 };
        let half = mixture_x(30, 3);
        let x = ndarray::concatenate(Axis(0), &[half.view(), half.view()]).unwrap();
        let mut part = PartitionModel::single(60);
        part.m = 2;
        part.kind = PartitionKind::Random;
        part.rule = crate::partition::AssignmentRule::TrainingOnly { split_seed: 0 };
        part.train_assignments = (0..60).map(|i| i / 30).collect();
        let lam = 0.01;
        let r = effective_dimensions(&spec, x.view(), &part, lam, 2000).unwrap();

        // direct: eigenvalues of K_half/30 and of K_full/60 by an independent route
        let kh = spec.gram(half.view()).unwrap() / 30.0;
        let kf = spec.gram(x.view()).unwrap() / 60.0;
        let direct = |k: &Array2<f64>, l: f64| {
            // tr(K (K + l I)^-1) = sum eig/(eig + l)
            let mut shifted = k.clone();
            shifted.diag_mut().mapv_inplace(|v| v + l);
            k.dot(&gauss_jordan_inverse(&shifted)).diag().sum()
        };
        let s_half = direct(&kh, lam / 2.0);
        let s_full = direct(&kf, lam);
        assert!((r.s_partition[0] - s_half).abs() < 1e-8);
        assert!((r.s_global - s_full).abs() < 1e-8);
        assert!((r.g - 2.0 * s_half / s_full).abs() < 1e-8);
    }

    #[test]
    fn goodness_on_mixture_toy_is_small() {
        let spec = KernelSpec::Gaussian { gamma: 0.1 };
        let x = mixture_x(600, 11);
        let part = kmeans_fit(x.view(), &KMeansConfig::new(3, 0)).unwrap().model;
        let r = effective_dimensions(&spec, x.view(), &part, 1.0 / 600.0, 2000).unwrap();
        assert!(r.g > 0.0 && r.g < 5.0, "g = {}", r.g);
        assert!(r.s_global <= r.global_eigs.iter().filter(|&&e| e > 0.0).count() as f64);
        assert!(r.global_eigs.iter().all(|&e| e >= 0.0));
    }

    #[test]
    fn linear_kernel_spectrum_is_finite_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = 4;
        let x = Array2::from_shape_fn((200, d), |_| rng.random_range(-1.0..1.0));
        let r = effective_dimensions(&KernelSpec::Linear, x.view(), &PartitionModel::single(200), 1e-6, 2000).unwrap();
        let trace: f64 = r.global_eigs.iter().sum();
        assert!(r.global_eigs.iter().filter(|&&e| e > 1e-8 * trace).count() <= d);
        assert!(r.s_global <= d as f64 + 1e-6);
    }

    #[test]
    fn effective_dimension_errors_and_empty_partitions() {
        let x = mixture_x(20, 1);
        let spec = KernelSpec::Gaussian { gamma: 1.0 };
        assert!(effective_dimensions(&spec, x.view(), &PartitionModel::single(19), 0.1, 100).is_err());
        assert!(effective_dimensions(&spec, x.view(), &PartitionModel::single(20), 0.0, 100).is_err());
        let part = PartitionModel::from_centroids(PartitionKind::Kmeans, vec![vec![1.5], vec![100.0]], x.view()).unwrap();
        let r = effective_dimensions(&spec, x.view(), &part, 0.1, 100).unwrap();
        assert_eq!(r.empty_partitions, vec![1]);
        assert_eq!(r.s_partition[1], 0.0);
    }

    #[test]
    fn surrogate_matches_dense_krr() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = KernelSpec::Gaussian { gamma: 0.5 };
        let x = Array2::from_shape_fn((60, 1), |_| rng.random_range(-2.0..2.0));
        let y = x.column(0).mapv(|t: f64| t.sin());
        let lam = 1e-3;
        let s = PopulationSurrogate::fit(&spec, x.view(), y.view(), lam).unwrap();
        let dense = fit_krr(&spec, x.view(), y.view(), lam).unwrap();
        let xt = Array2::from_shape_fn((20, 1), |_| rng.random_range(-2.0..2.0));
        let (a, b) = (s.predict(xt.view()), dense.predict(xt.view()).unwrap());
        for (p, q) in a.iter().zip(b.iter()) {
            assert!((p - q).abs() < 1e-6, "{p} vs {q}");
        }
    }

    #[test]
    fn surrogate_recovers_rkhs_function_at_zero_penalty() {
        let cov = Covariates::StandardNormal { dim: 3 };
        let exp = KernelExpansion::random(KernelSpec::Linear, &cov, 10, 1).unwrap();
        let task = SyntheticTask::from_expansion(exp, cov, 0.1).unwrap();
        let x = task.sample_x(500, &mut ChaCha8Rng::seed_from_u64(2));
        let f = task.f_star_rows(&x);
        let s = PopulationSurrogate::fit(&KernelSpec::Linear, x.view(), f.view(), 0.0).unwrap();
        assert_eq!(s.rank(), 3);
        let xt = task.sample_x(50, &mut ChaCha8Rng::seed_from_u64(3));
        let ft = task.f_star_rows(&xt);
        for (p, q) in s.predict(xt.view()).iter().zip(ft.iter()) {
            assert!((p - q).abs() < 1e-8);
        }
    }

    fn small_cfg(seed: u64) -> McConfig {
        McConfig {
            n_train: 90,
            n_pop: Some(1500),
            n_test: 1500,
            n_repeats: 12,
            seed,
        }
    }

    #[test]
    fn decomposition_zero_approx_in_rkhs() {
        let cov = Covariates::StandardNormal { dim: 2 };
        let spec = KernelSpec::Polynomial { degree: 2, offset: 1.0 };
        let exp = KernelExpansion::random(spec, &cov, 8, 4).unwrap();
        let task = SyntheticTask::from_expansion(exp, cov, 0.05).unwrap();
        let lam_bar = default_lambda_bar(&task, &spec, 0.01);
        assert_eq!(lam_bar, 0.0);
        let r = decompose_error_mc(&task, &spec, &PartitionScheme::Kmeans { m: 2, seed: 0 }, 0.01, lam_bar, &small_cfg(1))
            .unwrap();
        assert!(r.totals.approx.value < 1e-12, "{:?}", r.totals.approx);
        for p in &r.partitions {
            assert!(p.decomp_holds);
        }
    }

    #[test]
    fn decomposition_reg_vanishes_when_penalties_agree() {
        let task = SyntheticTask::toy(TaskId::PiecewiseConstant).unwrap();
        let spec = KernelSpec::Gaussian { gamma: 0.1 };
        let r = decompose_error_mc(&task, &spec, &PartitionScheme::Components, 0.01, 0.01, &small_cfg(2)).unwrap();
        assert_eq!(r.totals.reg.value, 0.0);
        assert!(r.partitions.iter().all(|p| p.reg.value == 0.0 && !p.skipped));
        let mass: f64 = r.partitions.iter().map(|p| p.mass).sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decomposition_bias_plus_var_matches_direct() {
        let task = SyntheticTask::toy(TaskId::Sine).unwrap();
        let spec = KernelSpec::Polynomial { degree: 2, offset: 1.0 };
        let mut cfg = small_cfg(3);
        cfg.n_repeats = 40;
        let r = decompose_error_mc(&task, &spec, &PartitionScheme::Components, 1.0 / 90.0, 1e-3, &cfg).unwrap();
        for p in &r.partitions {
            let combined = p.bias.value + p.var.value;
            assert!(
                (combined - p.estimation.value).abs() <= 0.1 * p.estimation.value,
                "{combined} vs {}",
                p.estimation.value
            );
            assert!(p.decomp_holds, "{p:?}");
        }
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"surrogate_note\""));
    }

    #[test]
    fn decomposition_is_deterministic() {
        let task = SyntheticTask::toy(TaskId::PiecewiseGaussian).unwrap();
        let spec = KernelSpec::Gaussian { gamma: 0.1 };
        let cfg = McConfig { n_repeats: 4, ..small_cfg(9) };
        let a = decompose_error_mc(&task, &spec, &PartitionScheme::Single, 0.01, 0.001, &cfg).unwrap();
        let b = decompose_error_mc(&task, &spec, &PartitionScheme::Single, 0.01, 0.001, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decomposition_rejects_bad_penalties() {
        let task = SyntheticTask::toy(TaskId::Sine).unwrap();
        let spec = KernelSpec::Linear;
        assert!(decompose_error_mc(&task, &spec, &PartitionScheme::Single, 0.01, 0.02, &small_cfg(0)).is_err());
        let cfg = McConfig { n_repeats: 1, ..small_cfg(0) };
        assert!(decompose_error_mc(&task, &spec, &PartitionScheme::Single, 0.01, 0.0, &cfg).is_err());
    }

    #[test]
    fn dominance_single_partition_ties() {
        let task = SyntheticTask::toy(TaskId::PiecewiseGaussian).unwrap();
        let spec = KernelSpec::Gaussian { gamma: 0.1 };
        let r = approx_dominance_check(&task, &spec, &PartitionScheme::Single, 1e-3, &small_cfg(4)).unwrap();
        assert_eq!(r.sum_partition_approx, r.global_approx);
        assert_eq!(r.difference.value, 0.0);
        assert!(r.within && !r.strict);
    }

    #[test]
    fn dominance_zero_in_rkhs() {
        let cov = Covariates::StandardNormal { dim: 2 };
        let exp = KernelExpansion::random(KernelSpec::Linear, &cov, 5, 8).unwrap();
        let task = SyntheticTask::from_expansion(exp, cov, 0.05).unwrap();
        let r = approx_dominance_check(&task, &KernelSpec::Linear, &PartitionScheme::Kmeans { m: 3, seed: 1 }, 0.0, &small_cfg(5))
            .unwrap();
        assert!(r.global_approx.value < 1e-14);
        assert!(r.sum_partition_approx.value < 1e-14);
    }

    #[test]
    fn component_scheme_routes_by_mixture_mean() {
        let task = SyntheticTask::toy(TaskId::PiecewiseConstant).unwrap();
        let p = PartitionScheme::Components.build(&task, 10, 0).unwrap();
        assert_eq!(p.assign_rows(array![[0.9], [1.0], [1.2], [2.7]].view()).unwrap(), vec![0, 0, 1, 2]);
        assert_eq!(p.n_train(), 0);
    }
}
