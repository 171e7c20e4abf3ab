//! Executes configs: estimator sweeps (`run`), goodness curves (`diagnose`)
//! and Monte-Carlo error decompositions (`decompose`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use dckrr::data::{
    load_csv, normalize, split, subsample, Covariates, Dataset, KernelExpansion, SyntheticTask,
};
use dckrr::diagnostics::{
    approx_dominance_check, decompose_error_mc, default_lambda_bar, effective_dimensions, DecompositionReport,
    DominanceReport, McConfig, SpectralReport,
};
use dckrr::estimators::{fit_dc, fit_random_avg, fit_whole, rmse, LambdaRule, SavedModel};
use dckrr::partition::{
    kernel_kmeans_fit, kmeans_fit, random_split, voronoi_fit, KMeansConfig, KernelKMeansConfig, PartitionModel,
};
use dckrr::stats::{median, ols_slope, quantile};
use ndarray::Array1;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    DatasetSource, DecomposeMode, EstimatorKind, ExperimentConfig, Partitioner, ScoreTarget, Sweep,
};
use crate::CliError;

/// Command-line overrides shared by every verb.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub seed_offset: u64,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            jobs: 1,
            seed_offset: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub estimator: String,
    pub sweep: Option<f64>,
    pub seed: u64,
    pub rmse: Option<f64>,
    pub fit_seconds: Option<f64>,
    pub predict_seconds: Option<f64>,
    pub m: Option<usize>,
    pub g_lambda: Option<f64>,
    /// `ok`, `skipped: <reason>` or `failed: <reason>`.
    pub status: String,
}

impl ResultRow {
    fn blank(kind: EstimatorKind, sweep: Option<f64>, seed: u64) -> Self {
        Self {
            estimator: kind.as_str().to_string(),
            sweep,
            seed,
            rmse: None,
            fit_seconds: None,
            predict_seconds: None,
            m: None,
            g_lambda: None,
            status: String::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub estimator: String,
    pub sweep: Option<f64>,
    pub n_ok: usize,
    pub median_rmse: Option<f64>,
    pub q25_rmse: Option<f64>,
    pub q75_rmse: Option<f64>,
    pub median_fit_seconds: Option<f64>,
    pub median_predict_seconds: Option<f64>,
    pub median_m: Option<f64>,
    pub median_g_lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeRow {
    pub estimator: String,
    /// Least-squares slope of log(mean test MSE) against log(n).
    pub slope: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub slopes: Vec<SlopeRow>,
    pub failures: usize,
}

enum Source {
    Synthetic {
        task: SyntheticTask,
        n_train: usize,
        n_test: usize,
    },
    Table {
        train: Dataset,
        test: Dataset,
    },
}

struct Prepared {
    train: Dataset,
    test: Dataset,
    target: Array1<f64>,
}

fn synthetic_task(src: &DatasetSource) -> Result<Option<SyntheticTask>, CliError> {
    Ok(match src {
        DatasetSource::Toy {
            task,
            noise_level,
            noise_convention,
            ..
        } => {
            let t = SyntheticTask::toy(*task)?;
            Some(match noise_level {
                Some(level) => t.with_noise(*level, *noise_convention),
                None => t,
            })
        }
        DatasetSource::Expansion {
            kernel,
            dim,
            n_centers,
            expansion_seed,
            noise_var,
            ..
        } => {
            let cov = Covariates::StandardNormal { dim: *dim };
            let exp = KernelExpansion::random(*kernel, &cov, *n_centers, *expansion_seed)?;
            Some(SyntheticTask::from_expansion(exp, cov, *noise_var)?)
        }
        DatasetSource::Csv { .. } => None,
    })
}

fn load_source(cfg: &ExperimentConfig) -> Result<Source, CliError> {
    if let Some(task) = synthetic_task(&cfg.dataset)? {
        let (n_train, n_test) = match cfg.dataset {
            DatasetSource::Toy { n_train, n_test, .. } | DatasetSource::Expansion { n_train, n_test, .. } => {
                (n_train, n_test)
            }
            DatasetSource::Csv { .. } => unreachable!(),
        };
        return Ok(Source::Synthetic { task, n_train, n_test });
    }
    let DatasetSource::Csv {
        path,
        target,
        delimiter,
        test_fraction,
        split_seed,
        normalize: do_normalize,
    } = &cfg.dataset
    else {
        unreachable!()
    };
    if !path.exists() {
        return Err(CliError::Data(format!("dataset {} does not exist", path.display())));
    }
    let delim = u8::try_from(*delimiter).map_err(|_| CliError::Config("delimiter must be ASCII".into()))?;
    let ds = load_csv(path, target, delim)?;
    let (train, test) = split(&ds, *test_fraction, *split_seed)?;
    let (train, test) = if *do_normalize {
        let (train, scaler) = normalize(&train)?;
        let test = scaler.apply(&test)?;
        (train, test)
    } else {
        (train, test)
    };
    Ok(Source::Table { train, test })
}

fn prepare(source: &Source, cfg: &ExperimentConfig, sweep: Option<f64>, seed: u64) -> Result<Prepared, CliError> {
    let n_override = match cfg.sweep {
        Sweep::N { .. } => sweep.map(|v| v as usize),
        _ => None,
    };
    match source {
        Source::Synthetic { task, n_train, n_test } => {
            let n_train = n_override.unwrap_or(*n_train);
            let all = task.sample_seeded(n_train + n_test, seed);
            let train_idx: Vec<usize> = (0..n_train).collect();
            let test_idx: Vec<usize> = (n_train..n_train + n_test).collect();
            let train = all.select(&train_idx);
            let test = all.select(&test_idx);
            let target = match cfg.score_against {
                ScoreTarget::Observed => test.y.clone(),
                ScoreTarget::FStar => task.f_star_rows(&test.x),
            };
            Ok(Prepared { train, test, target })
        }
        Source::Table { train, test } => {
            let train = match n_override {
                Some(n) if n < train.len() => subsample(train, n, seed),
                Some(n) if n > train.len() => {
                    return Err(CliError::Config(format!(
                        "sweep asks for n = {n} but the training split has {} rows",
                        train.len()
                    )))
                }
                _ => train.clone(),
            };
            Ok(Prepared {
                train,
                target: test.y.clone(),
                test: test.clone(),
            })
        }
    }
}

/// Classifies a failure inside one sweep cell.
fn cell_status(e: &dckrr::Error) -> String {
    if e.is_numeric() {
        format!("failed: {e}")
    } else {
        format!("skipped: {e}")
    }
}

struct CellParams {
    sweep: Option<f64>,
    seed: u64,
    m: usize,
    alpha: f64,
    lambda: f64,
}

fn run_estimator(
    kind: EstimatorKind,
    data: &Prepared,
    p: &CellParams,
    cfg: &ExperimentConfig,
) -> ResultRow {
    let mut row = ResultRow::blank(kind, p.sweep, p.seed);
    let n = data.train.len();
    if kind == EstimatorKind::Whole && n > cfg.whole_n_cap {
        row.status = format!("skipped: n = {n} exceeds the whole-KRR cap {}", cfg.whole_n_cap);
        return row;
    }
    let x = data.train.x.view();
    let y = data.train.y.view();
    let spec = &cfg.kernel;
    let rule = LambdaRule::Fixed { lambda: p.lambda };
    let outcome = (|| -> dckrr::Result<(f64, f64, Array1<f64>, usize, Option<PartitionModel>)> {
        let t0 = Instant::now();
        let (model, part) = match kind {
            EstimatorKind::Whole => (SavedModel::Whole(fit_whole(spec, x, y, p.lambda)?), None),
            EstimatorKind::RandomAvg => {
                let avg = fit_random_avg(spec, x, y, p.m, p.lambda, p.seed)?;
                let part = avg.partition.clone();
                (SavedModel::RandomAvg(avg), Some(part))
            }
            EstimatorKind::DcKmeans | EstimatorKind::DcKernelKmeans | EstimatorKind::DcVoronoi => {
                let part = match kind {
                    EstimatorKind::DcKmeans => kmeans_fit(x, &KMeansConfig::new(p.m, p.seed))?.model,
                    EstimatorKind::DcKernelKmeans => {
                        kernel_kmeans_fit(spec, x, &KernelKMeansConfig::new(p.m, p.seed))?.model
                    }
                    _ => voronoi_fit(x, p.alpha)?,
                };
                (SavedModel::Dc(fit_dc(spec, x, y, &part, &rule)?), Some(part))
            }
        };
        let fit_s = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let pred = model.predict(data.test.x.view())?;
        let predict_s = t1.elapsed().as_secs_f64();
        let m_used = part.as_ref().map_or(1, |q| q.m);
        Ok((fit_s, predict_s, pred, m_used, part))
    })();
    match outcome {
        Ok((fit_s, predict_s, pred, m_used, part)) => {
            row.fit_seconds = Some(fit_s);
            row.predict_seconds = Some(predict_s);
            row.m = Some(m_used);
            match rmse(pred.view(), data.target.view()) {
                Ok(v) if v.is_finite() => {
                    row.rmse = Some(v);
                    row.status = "ok".into();
                }
                Ok(v) => row.status = format!("failed: non-finite rmse {v}"),
                Err(e) => row.status = cell_status(&e),
            }
            if cfg.goodness && row.is_ok() {
                let part = part.unwrap_or_else(|| PartitionModel::single(n));
                match effective_dimensions(spec, x, &part, p.lambda, cfg.subsample_cap) {
                    Ok(r) => row.g_lambda = Some(r.g),
                    Err(e) => log::warn!("g(lambda) for {} failed: {e}", kind.as_str()),
                }
            }
        }
        Err(e) => row.status = cell_status(&e),
    }
    row
}

fn run_cell(
    source: &Source,
    cfg: &ExperimentConfig,
    sweep: Option<f64>,
    seed: u64,
) -> Vec<ResultRow> {
    let fail_all = |status: String| {
        cfg.estimators
            .iter()
            .map(|&k| ResultRow {
                status: status.clone(),
                ..ResultRow::blank(k, sweep, seed)
            })
            .collect::<Vec<_>>()
    };
    let data = match prepare(source, cfg, sweep, seed) {
        Ok(d) => d,
        Err(e) => return fail_all(format!("skipped: {e}")),
    };
    let n = data.train.len();
    let (m, alpha) = match cfg.sweep {
        Sweep::M { .. } => (sweep.expect("m sweep value") as usize, cfg.voronoi_alpha),
        Sweep::Alpha { .. } => {
            let alpha = sweep.expect("alpha sweep value");
            match voronoi_fit(data.train.x.view(), alpha) {
                Ok(p) => (p.m, alpha),
                Err(e) => return fail_all(cell_status(&e)),
            }
        }
        _ => (cfg.m, cfg.voronoi_alpha),
    };
    let params = CellParams {
        sweep,
        seed,
        m,
        alpha,
        lambda: cfg.lambda.resolve(n),
    };
    cfg.estimators
        .iter()
        .map(|&k| {
            log::debug!("{} sweep={sweep:?} seed={seed}", k.as_str());
            run_estimator(k, &data, &params, cfg)
        })
        .collect()
}

fn build_pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))
}

fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        a.estimator
            .cmp(&b.estimator)
            .then(a.sweep.unwrap_or(f64::NAN).total_cmp(&b.sweep.unwrap_or(f64::NAN)))
            .then(a.seed.cmp(&b.seed))
    });
}

/// Full cross product of estimators, sweep values and seeds.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let started = now_seconds();
    let source = load_source(cfg)?;
    let seeds: Vec<u64> = cfg.seeds.iter().map(|s| s.wrapping_add(opts.seed_offset)).collect();
    let cells: Vec<(Option<f64>, u64)> = cfg
        .sweep
        .points()
        .into_iter()
        .flat_map(|v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let pool = build_pool(opts.jobs)?;
    let mut rows: Vec<ResultRow> = pool.install(|| {
        cells
            .par_iter()
            .flat_map_iter(|&(v, s)| run_cell(&source, cfg, v, s))
            .collect()
    });
    sort_rows(&mut rows);
    let summary = summarize(&rows);
    let slopes = if matches!(cfg.sweep, Sweep::N { .. }) {
        rate_slopes(&rows)
    } else {
        Vec::new()
    };
    let failures = rows.iter().filter(|r| r.status.starts_with("failed")).count();

    fs::create_dir_all(&opts.out_dir)?;
    write_csv(&opts.out_dir.join("results.csv"), &rows)?;
    write_csv(&opts.out_dir.join("summary.csv"), &summary)?;
    let mut outputs = vec!["results.csv", "summary.csv"];
    if !slopes.is_empty() {
        write_csv(&opts.out_dir.join("rate.csv"), &slopes)?;
        outputs.push("rate.csv");
    }
    write_manifest(&opts.out_dir, "run", cfg, opts, started, &outputs)?;
    Ok(RunOutcome {
        rows,
        summary,
        slopes,
        failures,
    })
}

fn opt_median(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| median(v))
}

/// Median and interquartile range across seeds per (estimator, sweep).
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, u64), (Option<f64>, Vec<&ResultRow>)> = BTreeMap::new();
    for r in rows {
        let key = (r.estimator.clone(), r.sweep.map_or(u64::MAX, f64::to_bits));
        groups.entry(key).or_insert((r.sweep, Vec::new())).1.push(r);
    }
    let mut out: Vec<SummaryRow> = groups
        .into_values()
        .map(|(sweep, rs)| {
            let ok: Vec<&&ResultRow> = rs.iter().filter(|r| r.is_ok()).collect();
            let col = |f: fn(&ResultRow) -> Option<f64>| ok.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
            let rm = col(|r| r.rmse);
            SummaryRow {
                estimator: rs[0].estimator.clone(),
                sweep,
                n_ok: ok.len(),
                median_rmse: opt_median(&rm),
                q25_rmse: (!rm.is_empty()).then(|| quantile(&rm, 0.25)),
                q75_rmse: (!rm.is_empty()).then(|| quantile(&rm, 0.75)),
                median_fit_seconds: opt_median(&col(|r| r.fit_seconds)),
                median_predict_seconds: opt_median(&col(|r| r.predict_seconds)),
                median_m: opt_median(&col(|r| r.m.map(|m| m as f64))),
                median_g_lambda: opt_median(&col(|r| r.g_lambda)),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.estimator
            .cmp(&b.estimator)
            .then(a.sweep.unwrap_or(f64::NAN).total_cmp(&b.sweep.unwrap_or(f64::NAN)))
    });
    out
}

/// Log-log slope of mean MSE against training size, per estimator.
pub fn rate_slopes(rows: &[ResultRow]) -> Vec<SlopeRow> {
    let mut by_est: BTreeMap<&str, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.is_ok()) {
        if let (Some(n), Some(e)) = (r.sweep, r.rmse) {
            by_est
                .entry(&r.estimator)
                .or_default()
                .entry(n as u64)
                .or_default()
                .push(e * e);
        }
    }
    by_est
        .into_iter()
        .filter_map(|(est, pts)| {
            let (lx, ly): (Vec<f64>, Vec<f64>) = pts
                .iter()
                .map(|(&n, mses)| ((n as f64).ln(), (mses.iter().sum::<f64>() / mses.len() as f64).ln()))
                .unzip();
            (lx.len() >= 2).then(|| SlopeRow {
                estimator: est.to_string(),
                slope: ols_slope(&lx, &ly),
                n_points: lx.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoodnessRow {
    pub partitioner: String,
    pub m: usize,
    pub seed: u64,
    pub lambda: f64,
    pub s_global: f64,
    pub s_partition_sum: f64,
    pub g: f64,
    pub empty_partitions: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseEntry {
    pub m: usize,
    pub seed: u64,
    pub report: SpectralReport,
}

/// One spectral report per (m, seed) for the configured partitioner.
pub fn diagnose(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<DiagnoseEntry>, CliError> {
    let started = now_seconds();
    let source = load_source(cfg)?;
    let seeds: Vec<u64> = cfg.seeds.iter().map(|s| s.wrapping_add(opts.seed_offset)).collect();
    let cells: Vec<(usize, u64)> = cfg
        .diagnose
        .m_values
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let pool = build_pool(opts.jobs)?;
    let partitioner = cfg.diagnose.partitioner;
    let entries = pool.install(|| {
        cells
            .par_iter()
            .map(|&(m, seed)| -> Result<DiagnoseEntry, CliError> {
                let data = prepare(&source, cfg, None, seed)?;
                let x = data.train.x.view();
                let part = match partitioner {
                    Partitioner::Kmeans => kmeans_fit(x, &KMeansConfig::new(m, seed))?.model,
                    Partitioner::KernelKmeans => kernel_kmeans_fit(&cfg.kernel, x, &KernelKMeansConfig::new(m, seed))?.model,
                    Partitioner::Random => random_split(data.train.len(), m, seed)?,
                };
                let lambda = cfg.lambda.resolve(data.train.len());
                let report = effective_dimensions(&cfg.kernel, x, &part, lambda, cfg.subsample_cap)?;
                Ok(DiagnoseEntry { m, seed, report })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let rows: Vec<GoodnessRow> = entries
        .iter()
        .map(|e| GoodnessRow {
            partitioner: partitioner.as_str().to_string(),
            m: e.m,
            seed: e.seed,
            lambda: e.report.lambda,
            s_global: e.report.s_global,
            s_partition_sum: e.report.s_partition.iter().sum(),
            g: e.report.g,
            empty_partitions: e.report.empty_partitions.len(),
        })
        .collect();
    fs::create_dir_all(&opts.out_dir)?;
    write_csv(&opts.out_dir.join("goodness.csv"), &rows)?;
    fs::write(opts.out_dir.join("spectral_reports.json"), serde_json::to_string(&entries)?)?;
    write_manifest(&opts.out_dir, "diagnose", cfg, opts, started, &["goodness.csv", "spectral_reports.json"])?;
    Ok(entries)
}

#[derive(Debug, Clone, Default)]
pub struct DecomposeOutcome {
    pub decomposition: Option<DecompositionReport>,
    pub dominance: Option<DominanceReport>,
}

#[derive(Serialize)]
struct TermRow<'a> {
    partition: String,
    term: &'a str,
    value: f64,
    se: f64,
}

/// Error decomposition and/or approximation dominance on a synthetic task.
pub fn decompose(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<DecomposeOutcome, CliError> {
    let started = now_seconds();
    let dc = cfg
        .decompose
        .as_ref()
        .ok_or_else(|| CliError::Config("config has no `decompose` section".into()))?;
    let task = synthetic_task(&cfg.dataset)?
        .ok_or_else(|| CliError::Config("decompose needs a synthetic dataset with a known f*".into()))?;
    let n_train = cfg.n_train().expect("synthetic source has n_train");
    let lambda = dc.lambda.unwrap_or_else(|| cfg.lambda.resolve(n_train));
    let lambda_bar = dc
        .lambda_bar
        .unwrap_or_else(|| default_lambda_bar(&task, &cfg.kernel, lambda));
    let mc = McConfig {
        n_train,
        n_pop: dc.n_pop,
        n_test: dc.n_test,
        n_repeats: dc.n_repeats,
        seed: cfg.seeds[0].wrapping_add(opts.seed_offset),
    };
    let pool = build_pool(opts.jobs)?;
    let mut out = DecomposeOutcome::default();
    let mut outputs = Vec::new();
    fs::create_dir_all(&opts.out_dir)?;
    if dc.mode != DecomposeMode::Dominance {
        let r = pool.install(|| decompose_error_mc(&task, &cfg.kernel, &dc.scheme, lambda, lambda_bar, &mc))?;
        let mut rows = Vec::new();
        for p in &r.partitions {
            let name = p.partition.to_string();
            for (term, e) in [
                ("approx", p.approx),
                ("reg", p.reg),
                ("bias", p.bias),
                ("var", p.var),
                ("err", p.err),
                ("decomp_bound", p.decomp_bound),
            ] {
                rows.push(TermRow {
                    partition: name.clone(),
                    term,
                    value: e.value,
                    se: e.se,
                });
            }
        }
        let t = &r.totals;
        for (term, e) in [
            ("approx", t.approx),
            ("reg", t.reg),
            ("bias", t.bias),
            ("var", t.var),
            ("err", t.err),
            ("decomp_bound", t.decomp_bound),
        ] {
            rows.push(TermRow {
                partition: "total".into(),
                term,
                value: e.value,
                se: e.se,
            });
        }
        write_csv(&opts.out_dir.join("decomposition.csv"), &rows)?;
        fs::write(opts.out_dir.join("decomposition.json"), serde_json::to_string_pretty(&r)?)?;
        outputs.extend(["decomposition.csv", "decomposition.json"]);
        out.decomposition = Some(r);
    }
    if dc.mode != DecomposeMode::Decompose {
        let r = pool.install(|| approx_dominance_check(&task, &cfg.kernel, &dc.scheme, lambda_bar, &mc))?;
        fs::write(opts.out_dir.join("dominance.json"), serde_json::to_string_pretty(&r)?)?;
        outputs.push("dominance.json");
        out.dominance = Some(r);
    }
    write_manifest(&opts.out_dir, "decompose", cfg, opts, started, &outputs)?;
    Ok(out)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn now_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

#[derive(Serialize)]
struct Manifest<'a> {
    verb: &'a str,
    library_version: &'a str,
    config: &'a ExperimentConfig,
    jobs: usize,
    seed_offset: u64,
    started_unix: f64,
    finished_unix: f64,
    outputs: &'a [&'a str],
}

fn write_manifest(
    dir: &Path,
    verb: &str,
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    started: f64,
    outputs: &[&str],
) -> Result<(), CliError> {
    let m = Manifest {
        verb,
        library_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        jobs: opts.jobs,
        seed_offset: opts.seed_offset,
        started_unix: started,
        finished_unix: now_seconds(),
        outputs,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
    Ok(())
}
