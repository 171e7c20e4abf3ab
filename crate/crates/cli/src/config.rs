//! Experiment configuration (one JSON document per experiment).

use std::path::{Path, PathBuf};

use dckrr::data::{NoiseConvention, TaskId};
use dckrr::diagnostics::{PartitionScheme, DEFAULT_SUBSAMPLE_CAP};
use dckrr::KernelSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub dataset: DatasetSource,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub lambda: LambdaChoice,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub sweep: Sweep,
    /// Partition count when the sweep axis is not `m`.
    #[serde(default = "default_m")]
    pub m: usize,
    /// Voronoi radius fraction when the sweep axis is not `alpha`.
    #[serde(default = "default_alpha")]
    pub voronoi_alpha: f64,
    pub seeds: Vec<u64>,
    /// Also compute g(lambda) for every partition-based estimator.
    #[serde(default)]
    pub goodness: bool,
    #[serde(default)]
    pub score_against: ScoreTarget,
    #[serde(default = "default_whole_cap")]
    pub whole_n_cap: usize,
    #[serde(default = "default_subsample_cap")]
    pub subsample_cap: usize,
    #[serde(default)]
    pub diagnose: DiagnoseConfig,
    #[serde(default)]
    pub decompose: Option<DecomposeConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_name() -> String {
    "experiment".into()
}
fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Whole, EstimatorKind::DcKmeans, EstimatorKind::RandomAvg]
}
fn default_m() -> usize {
    3
}
fn default_alpha() -> f64 {
    0.07
}
fn default_whole_cap() -> usize {
    20_000
}
fn default_subsample_cap() -> usize {
    DEFAULT_SUBSAMPLE_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Toy {
        task: TaskId,
        n_train: usize,
        n_test: usize,
        #[serde(default)]
        noise_level: Option<f64>,
        #[serde(default)]
        noise_convention: NoiseConvention,
    },
    /// `f*` a fixed random kernel expansion over standard normal covariates.
    Expansion {
        kernel: KernelSpec,
        dim: usize,
        n_centers: usize,
        expansion_seed: u64,
        noise_var: f64,
        n_train: usize,
        n_test: usize,
    },
    Csv {
        /// Relative paths are resolved against the config file's directory.
        path: PathBuf,
        target: String,
        #[serde(default = "default_delimiter")]
        delimiter: char,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
        #[serde(default)]
        split_seed: u64,
        #[serde(default = "default_true")]
        normalize: bool,
    },
}

fn default_delimiter() -> char {
    ','
}
fn default_test_fraction() -> f64 {
    0.2
}
fn default_true() -> bool {
    true
}

impl DatasetSource {
    pub fn is_synthetic(&self) -> bool {
        !matches!(self, DatasetSource::Csv { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaChoice {
    /// `1 / n_train`
    #[default]
    OneOverN,
    Fixed { lambda: f64 },
    /// `rank / n_train`, for finite-rank kernels.
    RankOverN { rank: f64 },
}

impl LambdaChoice {
    pub fn resolve(&self, n_train: usize) -> f64 {
        match *self {
            LambdaChoice::OneOverN => 1.0 / n_train as f64,
            LambdaChoice::Fixed { lambda } => lambda,
            LambdaChoice::RankOverN { rank } => rank / n_train as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Whole,
    DcKmeans,
    DcKernelKmeans,
    DcVoronoi,
    RandomAvg,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Whole => "whole",
            EstimatorKind::DcKmeans => "dc_kmeans",
            EstimatorKind::DcKernelKmeans => "dc_kernel_kmeans",
            EstimatorKind::DcVoronoi => "dc_voronoi",
            EstimatorKind::RandomAvg => "random_avg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sweep {
    #[default]
    None,
    M {
        values: Vec<usize>,
    },
    /// Training-set sizes.
    N {
        values: Vec<usize>,
    },
    /// Voronoi radius fractions; other partitioned estimators use the
    /// resulting cell count as their `m`.
    Alpha {
        values: Vec<f64>,
    },
}

impl Sweep {
    pub fn points(&self) -> Vec<Option<f64>> {
        match self {
            Sweep::None => vec![None],
            Sweep::M { values } | Sweep::N { values } => values.iter().map(|&v| Some(v as f64)).collect(),
            Sweep::Alpha { values } => values.iter().map(|&v| Some(v)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreTarget {
    /// Noisy held-out responses.
    #[default]
    Observed,
    /// The noiseless regression function (synthetic sources only).
    FStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partitioner {
    #[default]
    Kmeans,
    KernelKmeans,
    Random,
}

impl Partitioner {
    pub fn as_str(&self) -> &'static str {
        match self {
            Partitioner::Kmeans => "kmeans",
            Partitioner::KernelKmeans => "kernel_kmeans",
            Partitioner::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    #[serde(default)]
    pub partitioner: Partitioner,
    #[serde(default = "default_m_values")]
    pub m_values: Vec<usize>,
}

fn default_m_values() -> Vec<usize> {
    (1..=8).collect()
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            partitioner: Partitioner::default(),
            m_values: default_m_values(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecomposeMode {
    Decompose,
    Dominance,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeConfig {
    pub scheme: PartitionScheme,
    /// Defaults to the experiment's lambda rule at `n_train`.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Defaults to 0 when `f*` is in the RKHS, else `lambda / 10`.
    #[serde(default)]
    pub lambda_bar: Option<f64>,
    #[serde(default)]
    pub n_pop: Option<usize>,
    #[serde(default = "default_mc_test")]
    pub n_test: usize,
    #[serde(default = "default_repeats")]
    pub n_repeats: usize,
    #[serde(default)]
    pub mode: DecomposeMode,
}

fn default_mc_test() -> usize {
    5000
}
fn default_repeats() -> usize {
    20
}

impl ExperimentConfig {
    /// Reads, parses and validates a config; relative CSV paths are anchored
    /// at the config's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let DatasetSource::Csv { path: csv, .. } = &mut cfg.dataset {
            if csv.is_relative() {
                if let Some(dir) = path.parent() {
                    *csv = dir.join(&*csv);
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn n_train(&self) -> Option<usize> {
        match self.dataset {
            DatasetSource::Toy { n_train, .. } | DatasetSource::Expansion { n_train, .. } => Some(n_train),
            DatasetSource::Csv { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
        self.kernel.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.estimators.is_empty() {
            return bad("at least one estimator is required");
        }
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty");
        }
        if self.m == 0 {
            return bad("m must be positive");
        }
        if !(self.voronoi_alpha > 0.0 && self.voronoi_alpha.is_finite()) {
            return bad("voronoi_alpha must be positive");
        }
        if self.subsample_cap == 0 {
            return bad("subsample_cap must be positive");
        }
        match &self.sweep {
            Sweep::None => {}
            Sweep::M { values } | Sweep::N { values } => {
                if values.is_empty() || values.contains(&0) {
                    return bad("sweep values must be nonempty and positive");
                }
            }
            Sweep::Alpha { values } => {
                if values.is_empty() || values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return bad("sweep values must be nonempty and positive");
                }
            }
        }
        match self.lambda {
            LambdaChoice::Fixed { lambda } if !(lambda > 0.0 && lambda.is_finite()) => {
                return bad("fixed lambda must be positive")
            }
            LambdaChoice::RankOverN { rank } if !(rank > 0.0 && rank.is_finite()) => {
                return bad("rank must be positive")
            }
            _ => {}
        }
        match &self.dataset {
            DatasetSource::Toy { n_train, n_test, noise_level, .. } => {
                if *n_train == 0 || *n_test == 0 {
                    return bad("n_train and n_test must be positive");
                }
                if noise_level.is_some_and(|v| !(v >= 0.0 && v.is_finite())) {
                    return bad("noise_level must be >= 0");
                }
            }
            DatasetSource::Expansion {
                kernel,
                dim,
                n_centers,
                noise_var,
                n_train,
                n_test,
                ..
            } => {
                kernel.validate().map_err(|e| CliError::Config(e.to_string()))?;
                if *dim == 0 || *n_centers == 0 || *n_train == 0 || *n_test == 0 {
                    return bad("dim, n_centers, n_train and n_test must be positive");
                }
                if !(*noise_var >= 0.0 && noise_var.is_finite()) {
                    return bad("noise_var must be >= 0");
                }
            }
            DatasetSource::Csv { test_fraction, .. } => {
                if !(*test_fraction > 0.0 && *test_fraction < 1.0) {
                    return bad("test_fraction must lie in (0, 1)");
                }
                if self.score_against == ScoreTarget::FStar {
                    return bad("score_against f_star needs a synthetic dataset");
                }
            }
        }
        if self.diagnose.m_values.is_empty() || self.diagnose.m_values.contains(&0) {
            return bad("diagnose.m_values must be nonempty and positive");
        }
        if let Some(d) = &self.decompose {
            if d.n_test == 0 || d.n_repeats < 2 {
                return bad("decompose needs n_test > 0 and n_repeats >= 2");
            }
            if d.lambda.is_some_and(|v| !(v > 0.0)) || d.lambda_bar.is_some_and(|v| !(v >= 0.0)) {
                return bad("decompose lambda must be > 0 and lambda_bar >= 0");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "dataset": {"source": "toy", "task": "piecewise_constant", "n_train": 600, "n_test": 100},
        "kernel": {"family": "gaussian", "gamma": 0.1},
        "seeds": [0]
    }"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.lambda, LambdaChoice::OneOverN);
        assert_eq!(cfg.m, 3);
        assert_eq!(cfg.whole_n_cap, 20_000);
        assert_eq!(cfg.sweep, Sweep::None);
        assert_eq!(cfg.sweep.points(), vec![None]);
        assert_eq!(cfg.diagnose.m_values, (1..=8).collect::<Vec<_>>());
        assert_eq!(cfg.lambda.resolve(600), 1.0 / 600.0);
    }

    #[test]
    fn rejects_invalid_configs() {
        let cases = [
            MINIMAL.replace("\"seeds\": [0]", "\"seeds\": []"),
            MINIMAL.replace("\"seeds\": [0]", "\"seeds\": [0], \"estimators\": []"),
            MINIMAL.replace("\"seeds\": [0]", "\"seeds\": [0], \"sweep\": {\"axis\": \"m\", \"values\": [0, 2]}"),
            MINIMAL.replace("\"seeds\": [0]", "\"seeds\": [0], \"bogus\": 1"),
            MINIMAL.replace("piecewise_constant", "staircase"),
            MINIMAL.replace("0.1}", "-1.0}"),
        ];
        for c in cases {
            assert!(matches!(ExperimentConfig::from_json(&c), Err(CliError::Config(_))), "{c}");
        }
    }

    #[test]
    fn parses_every_axis_and_rule() {
        let text = r#"{
            "dataset": {"source": "expansion", "kernel": {"family": "linear"}, "dim": 5, "n_centers": 30,
                        "expansion_seed": 1, "noise_var": 0.1, "n_train": 256, "n_test": 1000},
            "kernel": {"family": "linear"},
            "lambda": {"rule": "rank_over_n", "rank": 5},
            "estimators": ["dc_kmeans", "dc_voronoi"],
            "sweep": {"axis": "n", "values": [256, 512]},
            "score_against": "f_star",
            "seeds": [1, 2]
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.lambda.resolve(500), 0.01);
        assert_eq!(cfg.sweep.points(), vec![Some(256.0), Some(512.0)]);
        let alpha = text.replace(r#""axis": "n", "values": [256, 512]"#, r#""axis": "alpha", "values": [0.01, 0.04]"#);
        assert!(ExperimentConfig::from_json(&alpha).is_ok());
    }

    #[test]
    fn csv_cannot_score_against_f_star() {
        let text = r#"{
            "dataset": {"source": "csv", "path": "x.csv", "target": "y"},
            "kernel": {"family": "linear"}, "score_against": "f_star", "seeds": [0]
        }"#;
        assert!(ExperimentConfig::from_json(text).is_err());
    }
}
