//! Kernel ridge regression estimators.
//!
//! * [`fit_krr`] / [`fit_whole`]: one KRR on all the data,
//!   `alpha = (G + n lambda I)^-1 y`.
//! * [`fit_dc`]: one KRR per partition, each point answered by the model of
//!   the partition it is routed to.
//! * [`fit_random_avg`]: KRR on each group of a uniform random split,
//!   predictions averaged over groups.
//!
//! Voronoi-partitioned KRR is [`fit_dc`] over a [`voronoi_fit`](crate::partition::voronoi_fit) partition.

use ndarray::{s, Array1, ArrayView1, ArrayView2, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::linalg::{solve_spd_vec, SpdSolveConfig};
use crate::partition::{random_split, PartitionKind, PartitionModel};

/// Rows of the cross-kernel matrix materialized at once during prediction.
const PREDICT_CHUNK: usize = 1024;

/// A KRR fit on one block of data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "LocalEnvelope", try_from = "LocalEnvelope")]
pub struct LocalKrrModel {
    pub spec: KernelSpec,
    pub lambda: f64,
    pub support: Array2<f64>,
    pub alpha: Array1<f64>,
    /// Diagonal jitter the solver had to add on top of `n lambda`.
    pub jitter: f64,
}

#[derive(Serialize, Deserialize)]
struct LocalEnvelope {
    kernel: KernelSpec,
    lambda: f64,
    support: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    #[serde(default)]
    jitter: f64,
}

impl From<LocalKrrModel> for LocalEnvelope {
    fn from(m: LocalKrrModel) -> Self {
        LocalEnvelope {
            kernel: m.spec,
            lambda: m.lambda,
            support: m.support.rows().into_iter().map(|r| r.to_vec()).collect(),
            alpha: m.alpha.to_vec(),
            jitter: m.jitter,
        }
    }
}

impl TryFrom<LocalEnvelope> for LocalKrrModel {
    type Error = Error;

    fn try_from(e: LocalEnvelope) -> Result<Self> {
        let n = e.support.len();
        let d = e.support.first().map_or(0, Vec::len);
        if e.alpha.len() != n || e.support.iter().any(|r| r.len() != d) {
            return Err(Error::input("local model support rows and alpha disagree"));
        }
        let support = Array2::from_shape_vec((n, d), e.support.into_iter().flatten().collect())
            .map_err(|err| Error::input(err.to_string()))?;
        Ok(LocalKrrModel {
            spec: e.kernel,
            lambda: e.lambda,
            support,
            alpha: Array1::from(e.alpha),
            jitter: e.jitter,
        })
    }
}

impl LocalKrrModel {
    pub fn n_support(&self) -> usize {
        self.support.nrows()
    }

    /// `prediction = cross(spec, support, x_test) . alpha`
    pub fn predict(&self, x_test: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x_test.ncols() != self.support.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.support.ncols(),
                got: x_test.ncols(),
            });
        }
        let mut out = Array1::zeros(x_test.nrows());
        for start in (0..x_test.nrows()).step_by(PREDICT_CHUNK) {
            let end = (start + PREDICT_CHUNK).min(x_test.nrows());
            let k = self.spec.cross(self.support.view(), x_test.slice(s![start..end, ..]))?;
            out.slice_mut(s![start..end]).assign(&k.dot(&self.alpha));
        }
        Ok(out)
    }

    pub fn predict_one(&self, x: ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.support.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.support.ncols(),
                got: x.len(),
            });
        }
        Ok(self
            .support
            .rows()
            .into_iter()
            .zip(self.alpha.iter())
            .map(|(r, a)| a * self.spec.eval_unchecked(r, x))
            .sum())
    }

    /// `alpha^T G alpha`, the squared RKHS norm of the fitted function.
    pub fn rkhs_norm_sq(&self) -> Result<f64> {
        let g = self.spec.gram(self.support.view())?;
        Ok(self.alpha.dot(&g.dot(&self.alpha)))
    }
}

fn check_xy(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if x.nrows() == 0 {
        return Err(Error::input("cannot fit on zero samples"));
    }
    Ok(())
}

/// Solves `(G + n lambda I) alpha = y`.
pub fn fit_krr(spec: &KernelSpec, x: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64) -> Result<LocalKrrModel> {
    fit_krr_with(spec, x, y, lambda, &SpdSolveConfig::default())
}

pub fn fit_krr_with(
    spec: &KernelSpec,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    lambda: f64,
    solver: &SpdSolveConfig,
) -> Result<LocalKrrModel> {
    spec.validate()?;
    check_xy(x, y)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::input(format!("lambda must be positive, got {lambda}")));
    }
    let n = x.nrows();
    let mut g = spec.gram(x)?;
    let ridge = n as f64 * lambda;
    g.diag_mut().mapv_inplace(|v| v + ridge);
    let (alpha, jitter) = solve_spd_vec(g.view(), y.as_slice().unwrap_or(&y.to_vec()), solver)?;
    Ok(LocalKrrModel {
        spec: *spec,
        lambda,
        support: x.to_owned(),
        alpha,
        jitter,
    })
}

/// KRR on the entire training set.
pub fn fit_whole(spec: &KernelSpec, x: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64) -> Result<LocalKrrModel> {
    fit_krr(spec, x, y, lambda)
}

/// How the regularization penalty of each local problem is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LambdaRule {
    Fixed { lambda: f64 },
    /// `lambda = 1 / n` with `n` the total training size (not the partition size).
    OneOverTotalN,
    PerPartition { lambdas: Vec<f64> },
}

impl LambdaRule {
    pub fn resolve(&self, partition: usize, n_total: usize) -> Result<f64> {
        match self {
            LambdaRule::Fixed { lambda } => Ok(*lambda),
            LambdaRule::OneOverTotalN => Ok(1.0 / n_total as f64),
            LambdaRule::PerPartition { lambdas } => lambdas
                .get(partition)
                .copied()
                .ok_or_else(|| Error::input(format!("no lambda given for partition {partition}"))),
        }
    }
}

/// Divide-and-conquer model: one local KRR per nonempty partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcModel {
    pub kernel: KernelSpec,
    pub lambda: LambdaRule,
    pub partition: PartitionModel,
    /// `None` marks an empty partition, answered with `fallback`.
    pub locals: Vec<Option<LocalKrrModel>>,
    /// Mean training response.
    pub fallback: f64,
}

/// Fits a local KRR on each partition's training rows.
pub fn fit_dc(
    spec: &KernelSpec,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    partition: &PartitionModel,
    lambda: &LambdaRule,
) -> Result<DcModel> {
    spec.validate()?;
    check_xy(x, y)?;
    let n = x.nrows();
    if partition.n_train() != n {
        return Err(Error::input(format!(
            "partition was fitted on {} points but {n} were given",
            partition.n_train()
        )));
    }
    partition.validate()?;
    let members = partition.members();
    if members.iter().all(Vec::is_empty) {
        return Err(Error::input("every partition is empty"));
    }
    let locals = members
        .par_iter()
        .enumerate()
        .map(|(i, idx)| {
            if idx.is_empty() {
                return Ok(None);
            }
            let lam = lambda.resolve(i, n)?;
            let xi = x.select(Axis(0), idx);
            let yi = y.select(Axis(0), idx);
            fit_krr(spec, xi.view(), yi.view(), lam).map(Some)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DcModel {
        kernel: *spec,
        lambda: lambda.clone(),
        partition: partition.clone(),
        locals,
        fallback: y.mean().unwrap_or(0.0),
    })
}

impl DcModel {
    pub fn m(&self) -> usize {
        self.partition.m
    }

    /// Routes each row to its partition and predicts with that partition's model.
    pub fn predict(&self, x_test: ArrayView2<f64>) -> Result<Array1<f64>> {
        let routes = self.partition.assign_rows(x_test)?;
        let mut groups = vec![Vec::new(); self.m()];
        for (row, &p) in routes.iter().enumerate() {
            groups[p].push(row);
        }
        let mut out = Array1::from_elem(x_test.nrows(), self.fallback);
        for (p, rows) in groups.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            if let Some(local) = &self.locals[p] {
                let pred = local.predict(x_test.select(Axis(0), rows).view())?;
                for (&r, v) in rows.iter().zip(pred.iter()) {
                    out[r] = *v;
                }
            }
        }
        Ok(out)
    }

    pub fn predict_one(&self, x: ArrayView1<f64>) -> Result<f64> {
        let p = self.partition.assign(x)?;
        match &self.locals[p] {
            Some(local) => local.predict_one(x),
            None => Ok(self.fallback),
        }
    }
}

/// Averaging estimator over a uniform random split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvgModel {
    pub kernel: KernelSpec,
    pub lambda: f64,
    pub partition: PartitionModel,
    pub groups: Vec<LocalKrrModel>,
}

/// KRR on each of `m` random groups, every group with the same `lambda`
/// (its ridge term uses the group's own size).
pub fn fit_random_avg(
    spec: &KernelSpec,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    m: usize,
    lambda: f64,
    seed: u64,
) -> Result<AvgModel> {
    check_xy(x, y)?;
    let partition = random_split(x.nrows(), m, seed)?;
    let groups = partition
        .members()
        .par_iter()
        .map(|idx| {
            let xi = x.select(Axis(0), idx);
            let yi = y.select(Axis(0), idx);
            fit_krr(spec, xi.view(), yi.view(), lambda)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AvgModel {
        kernel: *spec,
        lambda,
        partition,
        groups,
    })
}

impl AvgModel {
    pub fn predict(&self, x_test: ArrayView2<f64>) -> Result<Array1<f64>> {
        let mut acc = Array1::zeros(x_test.nrows());
        for g in &self.groups {
            acc += &g.predict(x_test)?;
        }
        Ok(acc / self.groups.len() as f64)
    }
}

/// Any fitted estimator, serialized as a JSON envelope tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SavedModel {
    Whole(LocalKrrModel),
    Dc(DcModel),
    RandomAvg(AvgModel),
}

impl SavedModel {
    pub fn predict(&self, x_test: ArrayView2<f64>) -> Result<Array1<f64>> {
        match self {
            SavedModel::Whole(m) => m.predict(x_test),
            SavedModel::Dc(m) => m.predict(x_test),
            SavedModel::RandomAvg(m) => m.predict(x_test),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(s)?;
        match &model {
            SavedModel::Dc(dc) => {
                dc.partition.validate()?;
                if dc.locals.len() != dc.partition.m {
                    return Err(Error::input("local model count differs from partition count"));
                }
            }
            SavedModel::RandomAvg(avg) => {
                if avg.partition.kind != PartitionKind::Random || avg.groups.len() != avg.partition.m {
                    return Err(Error::input("averaging model needs one group per random split"));
                }
            }
            SavedModel::Whole(_) => {}
        }
        Ok(model)
    }
}

/// Root mean squared difference.
pub fn rmse(pred: ArrayView1<f64>, truth: ArrayView1<f64>) -> Result<f64> {
    Ok(mse(pred, truth)?.sqrt())
}

pub fn mse(pred: ArrayView1<f64>, truth: ArrayView1<f64>) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::input("rmse of empty vectors"));
    }
    let ss: f64 = pred.iter().zip(truth.iter()).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(ss / pred.len() as f64)
}
