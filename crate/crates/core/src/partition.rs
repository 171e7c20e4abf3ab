//! Disjoint partitions of the input space and the rules that route points to them.
//!
//! Four partitioners are provided: Lloyd k-means with k-means++ seeding,
//! kernel k-means (same seeding and iteration, distances via the kernel trick),
//! a uniform random split of the training indices, and a greedy radius-`r`
//! Voronoi cover. A fitted [`PartitionModel`] is immutable and serializable.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    Kmeans,
    KernelKmeans,
    Random,
    Voronoi,
    Single,
}

impl PartitionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PartitionKind::Kmeans => "kmeans",
            PartitionKind::KernelKmeans => "kernel_kmeans",
            PartitionKind::Random => "random",
            PartitionKind::Voronoi => "voronoi",
            PartitionKind::Single => "single",
        }
    }
}

/// How a point is mapped to its partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum AssignmentRule {
    Constant,
    /// Nearest centroid in Euclidean distance, ties to the lowest index.
    NearestCentroid { centroids: Vec<Vec<f64>> },
    /// Nearest cluster mean in the RKHS, ties to the lowest index.
    KernelMeans {
        kernel: KernelSpec,
        /// Training indices of the rows the clustering was run on.
        support_indices: Vec<usize>,
        support: Vec<Vec<f64>>,
        /// Per cluster, positions into `support`.
        members: Vec<Vec<usize>>,
        /// Per cluster, `|c|^-2 * sum_{j,l in c} K(x_j, x_l)`.
        within: Vec<f64>,
    },
    /// Random split; only training indices have a partition.
    TrainingOnly { split_seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionModel {
    pub kind: PartitionKind,
    pub m: usize,
    pub rule: AssignmentRule,
    /// Partition index of every training point.
    pub train_assignments: Vec<usize>,
}

/// Per-partition counts and empirical masses `n_i / n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionStats {
    pub counts: Vec<usize>,
    pub masses: Vec<f64>,
}

impl PartitionModel {
    /// The trivial partition: everything in partition 0.
    pub fn single(n: usize) -> Self {
        Self {
            kind: PartitionKind::Single,
            m: 1,
            rule: AssignmentRule::Constant,
            train_assignments: vec![0; n],
        }
    }

    /// Nearest-centroid partition with caller-supplied centroids, applied to `x`.
    pub fn from_centroids(kind: PartitionKind, centroids: Vec<Vec<f64>>, x: ArrayView2<f64>) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::input("at least one centroid is required"));
        }
        if centroids.iter().any(|c| c.len() != x.ncols()) {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                got: centroids.iter().map(Vec::len).find(|&l| l != x.ncols()).unwrap_or(0),
            });
        }
        let m = centroids.len();
        let train_assignments = x.rows().into_iter().map(|r| nearest_centroid(&centroids, r)).collect();
        Ok(Self {
            kind,
            m,
            rule: AssignmentRule::NearestCentroid { centroids },
            train_assignments,
        })
    }

    pub fn n_train(&self) -> usize {
        self.train_assignments.len()
    }

    /// The same routing rule applied to a new training set.
    pub fn rebind(&self, x: ArrayView2<f64>) -> Result<Self> {
        let train_assignments = match &self.rule {
            AssignmentRule::Constant => vec![0; x.nrows()],
            AssignmentRule::TrainingOnly { .. } => {
                return Err(Error::UnsupportedAssignment {
                    kind: self.kind.as_str(),
                })
            }
            _ => self.assign_rows(x)?,
        };
        Ok(Self {
            train_assignments,
            ..self.clone()
        })
    }

    pub fn dim(&self) -> Option<usize> {
        match &self.rule {
            AssignmentRule::NearestCentroid { centroids } => centroids.first().map(Vec::len),
            AssignmentRule::KernelMeans { support, .. } => support.first().map(Vec::len),
            _ => None,
        }
    }

    /// Partition of an arbitrary point.
    pub fn assign(&self, x: ArrayView1<f64>) -> Result<usize> {
        if let Some(d) = self.dim() {
            if x.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: x.len() });
            }
        }
        match &self.rule {
            AssignmentRule::Constant => Ok(0),
            AssignmentRule::NearestCentroid { centroids } => Ok(nearest_centroid(centroids, x)),
            AssignmentRule::KernelMeans {
                kernel,
                support,
                members,
                within,
                ..
            } => Ok(nearest_kernel_mean(kernel, support, members, within, x)),
            AssignmentRule::TrainingOnly { .. } => Err(Error::UnsupportedAssignment {
                kind: self.kind.as_str(),
            }),
        }
    }

    pub fn assign_rows(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        x.rows().into_iter().map(|r| self.assign(r)).collect()
    }

    /// Training indices of each partition, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.m];
        for (i, &p) in self.train_assignments.iter().enumerate() {
            out[p].push(i);
        }
        out
    }

    pub fn stats(&self) -> PartitionStats {
        let mut counts = vec![0usize; self.m];
        for &p in &self.train_assignments {
            counts[p] += 1;
        }
        let n = self.n_train().max(1) as f64;
        let masses = counts.iter().map(|&c| c as f64 / n).collect();
        PartitionStats { counts, masses }
    }

    /// Checks the structural invariants (coverage, index range, single-kind shape).
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::input("partition has m = 0"));
        }
        if let Some(bad) = self.train_assignments.iter().find(|&&p| p >= self.m) {
            return Err(Error::input(format!("assignment {bad} out of range for m = {}", self.m)));
        }
        if self.kind == PartitionKind::Single && (self.m != 1 || self.rule != AssignmentRule::Constant) {
            return Err(Error::input("single partition must have m = 1 and a constant rule"));
        }
        match &self.rule {
            AssignmentRule::NearestCentroid { centroids } if centroids.len() != self.m => {
                Err(Error::input("centroid count differs from m"))
            }
            AssignmentRule::KernelMeans { members, within, .. } if members.len() != self.m || within.len() != self.m => {
                Err(Error::input("kernel cluster count differs from m"))
            }
            _ => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(s)?;
        model.validate()?;
        Ok(model)
    }
}

fn sq_dist(a: &[f64], b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn nearest_centroid(centroids: &[Vec<f64>], x: ArrayView1<f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = sq_dist(cen, x);
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

fn nearest_kernel_mean(
    kernel: &KernelSpec,
    support: &[Vec<f64>],
    members: &[Vec<usize>],
    within: &[f64],
    x: ArrayView1<f64>,
) -> usize {
    let kxx = kernel.self_eval(x);
    let mut best = (0, f64::INFINITY);
    for (c, mem) in members.iter().enumerate() {
        if mem.is_empty() {
            continue;
        }
        let cross: f64 = mem
            .iter()
            .map(|&j| kernel.eval_unchecked(ArrayView1::from(&support[j][..]), x))
            .sum();
        let d = kxx - 2.0 * cross / mem.len() as f64 + within[c];
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

/// A fitted clustering together with its objective after every assignment step.
#[derive(Debug, Clone)]
pub struct Clustering {
    pub model: PartitionModel,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub m: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
}

impl KMeansConfig {
    pub fn new(m: usize, seed: u64) -> Self {
        Self {
            m,
            seed,
            max_iter: 300,
            tol: 1e-10,
        }
    }
}

/// k-means++ seeding over `n` items given a squared-distance oracle.
fn seed_plus_plus<R: Rng>(n: usize, m: usize, rng: &mut R, dist: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let first = rng.random_range(0..n);
    let mut chosen = vec![first];
    let mut nearest: Vec<f64> = (0..n).map(|i| dist(i, first)).collect();
    while chosen.len() < m {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // round-off can leave target just above the final partial sum
            pick.unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).expect("total > 0"))
        } else {
            // every remaining point coincides with a chosen one
            (0..n).find(|i| !chosen.contains(i)).expect("m <= n")
        };
        chosen.push(next);
        for (i, slot) in nearest.iter_mut().enumerate() {
            let d = dist(i, next);
            if d < *slot {
                *slot = d;
            }
        }
    }
    chosen
}

/// Lloyd's algorithm from k-means++ seeding.
///
/// Empty clusters are re-seeded at the point farthest from its own centroid.
/// `objective_trace[k]` is the within-cluster sum of squares right after the
/// k-th assignment step, which is non-increasing.
pub fn kmeans_fit(x: ArrayView2<f64>, cfg: &KMeansConfig) -> Result<Clustering> {
    let (n, d) = x.dim();
    if cfg.m == 0 || cfg.m > n {
        return Err(Error::input(format!("k-means needs 1 <= m <= n, got m = {} with n = {n}", cfg.m)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let row = |i: usize| x.row(i);
    let seeds = seed_plus_plus(n, cfg.m, &mut rng, |i, j| {
        row(i).iter().zip(row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum()
    });
    let mut centroids: Vec<Vec<f64>> = seeds.iter().map(|&i| x.row(i).to_vec()).collect();
    let mut trace = Vec::new();
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut iterations = 0;

    while iterations < cfg.max_iter.max(1) {
        iterations += 1;
        for i in 0..n {
            let (c, dist) = nearest_with_dist(&centroids, x.row(i));
            labels[i] = c;
            dists[i] = dist;
        }
        trace.push(dists.iter().sum());
        repair_empty(&mut labels, &mut dists, cfg.m);

        let mut next = vec![vec![0.0; d]; cfg.m];
        let mut counts = vec![0usize; cfg.m];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (acc, v) in next[labels[i]].iter_mut().zip(x.row(i)) {
                *acc += v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..cfg.m {
            for v in next[c].iter_mut() {
                *v /= counts[c] as f64;
            }
            shift = shift.max(sq_dist(&next[c], ArrayView1::from(&centroids[c][..])).sqrt());
        }
        centroids = next;
        if shift <= cfg.tol {
            break;
        }
    }
    let model = PartitionModel::from_centroids(PartitionKind::Kmeans, centroids, x)?;
    Ok(Clustering {
        model,
        objective_trace: trace,
        iterations,
    })
}

fn nearest_with_dist(centroids: &[Vec<f64>], x: ArrayView1<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = sq_dist(cen, x);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Moves the farthest point (from a cluster that keeps at least one member)
/// into each empty cluster. `dists` holds each point's distance to its center.
fn repair_empty(labels: &mut [usize], dists: &mut [f64], m: usize) {
    let mut counts = vec![0usize; m];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for c in 0..m {
        if counts[c] > 0 {
            continue;
        }
        let donor = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
            .expect("m <= n guarantees a cluster with two members");
        counts[labels[donor]] -= 1;
        labels[donor] = c;
        dists[donor] = 0.0;
        counts[c] = 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelKMeansConfig {
    pub m: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Clustering runs on at most this many uniformly sub-sampled rows.
    pub subsample_cap: usize,
}

impl KernelKMeansConfig {
    pub fn new(m: usize, seed: u64) -> Self {
        Self {
            m,
            seed,
            max_iter: 300,
            subsample_cap: 10_000,
        }
    }
}

/// Kernel k-means: Lloyd iterations in the RKHS, evaluated with the kernel trick.
///
/// Runs on `min(n, subsample_cap)` rows; the remaining rows (and any future
/// point) go to the cluster mean at minimal RKHS distance
/// `K(x,x) - 2/|c| sum_j K(x,x_j) + 1/|c|^2 sum_{j,l} K(x_j,x_l)`.
/// With a linear kernel and the same seed this reproduces [`kmeans_fit`]
/// (run with `tol = 0`).
pub fn kernel_kmeans_fit(spec: &KernelSpec, x: ArrayView2<f64>, cfg: &KernelKMeansConfig) -> Result<Clustering> {
    spec.validate()?;
    let n = x.nrows();
    let n_s = n.min(cfg.subsample_cap);
    if cfg.m == 0 || cfg.m > n_s {
        return Err(Error::input(format!(
            "kernel k-means needs 1 <= m <= {n_s} (sub-sample size), got m = {}",
            cfg.m
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let support_indices: Vec<usize> = if n > n_s {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        idx.truncate(n_s);
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let xs = x.select(Axis(0), &support_indices);
    let g = spec.gram(xs.view())?;
    let dist = |i: usize, j: usize| g[[i, i]] - 2.0 * g[[i, j]] + g[[j, j]];
    let seeds = seed_plus_plus(n_s, cfg.m, &mut rng, dist);

    let mut members: Vec<Vec<usize>> = seeds.iter().map(|&s| vec![s]).collect();
    let mut labels = vec![0usize; n_s];
    let mut dists = vec![0.0; n_s];
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < cfg.max_iter.max(1) {
        iterations += 1;
        let within = within_terms(&g, &members);
        let mut sums = vec![0.0; cfg.m];
        for i in 0..n_s {
            for (c, mem) in members.iter().enumerate() {
                sums[c] = mem.iter().map(|&j| g[[i, j]]).sum();
            }
            let mut best = (0, f64::INFINITY);
            for c in 0..cfg.m {
                if members[c].is_empty() {
                    continue;
                }
                let d = g[[i, i]] - 2.0 * sums[c] / members[c].len() as f64 + within[c];
                if d < best.1 {
                    best = (c, d);
                }
            }
            labels[i] = best.0;
            dists[i] = best.1.max(0.0);
        }
        trace.push(dists.iter().sum());
        repair_empty(&mut labels, &mut dists, cfg.m);
        let mut next = vec![Vec::new(); cfg.m];
        for (i, &l) in labels.iter().enumerate() {
            next[l].push(i);
        }
        let converged = next == members;
        members = next;
        if converged {
            break;
        }
    }

    let within = within_terms(&g, &members);
    let support: Vec<Vec<f64>> = xs.rows().into_iter().map(|r| r.to_vec()).collect();
    let rule = AssignmentRule::KernelMeans {
        kernel: *spec,
        support_indices,
        support,
        members,
        within,
    };
    let mut model = PartitionModel {
        kind: PartitionKind::KernelKmeans,
        m: cfg.m,
        rule,
        train_assignments: Vec::new(),
    };
    model.train_assignments = model.assign_rows(x)?;
    Ok(Clustering {
        model,
        objective_trace: trace,
        iterations,
    })
}

fn within_terms(g: &Array2<f64>, members: &[Vec<usize>]) -> Vec<f64> {
    members
        .iter()
        .map(|mem| {
            if mem.is_empty() {
                return 0.0;
            }
            let s: f64 = mem.iter().map(|&j| mem.iter().map(|&l| g[[j, l]]).sum::<f64>()).sum();
            s / (mem.len() * mem.len()) as f64
        })
        .collect()
}

/// Uniform random split of `0..n` into `m` groups whose sizes differ by at most one.
pub fn random_split(n: usize, m: usize, seed: u64) -> Result<PartitionModel> {
    if m == 0 || m > n {
        return Err(Error::input(format!("random split needs 1 <= m <= n, got m = {m} with n = {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train_assignments = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        train_assignments[i] = pos * m / n;
    }
    Ok(PartitionModel {
        kind: PartitionKind::Random,
        m,
        rule: AssignmentRule::TrainingOnly { split_seed: seed },
        train_assignments,
    })
}

/// Rows beyond which the diameter is estimated on a sub-sample.
pub const VORONOI_DIAMETER_CAP: usize = 5000;

/// Greedy Voronoi cover with radius `alpha` times the largest pairwise distance.
///
/// Points are scanned in index order and a new center is opened at any point
/// farther than the radius from every existing center; each point then joins
/// its nearest center. The number of partitions is an outcome.
pub fn voronoi_fit(x: ArrayView2<f64>, alpha: f64) -> Result<PartitionModel> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::input(format!("voronoi alpha must lie in (0, 1], got {alpha}")));
    }
    let n = x.nrows();
    if n == 0 {
        return Err(Error::input("voronoi cover needs at least one point"));
    }
    let radius = alpha * max_pairwise_distance(x);
    let r2 = radius * radius;
    let mut centers: Vec<Vec<f64>> = Vec::new();
    for row in x.rows() {
        if centers.iter().all(|c| sq_dist(c, row) > r2) {
            centers.push(row.to_vec());
        }
    }
    PartitionModel::from_centroids(PartitionKind::Voronoi, centers, x)
}

fn max_pairwise_distance(x: ArrayView2<f64>) -> f64 {
    let n = x.nrows();
    let idx: Vec<usize> = if n <= VORONOI_DIAMETER_CAP {
        (0..n).collect()
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(0));
        idx.truncate(VORONOI_DIAMETER_CAP);
        idx
    };
    let mut best: f64 = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        let xi = x.row(i);
        for &j in &idx[a + 1..] {
            let d: f64 = xi.iter().zip(x.row(j)).map(|(p, q)| (p - q) * (p - q)).sum();
            best = best.max(d);
        }
    }
    best.sqrt()
}
