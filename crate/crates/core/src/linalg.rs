//! Dense symmetric solves and eigendecomposition.
//!
//! Everything here works on small-to-medium dense matrices (a few thousand
//! rows at most). [`solve_spd`] is a Cholesky solve with an escalating
//! diagonal jitter; [`eig_sym`] is Householder tridiagonalization followed by
//! implicit QL iterations (the EISPACK `tred2`/`tql2` pair).

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Jitter escalation settings for [`solve_spd`].
///
/// Attempts run at `jitter_initial` first. If that fails, the ladder starts
/// at `jitter_max * jitter_growth^-6` (or `jitter_initial * jitter_growth`,
/// whichever is larger) and multiplies by `jitter_growth` until the
/// factorization succeeds, finishing with a last attempt at exactly
/// `jitter_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdSolveConfig {
    pub jitter_initial: f64,
    /// `None` means `1e-6` times the mean diagonal of the matrix being solved.
    pub jitter_max: Option<f64>,
    pub jitter_growth: f64,
}

impl Default for SpdSolveConfig {
    fn default() -> Self {
        Self {
            jitter_initial: 0.0,
            jitter_max: None,
            jitter_growth: 10.0,
        }
    }
}

impl SpdSolveConfig {
    fn resolved_max(&self, a: ArrayView2<f64>) -> f64 {
        self.jitter_max.unwrap_or_else(|| {
            let n = a.nrows().max(1) as f64;
            1e-6 * a.diag().iter().map(|v| v.abs()).sum::<f64>() / n
        })
    }

    fn ladder(&self, jitter_max: f64) -> Result<Vec<f64>> {
        if !(self.jitter_initial >= 0.0) || !(jitter_max >= 0.0) {
            return Err(Error::input("jitter values must be nonnegative"));
        }
        if !(self.jitter_growth > 1.0) {
            return Err(Error::input("jitter_growth must exceed 1"));
        }
        let mut steps = vec![self.jitter_initial];
        if jitter_max <= self.jitter_initial {
            return Ok(steps);
        }
        let mut delta = (jitter_max * self.jitter_growth.powi(-6)).max(self.jitter_initial * self.jitter_growth);
        while delta < jitter_max {
            steps.push(delta);
            delta *= self.jitter_growth;
        }
        steps.push(jitter_max);
        Ok(steps)
    }
}

/// Result of [`solve_spd`]: the solution and the jitter actually added.
#[derive(Debug, Clone)]
pub struct SpdSolution {
    pub x: Array2<f64>,
    pub jitter: f64,
}

/// Lower-triangular Cholesky factor, stored row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors `a + shift * I`. On failure returns the index of the first
    /// non-positive pivot.
    pub fn factor_shifted(a: ArrayView2<f64>, shift: f64) -> std::result::Result<Self, usize> {
        let n = a.nrows();
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                let mut s = a[[i, j]] - dot(ri, rj);
                if i == j {
                    s += shift;
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(i);
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L L^T x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            b[i] = (b[i] - dot(row, &b[..i])) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// `log det(L L^T)`.
    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| 2.0 * self.l[i * self.n + i].ln()).sum()
    }
}

/// Four-accumulator dot product; the unrolling lets the compiler vectorize.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..n {
        tail += a[k] * b[k];
    }
    (s0 + s1) + (s2 + s3) + tail
}

/// Factors `a + delta I` for the smallest `delta` on the jitter ladder that works.
pub fn cholesky_with_jitter(a: ArrayView2<f64>, cfg: &SpdSolveConfig) -> Result<(Cholesky, f64)> {
    if a.nrows() != a.ncols() {
        return Err(Error::input(format!("matrix is {}x{}, not square", a.nrows(), a.ncols())));
    }
    let jitter_max = cfg.resolved_max(a);
    let mut last = (0, 0.0);
    for delta in cfg.ladder(jitter_max)? {
        match Cholesky::factor_shifted(a, delta) {
            Ok(ch) => {
                if delta > 0.0 {
                    log::debug!("cholesky needed jitter {delta:e} (n = {})", a.nrows());
                }
                return Ok((ch, delta));
            }
            Err(pivot) => last = (pivot, delta),
        }
    }
    Err(Error::Singular {
        pivot: last.0,
        jitter: last.1,
    })
}

/// Solves `(a + delta I) x = b` for symmetric positive (semi)definite `a`.
pub fn solve_spd(a: ArrayView2<f64>, b: ArrayView2<f64>, cfg: &SpdSolveConfig) -> Result<SpdSolution> {
    if b.nrows() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    let (ch, jitter) = cholesky_with_jitter(a, cfg)?;
    let mut x = Array2::<f64>::zeros(b.raw_dim());
    let mut col = vec![0.0; a.nrows()];
    for k in 0..b.ncols() {
        col.iter_mut().zip(b.column(k)).for_each(|(c, &v)| *c = v);
        ch.solve_in_place(&mut col);
        x.column_mut(k).iter_mut().zip(&col).for_each(|(o, &v)| *o = v);
    }
    Ok(SpdSolution { x, jitter })
}

/// Single right-hand-side convenience over [`solve_spd`].
pub fn solve_spd_vec(a: ArrayView2<f64>, b: &[f64], cfg: &SpdSolveConfig) -> Result<(Array1<f64>, f64)> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.len(),
        });
    }
    let (ch, jitter) = cholesky_with_jitter(a, cfg)?;
    let mut x = b.to_vec();
    ch.solve_in_place(&mut x);
    Ok((Array1::from(x), jitter))
}

/// Symmetric eigendecomposition with eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Array1<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: Array2<f64>,
}

const QL_MAX_ITER: usize = 60;

/// Eigenvalues (descending) and orthonormal eigenvectors of a symmetric matrix.
pub fn eig_sym(a: ArrayView2<f64>) -> Result<SymEigen> {
    let (values, vectors) = tridiagonal_ql(a, true)?;
    Ok(SymEigen {
        values,
        vectors: vectors.expect("vectors requested"),
    })
}

/// Eigenvalues only, descending; skips the eigenvector rotations.
pub fn eigvals_sym(a: ArrayView2<f64>) -> Result<Array1<f64>> {
    Ok(tridiagonal_ql(a, false)?.0)
}

/// Clamps round-off negatives to zero (spectral sums assume nonnegative values).
pub fn clamp_nonnegative(values: &mut [f64]) {
    for v in values.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn tridiagonal_ql(a: ArrayView2<f64>, want_vectors: bool) -> Result<(Array1<f64>, Option<Array2<f64>>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::input(format!("matrix is {}x{}, not square", n, a.ncols())));
    }
    if n == 0 {
        return Ok((Array1::zeros(0), want_vectors.then(|| Array2::zeros((0, 0)))));
    }
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e);
    // rotate rows of V^T so the inner loop of the QL sweep is contiguous
    let mut vt: Vec<Vec<f64>> = if want_vectors {
        (0..n).map(|j| (0..n).map(|k| v[k][j]).collect()).collect()
    } else {
        Vec::new()
    };
    drop(v);
    tql2(&mut vt, &mut d, &mut e, want_vectors)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].total_cmp(&d[i]));
    let values = Array1::from_iter(order.iter().map(|&i| d[i]));
    let vectors = want_vectors.then(|| Array2::from_shape_fn((n, n), |(r, c)| vt[order[c]][r]));
    Ok((values, vectors))
}

fn tred2(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[n - 1][j];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in j + 1..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }

    // accumulate the transformations
    for i in 0..n - 1 {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k][i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on the tridiagonal (d, e). `vt` holds V transposed.
fn tql2(vt: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64], want_vectors: bool) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_ITER {
                    return Err(Error::NoConvergence { iterations: QL_MAX_ITER });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if want_vectors {
                        let (lo, hi) = vt.split_at_mut(i + 1);
                        let (row_i, row_i1) = (&mut lo[i], &mut hi[0]);
                        for k in 0..n {
                            let h = row_i1[k];
                            row_i1[k] = s * row_i[k] + c * h;
                            row_i[k] = c * row_i[k] - s * h;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Greedy pivoted (incomplete) Cholesky of a kernel matrix, `G ~ L L^T`.
///
/// Pivots are chosen by largest residual diagonal and the factorization stops
/// once the residual trace falls below `tol * trace(G)`. The residual trace
/// bounds the nuclear norm of `G - L L^T`, so with `tol` near machine
/// precision the factor reproduces `G` to round-off.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    /// Training indices chosen as pivots, in selection order.
    pub pivots: Vec<usize>,
    /// `n x r` factor; row `j` is the feature vector of training point `j`.
    pub factor: Array2<f64>,
    /// Residual trace `trace(G - L L^T)` at termination.
    pub residual_trace: f64,
}

impl PivotedCholesky {
    /// `diag(i)` returns `G[i][i]`; `column(p, out)` writes `G[:, p]` into `out`.
    pub fn compute<D, C>(n: usize, diag: D, mut column: C, tol: f64, max_rank: usize) -> Self
    where
        D: Fn(usize) -> f64,
        C: FnMut(usize, &mut [f64]),
    {
        let mut residual: Vec<f64> = (0..n).map(&diag).collect();
        let trace: f64 = residual.iter().sum();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut pivots = Vec::new();
        let mut col = vec![0.0; n];
        let stop = tol * trace;
        loop {
            let res_trace: f64 = residual.iter().map(|r| r.max(0.0)).sum();
            if res_trace <= stop || pivots.len() >= max_rank.min(n) {
                break;
            }
            let (p, &piv) = residual
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("n > 0");
            if !(piv > 0.0) {
                break;
            }
            column(p, &mut col);
            for prev in &cols {
                let lp = prev[p];
                for (c, &v) in col.iter_mut().zip(prev.iter()) {
                    *c -= lp * v;
                }
            }
            let root = piv.sqrt();
            for c in col.iter_mut() {
                *c /= root;
            }
            for pv in &pivots {
                col[*pv] = 0.0;
            }
            col[p] = root;
            for (r, c) in residual.iter_mut().zip(&col) {
                *r -= c * c;
            }
            residual[p] = 0.0;
            pivots.push(p);
            cols.push(col.clone());
        }
        let r = pivots.len();
        let factor = Array2::from_shape_fn((n, r), |(i, k)| cols[k][i]);
        let residual_trace = residual.iter().map(|r| r.max(0.0)).sum();
        Self {
            pivots,
            factor,
            residual_trace,
        }
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// Feature vector of a new point from its kernel values against the pivots
    /// (`k_pivots[k] = K(x, x_{pivots[k]})`). Reproduces the factor's own rows
    /// for training points.
    pub fn features(&self, k_pivots: &[f64]) -> Vec<f64> {
        let r = self.rank();
        let mut out = vec![0.0; r];
        for k in 0..r {
            let pk = self.pivots[k];
            let mut s = k_pivots[k];
            for l in 0..k {
                s -= out[l] * self.factor[[pk, l]];
            }
            out[k] = s / self.factor[[pk, k]];
        }
        out
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Gauss-Jordan inverse with partial pivoting; independent of the Cholesky path.
    pub(crate) fn gauss_jordan_inverse(a: &Array2<f64>) -> Array2<f64> {
        let n = a.nrows();
        let mut aug = Array2::<f64>::zeros((n, 2 * n));
        for i in 0..n {
            for j in 0..n {
                aug[[i, j]] = a[[i, j]];
            }
            aug[[i, n + i]] = 1.0;
        }
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| aug[[i, col]].abs().total_cmp(&aug[[j, col]].abs()))
                .unwrap();
            for k in 0..2 * n {
                aug.swap([col, k], [piv, k]);
            }
            let p = aug[[col, col]];
            for k in 0..2 * n {
                aug[[col, k]] /= p;
            }
            for r in 0..n {
                if r != col {
                    let f = aug[[r, col]];
                    for k in 0..2 * n {
                        aug[[r, k]] -= f * aug[[col, k]];
                    }
                }
            }
        }
        Array2::from_shape_fn((n, n), |(i, j)| aug[[i, n + j]])
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
        let m = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
        m.t().dot(&m) + Array2::<f64>::eye(n)
    }

    #[test]
    fn identity_solve() {
        let a = Array2::<f64>::eye(3);
        let b = array![[1.0], [2.0], [3.0]];
        let sol = solve_spd(a.view(), b.view(), &SpdSolveConfig::default()).unwrap();
        assert_eq!(sol.x, b);
        assert_eq!(sol.jitter, 0.0);
    }

    #[test]
    fn diagonal_solve() {
        let a = array![[2.0, 0.0], [0.0, 4.0]];
        let (x, _) = solve_spd_vec(a.view(), &[2.0, 4.0], &SpdSolveConfig::default()).unwrap();
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn random_spd_matches_gauss_jordan() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let a = random_spd(&mut rng, 5);
            let b = Array2::from_shape_fn((5, 2), |_| rng.random_range(-3.0..3.0));
            let sol = solve_spd(a.view(), b.view(), &SpdSolveConfig::default()).unwrap();
            let oracle = gauss_jordan_inverse(&a).dot(&b);
            let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (x, o) in sol.x.iter().zip(oracle.iter()) {
                assert!((x - o).abs() <= 1e-10 * scale, "{x} vs {o}");
            }
        }
    }

    #[test]
    fn singular_matrix_escalates_then_fails() {
        // rank one: needs jitter
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        let sol = solve_spd(a.view(), array![[1.0], [1.0]].view(), &SpdSolveConfig::default()).unwrap();
        assert!(sol.jitter > 0.0);

        // indefinite: no jitter up to the cap can fix it
        let bad = array![[1.0, 0.0], [0.0, -1.0]];
        let err = solve_spd(bad.view(), array![[1.0], [1.0]].view(), &SpdSolveConfig::default()).unwrap_err();
        match err {
            Error::Singular { pivot, .. } => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ladder_shape() {
        let cfg = SpdSolveConfig::default();
        let steps = cfg.ladder(1e-6).unwrap();
        assert_eq!(steps[0], 0.0);
        assert_eq!(*steps.last().unwrap(), 1e-6);
        assert!(steps.windows(2).all(|w| w[0] < w[1]));
        let bad = SpdSolveConfig {
            jitter_growth: 1.0,
            ..cfg
        };
        assert!(bad.ladder(1.0).is_err());
    }

    #[test]
    fn solve_residual_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for n in [1, 4, 17, 40] {
            let a = random_spd(&mut rng, n);
            let b = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
            let sol = solve_spd(a.view(), b.view(), &SpdSolveConfig::default()).unwrap();
            let r = a.dot(&sol.x) - &b;
            let bmax = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(r.iter().all(|v| v.abs() <= 1e-8 * bmax));
        }
    }

    #[test]
    fn eig_examples() {
        let d = array![[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]];
        let e = eig_sym(d.view()).unwrap();
        assert_eq!(e.values.to_vec(), vec![3.0, 2.0, 1.0]);

        let two = array![[2.0, 1.0], [1.0, 2.0]];
        let e = eigvals_sym(two.view()).unwrap();
        assert!((e[0] - 3.0).abs() < 1e-14 && (e[1] - 1.0).abs() < 1e-14);
    }

    /// Real roots of the characteristic cubic of a symmetric 3x3 (trigonometric form).
    fn cubic_oracle(a: &Array2<f64>) -> Vec<f64> {
        let tr = a[[0, 0]] + a[[1, 1]] + a[[2, 2]];
        let q = tr / 3.0;
        let p1 = a[[0, 1]].powi(2) + a[[0, 2]].powi(2) + a[[1, 2]].powi(2);
        let p2 = (a[[0, 0]] - q).powi(2) + (a[[1, 1]] - q).powi(2) + (a[[2, 2]] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = (a - &(Array2::<f64>::eye(3) * q)) / p;
        let det_b = b[[0, 0]] * (b[[1, 1]] * b[[2, 2]] - b[[1, 2]] * b[[2, 1]])
            - b[[0, 1]] * (b[[1, 0]] * b[[2, 2]] - b[[1, 2]] * b[[2, 0]])
            + b[[0, 2]] * (b[[1, 0]] * b[[2, 1]] - b[[1, 1]] * b[[2, 0]]);
        let r = (det_b / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let e2 = 3.0 * q - e1 - e3;
        vec![e1, e2, e3]
    }

    #[test]
    fn random_3x3_matches_cubic_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let m = Array2::from_shape_fn((3, 3), |_| rng.random_range(-2.0..2.0));
            let a = (&m + &m.t()) * 0.5;
            let got = eig_sym(a.view()).unwrap().values;
            let want = cubic_oracle(&a);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-8, "{got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn eig_reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in [1, 2, 7, 30, 64] {
            let m = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
            let a = (&m + &m.t()) * 0.5;
            let e = eig_sym(a.view()).unwrap();
            let v = &e.vectors;
            let vtv = v.t().dot(v);
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((vtv[[i, j]] - want).abs() < 1e-8);
                }
            }
            let av = a.dot(v);
            let vl = v * &e.values;
            let amax = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for (x, y) in av.iter().zip(vl.iter()) {
                assert!((x - y).abs() <= 1e-8 * amax);
            }
            assert!(e.values.windows(2).into_iter().all(|w| w[0] >= w[1]));
            let trace: f64 = a.diag().sum();
            assert!((e.values.sum() - trace).abs() <= 1e-8 * trace.abs().max(1.0));
            let vals = eigvals_sym(a.view()).unwrap();
            for (x, y) in vals.iter().zip(e.values.iter()) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn pivoted_cholesky_recovers_low_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let f = Array2::from_shape_fn((30, 4), |_| rng.random_range(-1.0..1.0));
        let g = f.dot(&f.t());
        let pc = PivotedCholesky::compute(
            30,
            |i| g[[i, i]],
            |p, out| out.iter_mut().enumerate().for_each(|(i, o)| *o = g[[i, p]]),
            1e-13,
            30,
        );
        assert_eq!(pc.rank(), 4);
        let rec = pc.factor.dot(&pc.factor.t());
        for (x, y) in rec.iter().zip(g.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
        for j in [0, 7, 29] {
            let kp: Vec<f64> = pc.pivots.iter().map(|&p| g[[j, p]]).collect();
            let feat = pc.features(&kp);
            for k in 0..4 {
                assert!((feat[k] - pc.factor[[j, k]]).abs() < 1e-10);
            }
        }
    }
}
