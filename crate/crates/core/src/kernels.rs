//! Kernel functions and Gram / cross-kernel matrix construction.
//!
//! Three families are supported:
//!
//! * gaussian: `K(x, y) = exp(-gamma * ||x - y||^2)`
//! * polynomial: `K(x, y) = (offset + x . y)^degree`
//! * linear: `K(x, y) = x . y`
//!
//! Gram matrices are built from the upper triangle and mirrored, so they are
//! exactly symmetric regardless of floating point evaluation order.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_offset() -> f64 {
    1.0
}

/// Which kernel to use and its hyperparameters.
///
/// Serializes as a JSON object tagged by `family`, e.g.
/// `{"family":"gaussian","gamma":0.1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    Gaussian {
        gamma: f64,
    },
    Polynomial {
        degree: u32,
        #[serde(default = "default_offset")]
        offset: f64,
    },
    Linear,
}

impl KernelSpec {
    pub fn gaussian(gamma: f64) -> Result<Self> {
        let spec = KernelSpec::Gaussian { gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn polynomial(degree: u32, offset: f64) -> Result<Self> {
        let spec = KernelSpec::Polynomial { degree, offset };
        spec.validate()?;
        Ok(spec)
    }

    pub fn linear() -> Self {
        KernelSpec::Linear
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { gamma } if !(gamma > 0.0 && gamma.is_finite()) => Err(
                Error::input(format!("gaussian gamma must be positive, got {gamma}")),
            ),
            KernelSpec::Polynomial { degree, offset } => {
                if degree == 0 {
                    Err(Error::input("polynomial degree must be at least 1"))
                } else if !offset.is_finite() {
                    Err(Error::input("polynomial offset must be finite"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            KernelSpec::Gaussian { .. } => "gaussian",
            KernelSpec::Polynomial { .. } => "polynomial",
            KernelSpec::Linear => "linear",
        }
    }

    /// Rank of the kernel on inputs of dimension `dim`, when finite.
    ///
    /// Linear kernels have rank `dim`; a degree-`p` polynomial kernel with a
    /// nonzero offset spans all monomials of degree at most `p`, which gives
    /// `C(dim + p, p)`. The gaussian kernel has infinite rank.
    pub fn rank_hint(&self, dim: usize) -> Option<usize> {
        match *self {
            KernelSpec::Gaussian { .. } => None,
            KernelSpec::Linear => Some(dim),
            KernelSpec::Polynomial { degree, .. } => Some(binomial(dim + degree as usize, degree as usize)),
        }
    }

    /// `K(x, x)` without forming the difference vector.
    pub fn self_eval(&self, x: ArrayView1<f64>) -> f64 {
        match *self {
            KernelSpec::Gaussian { .. } => 1.0,
            _ => self.eval_unchecked(x, x),
        }
    }

    pub fn eval(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        Ok(self.eval_unchecked(x, y))
    }

    /// Evaluates the kernel; callers guarantee equal lengths.
    pub(crate) fn eval_unchecked(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        match *self {
            KernelSpec::Gaussian { gamma } => {
                let d2: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
            KernelSpec::Polynomial { degree, offset } => (offset + dot(x, y)).powi(degree as i32),
            KernelSpec::Linear => dot(x, y),
        }
    }

    /// Symmetric Gram matrix `G[i][j] = K(x_i, x_j)` over the rows of `x`.
    pub fn gram(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::input("gram matrix needs at least one row"));
        }
        let mut g = Array2::<f64>::zeros((n, n));
        // upper triangle, row-parallel; every entry depends only on its two rows
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let xi = x.row(i);
                (i..n).map(|j| self.eval_unchecked(xi, x.row(j))).collect()
            })
            .collect();
        for (i, row) in upper.into_iter().enumerate() {
            for (offset, v) in row.into_iter().enumerate() {
                let j = i + offset;
                g[[i, j]] = v;
                g[[j, i]] = v;
            }
        }
        Ok(g)
    }

    /// Cross-kernel matrix with entry `[i][j] = K(test_i, train_j)`.
    pub fn cross(&self, train: ArrayView2<f64>, test: ArrayView2<f64>) -> Result<Array2<f64>> {
        if train.ncols() != test.ncols() {
            return Err(Error::DimensionMismatch {
                expected: train.ncols(),
                got: test.ncols(),
            });
        }
        let (t, n) = (test.nrows(), train.nrows());
        let rows: Vec<Vec<f64>> = (0..t)
            .into_par_iter()
            .map(|i| {
                let xi = test.row(i);
                (0..n).map(|j| self.eval_unchecked(xi, train.row(j))).collect()
            })
            .collect();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Ok(Array2::from_shape_vec((t, n), flat).expect("shape matches row-major fill"))
    }
}

fn dot(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| a * b).sum()
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0))
    }

    fn all_specs() -> Vec<KernelSpec> {
        vec![
            KernelSpec::Gaussian { gamma: 0.7 },
            KernelSpec::Polynomial { degree: 3, offset: 1.0 },
            KernelSpec::Linear,
        ]
    }

    #[test]
    fn eval_examples() {
        let g = KernelSpec::gaussian(0.1).unwrap();
        let x = array![0.3, -1.2];
        assert_eq!(g.eval(x.view(), x.view()).unwrap(), 1.0);

        let p = KernelSpec::polynomial(2, 1.0).unwrap();
        assert_eq!(p.eval(array![1.0].view(), array![1.0].view()).unwrap(), 4.0);

        let g1 = KernelSpec::gaussian(1.0).unwrap();
        let v = g1.eval(array![0.0].view(), array![1.0].view()).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn eval_dimension_mismatch() {
        let err = KernelSpec::Linear
            .eval(array![1.0, 2.0].view(), array![1.0].view())
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(-1.0).is_err());
        assert!(KernelSpec::polynomial(0, 1.0).is_err());
    }

    #[test]
    fn gram_examples() {
        let g = KernelSpec::Gaussian { gamma: 0.1 };
        assert_eq!(g.gram(array![[3.0, 4.0]].view()).unwrap(), array![[1.0]]);

        let lin = KernelSpec::Linear.gram(array![[1.0], [2.0]].view()).unwrap();
        assert_eq!(lin, array![[1.0, 2.0], [2.0, 4.0]]);
    }

    #[test]
    fn gram_matches_eval_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 6, 3);
        for spec in all_specs() {
            let g = spec.gram(x.view()).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    assert_eq!(g[[i, j]], spec.eval(x.row(i), x.row(j)).unwrap());
                }
            }
        }
    }

    #[test]
    fn gaussian_gram_has_unit_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 20, 4);
        let g = KernelSpec::Gaussian { gamma: 2.5 }.gram(x.view()).unwrap();
        assert!(g.diag().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn cross_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let train = random_matrix(&mut rng, 5, 2);
        let test = random_matrix(&mut rng, 3, 2);
        for spec in all_specs() {
            assert_eq!(spec.cross(train.view(), train.view()).unwrap(), spec.gram(train.view()).unwrap());
            let c = spec.cross(train.view(), test.view()).unwrap();
            assert_eq!(c.dim(), (3, 5));
            for i in 0..3 {
                for j in 0..5 {
                    assert_eq!(c[[i, j]], spec.eval(test.row(i), train.row(j)).unwrap());
                }
            }
        }
        let one = KernelSpec::Linear
            .cross(array![[2.0]].view(), array![[3.0]].view())
            .unwrap();
        assert_eq!(one, array![[6.0]]);
        assert!(KernelSpec::Linear.cross(train.view(), array![[1.0]].view()).is_err());
    }

    #[test]
    fn rank_hints() {
        assert_eq!(KernelSpec::Linear.rank_hint(5), Some(5));
        assert_eq!(KernelSpec::Polynomial { degree: 2, offset: 1.0 }.rank_hint(1), Some(3));
        assert_eq!(KernelSpec::Polynomial { degree: 2, offset: 1.0 }.rank_hint(3), Some(10));
        assert_eq!(KernelSpec::Gaussian { gamma: 1.0 }.rank_hint(3), None);
    }

    #[test]
    fn json_shape() {
        let s = serde_json::to_string(&KernelSpec::Gaussian { gamma: 0.1 }).unwrap();
        assert_eq!(s, r#"{"family":"gaussian","gamma":0.1}"#);
        let p: KernelSpec = serde_json::from_str(r#"{"family":"polynomial","degree":2}"#).unwrap();
        assert_eq!(p, KernelSpec::Polynomial { degree: 2, offset: 1.0 });
        let l: KernelSpec = serde_json::from_str(r#"{"family":"linear"}"#).unwrap();
        assert_eq!(l, KernelSpec::Linear);
    }

    proptest::proptest! {
        #[test]
        fn eval_is_symmetric(xs in proptest::collection::vec(-5.0f64..5.0, 6), gamma in 0.01f64..3.0) {
            let (a, b) = xs.split_at(3);
            let a = ndarray::Array1::from(a.to_vec());
            let b = ndarray::Array1::from(b.to_vec());
            for spec in [KernelSpec::Gaussian { gamma }, KernelSpec::Polynomial { degree: 2, offset: 1.0 }, KernelSpec::Linear] {
                proptest::prop_assert_eq!(spec.eval(a.view(), b.view()).unwrap(), spec.eval(b.view(), a.view()).unwrap());
            }
            let g = KernelSpec::Gaussian { gamma }.eval(a.view(), b.view()).unwrap();
            proptest::prop_assert!(g > 0.0 && g <= 1.0);
            if a != b {
                // can still round to 1 for sub-epsilon distances; inputs here are well separated
                let d2: f64 = a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum();
                if gamma * d2 > 1e-12 {
                    proptest::prop_assert!(g < 1.0);
                }
            }
        }
    }
}
