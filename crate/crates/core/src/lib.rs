//! Partition-based divide-and-conquer kernel ridge regression.
//!
//! The input space is split into disjoint regions (k-means, kernel k-means,
//! or a Voronoi cover), an independent kernel ridge regression is fitted in
//! each region, and every query point is answered by the model of the region
//! it falls in. The crate also ships the baselines the estimator is compared
//! against (one KRR on all data, and averaging over random splits) and the
//! spectral diagnostics used to check when partitioning helps: effective
//! dimensionality, the partition goodness ratio, a covariance-error bound,
//! and a Monte-Carlo error decomposition on synthetic tasks.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod kernels;
pub mod linalg;
pub mod partition;
pub mod stats;

pub use error::{Error, Result};
pub use kernels::KernelSpec;
