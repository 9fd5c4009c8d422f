//! Autoregressive kernels for multivariate time series of varying length.
//!
//! The central object is the dissimilarity `φ` between two series, obtained by
//! integrating the likelihood of both series over a prior on vector
//! autoregressive models. `exp(-φ/t)` is used as a kernel. It is positive
//! definite at the bandwidths used in practice, but not at every `t`: the term
//! built on stacked windows can fail conditional negative definiteness, which
//! shows up as small negative eigenvalues once `t` is large
//! (see `tests/properties.rs`). The crate provides the dense kernel ([`ar`]), its
//! generalization to arbitrary base kernels with a low-rank approximation
//! ([`kernelized`]), two baseline kernels ([`baselines`]), a toy VAR generator
//! ([`toy`]) and an SVM model-selection pipeline ([`classify`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ar;
pub mod baselines;
pub mod classify;
pub mod error;
pub mod gram;
pub mod io;
pub mod kernelized;
pub mod linalg;
pub mod series;
pub mod toy;

pub use ar::{exp_kernel, hilbert_dist_sq, k_ar_gram, k_ar_variance, phi_ar, Ar, ArParams, EvalPath};
pub use baselines::{Bov, Ga};
pub use error::{Error, Result};
pub use gram::{cross_matrix, gram_matrix, median_bandwidth, KernelMatrix, KernelMeta, PairEvaluator};
pub use kernelized::{ApproxConfig, BaseKernel, KernelizedAr, KernelizedMode, KernelizedParams};
pub use series::{LabeledDataset, TimeSeries};
