use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::median;
use crate::series::LabeledDataset;

/// Smallest scale substituted when the median heuristic degenerates.
pub const SIGMA_SQ_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseKernel {
    /// `exp(-‖u-v‖² / (2σ²))`.
    Gaussian { sigma_sq: f64 },
    /// `⟨u, v⟩`.
    Linear,
}

/// What a base kernel is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    /// Flattened windows of `p` consecutive observations.
    Window(usize),
    /// Single observations.
    Point,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseKernelSpec {
    pub kernel: BaseKernel,
    pub arity: Arity,
}

impl BaseKernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BaseKernel::Gaussian { sigma_sq } if !(sigma_sq > 0.0 && sigma_sq.is_finite()) => Err(
                Error::InvalidParameter(format!("gaussian sigma^2 must be positive, got {sigma_sq}")),
            ),
            _ => Ok(()),
        }
    }

    #[inline]
    pub(crate) fn eval_unchecked<'a>(
        &self,
        u: impl Iterator<Item = &'a f64>,
        v: impl Iterator<Item = &'a f64>,
    ) -> f64 {
        match *self {
            BaseKernel::Gaussian { sigma_sq } => {
                let sq: f64 = u.zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq / (2.0 * sigma_sq)).exp()
            }
            BaseKernel::Linear => u.zip(v).map(|(a, b)| a * b).sum(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaseKernel::Gaussian { .. } => "gaussian",
            BaseKernel::Linear => "linear",
        }
    }
}

impl BaseKernelSpec {
    pub fn window(kernel: BaseKernel, p: usize) -> Self {
        Self { kernel, arity: Arity::Window(p) }
    }

    pub fn point(kernel: BaseKernel) -> Self {
        Self { kernel, arity: Arity::Point }
    }

    pub fn eval(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.kernel.validate()?;
        if u.len() != v.len() || u.is_empty() {
            return Err(Error::ShapeMismatch { expected: u.len(), got: v.len() });
        }
        if let Arity::Window(p) = self.arity {
            if p == 0 || !u.len().is_multiple_of(p) {
                return Err(Error::ShapeMismatch { expected: p, got: u.len() });
            }
        }
        Ok(self.kernel.eval_unchecked(u.iter(), v.iter()))
    }
}

/// Median of Euclidean distances between all distinct observation pairs pooled
/// from a seeded random subset of at most `sample_cap` series.
///
/// The median distance itself (not its square) is the returned scale.
pub fn median_sigma_sq(ds: &LabeledDataset, sample_cap: usize, seed: u64) -> Result<f64> {
    let mut order: Vec<usize> = (0..ds.len()).collect();
    if sample_cap < ds.len() {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order.truncate(sample_cap.max(1));
        order.sort_unstable();
    }
    let obs: Vec<_> = order
        .iter()
        .flat_map(|&i| ds.series()[i].values().column_iter())
        .collect();
    let mut dists = Vec::with_capacity(obs.len() * obs.len().saturating_sub(1) / 2);
    for i in 0..obs.len() {
        for j in i + 1..obs.len() {
            dists.push((obs[i] - obs[j]).norm());
        }
    }
    let m = median(&mut dists).ok_or(Error::DegenerateScale)?;
    if m <= 0.0 {
        return Err(Error::DegenerateScale);
    }
    Ok(m)
}

/// [`median_sigma_sq`] with degenerate scales replaced by [`SIGMA_SQ_FLOOR`].
pub fn median_sigma_sq_floored(ds: &LabeledDataset, sample_cap: usize, seed: u64) -> Result<f64> {
    match median_sigma_sq(ds, sample_cap, seed) {
        Err(Error::DegenerateScale) => {
            log::warn!("median distance is zero; flooring sigma^2 at {SIGMA_SQ_FLOOR:e}");
            Ok(SIGMA_SQ_FLOOR)
        }
        other => other,
    }
}
