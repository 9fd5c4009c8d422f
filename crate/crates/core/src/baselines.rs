//! Bag-of-vectors and global-alignment kernels, both exposed as dissimilarities
//! `Φ` so that every kernel in the crate is used as `exp(-Φ/t)`.

use crate::ar::check_pair;
use crate::error::{Error, Result};
use crate::gram::{KernelMeta, PairEvaluator};
use crate::kernelized::BaseKernel;
use crate::series::TimeSeries;

/// Mean of `κ(x_i, x'_j)` over all observation pairs.
pub fn bov_psi(a: &TimeSeries, b: &TimeSeries, base: BaseKernel) -> Result<f64> {
    check_pair(a, b)?;
    base.validate()?;
    let mut sum = 0.0;
    for u in a.values().column_iter() {
        for v in b.values().column_iter() {
            sum += base.eval_unchecked(u.iter(), v.iter());
        }
    }
    Ok(sum / (a.len() * b.len()) as f64)
}

/// Orders a pair canonically so that dissimilarities are bitwise symmetric.
fn canonical<'a>(a: &'a TimeSeries, b: &'a TimeSeries) -> (&'a TimeSeries, &'a TimeSeries) {
    let key = |s: &TimeSeries| (s.len(), s.dim());
    let order = key(a).cmp(&key(b)).then_with(|| {
        a.values()
            .iter()
            .zip(b.values().iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if order.is_gt() {
        (b, a)
    } else {
        (a, b)
    }
}

/// `ψ(x,x) + ψ(x',x') - 2ψ(x,x')`, the squared distance between mean embeddings.
pub fn bov_dissimilarity(a: &TimeSeries, b: &TimeSeries, base: BaseKernel) -> Result<f64> {
    let (a, b) = canonical(a, b);
    Ok(bov_psi(a, a, base)? + bov_psi(b, b, base)? - 2.0 * bov_psi(a, b, base)?)
}

pub fn bov_kernel(a: &TimeSeries, b: &TimeSeries, base: BaseKernel, bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0) {
        return Err(Error::NonPositiveBandwidth(bandwidth));
    }
    Ok((-bov_dissimilarity(a, b, base)? / bandwidth).exp())
}

fn log_base(base: BaseKernel, u: nalgebra::DVectorView<'_, f64>, v: nalgebra::DVectorView<'_, f64>) -> Result<f64> {
    match base {
        BaseKernel::Gaussian { sigma_sq } => {
            Ok(-(u - v).norm_squared() / (2.0 * sigma_sq))
        }
        BaseKernel::Linear => {
            let k = u.dot(&v);
            if k > 0.0 {
                Ok(k.ln())
            } else {
                Err(Error::InvalidParameter(format!(
                    "global alignment needs a positive base kernel, got {k}"
                )))
            }
        }
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// `log M(n, n')` of the soft alignment recursion
/// `M(i,j) = κ(x_i, x'_j)·(M(i-1,j-1) + M(i-1,j) + M(i,j-1))`, `M(0,0) = 1`.
///
/// Every cell is kept in the log domain. Base values of high-dimensional series
/// can differ by thousands of nats along one anti-diagonal, so a shared linear
/// rescaling per diagonal would flush relevant cells to zero.
pub fn ga_score(a: &TimeSeries, b: &TimeSeries, base: BaseKernel) -> Result<f64> {
    check_pair(a, b)?;
    base.validate()?;
    let (n, m) = (a.len(), b.len());
    let mut prev = vec![f64::NEG_INFINITY; m + 1];
    let mut cur = vec![f64::NEG_INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur[0] = f64::NEG_INFINITY;
        let u = a.observation(i - 1);
        for j in 1..=m {
            let acc = log_add(log_add(prev[j - 1], prev[j]), cur[j - 1]);
            cur[j] = log_base(base, u, b.observation(j - 1))? + acc;
        }
        std::mem::swap(&mut prev, &mut cur);
        prev[0] = f64::NEG_INFINITY;
    }
    Ok(prev[m])
}

/// `(s(x,x) + s(x',x'))/2 - s(x,x')` with `s` the log alignment score.
pub fn ga_dissimilarity(a: &TimeSeries, b: &TimeSeries, base: BaseKernel) -> Result<f64> {
    let (a, b) = canonical(a, b);
    Ok(0.5 * (ga_score(a, a, base)? + ga_score(b, b, base)?) - ga_score(a, b, base)?)
}

pub fn ga_kernel(a: &TimeSeries, b: &TimeSeries, base: BaseKernel, bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0) {
        return Err(Error::NonPositiveBandwidth(bandwidth));
    }
    Ok((-ga_dissimilarity(a, b, base)? / bandwidth).exp())
}

/// Bag-of-vectors dissimilarity as a [`PairEvaluator`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bov {
    pub base: BaseKernel,
}

impl PairEvaluator for Bov {
    fn eval(&self, a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
        bov_dissimilarity(a, b, self.base)
    }

    fn meta(&self) -> KernelMeta {
        KernelMeta { kernel: "bov".into(), p: 0, alpha: 0.0, bandwidth: None }
    }
}

/// Global-alignment dissimilarity as a [`PairEvaluator`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ga {
    pub base: BaseKernel,
}

impl PairEvaluator for Ga {
    fn eval(&self, a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
        ga_dissimilarity(a, b, self.base)
    }

    fn meta(&self) -> KernelMeta {
        KernelMeta { kernel: "ga".into(), p: 0, alpha: 0.0, bandwidth: None }
    }
}
