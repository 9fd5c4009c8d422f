//! Pivoted incomplete Cholesky factorization of an implicit PSD matrix.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Why a factorization stopped growing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Residual trace fell to or below the requested threshold.
    Threshold,
    /// The rank cap was reached before the threshold.
    RankCap,
    /// The largest residual diagonal is at rounding level; further pivots would be noise.
    Exhausted,
}

/// `N × m` factor `g` with `g·gᵀ ⪯ K`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactor {
    pub g: DMatrix<f64>,
    pub pivots: Vec<usize>,
    /// Trace of the PSD residual `K - g·gᵀ`; bounds its Frobenius norm.
    pub residual_trace: f64,
    /// Residual trace before each pivot, then after the last one (length `m + 1`).
    pub trace_history: Vec<f64>,
    pub stop: StopReason,
}

impl LowRankFactor {
    pub fn rank(&self) -> usize {
        self.g.ncols()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.g * self.g.transpose()
    }
}

/// Incremental state of a pivoted incomplete Cholesky run.
///
/// `oracle(i)` must return column `i` of the target matrix.
pub struct PivotedCholesky<F> {
    oracle: F,
    columns: Vec<Vec<f64>>,
    pivots: Vec<usize>,
    residual: Vec<f64>,
    history: Vec<f64>,
    negative_tol: f64,
    exhausted_tol: f64,
}

impl<F: FnMut(usize) -> Vec<f64>> PivotedCholesky<F> {
    pub fn new(oracle: F, diag: Vec<f64>) -> Result<Self> {
        let trace: f64 = diag.iter().sum();
        let max = diag.iter().copied().fold(0.0, f64::max);
        let negative_tol = 1e-10 * trace.abs();
        if let Some((index, &value)) = diag.iter().enumerate().find(|(_, &v)| v < -negative_tol || !v.is_finite()) {
            return Err(Error::NegativeDiagonal { index, value });
        }
        let residual: Vec<f64> = diag.into_iter().map(|v| v.max(0.0)).collect();
        let trace = residual.iter().sum();
        Ok(Self {
            oracle,
            columns: Vec::new(),
            pivots: Vec::new(),
            residual,
            history: vec![trace],
            negative_tol,
            exhausted_tol: 64.0 * f64::EPSILON * max,
        })
    }

    pub fn rank(&self) -> usize {
        self.columns.len()
    }

    pub fn dim(&self) -> usize {
        self.residual.len()
    }

    pub fn residual_trace(&self) -> f64 {
        *self.history.last().expect("history starts non-empty")
    }

    /// Adds one pivot. Returns `false` without changing state when the residual
    /// is exhausted.
    pub fn step(&mut self) -> Result<bool> {
        // Largest residual diagonal, lowest index on ties.
        let (pivot, &best) = match self
            .residual
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, &f64)>, (i, v)| match acc {
                Some((_, b)) if *v <= *b => acc,
                _ => Some((i, v)),
            }) {
            Some(found) => found,
            None => return Ok(false),
        };
        if best <= self.exhausted_tol {
            return Ok(false);
        }
        let target = (self.oracle)(pivot);
        if target.len() != self.residual.len() {
            return Err(Error::ShapeMismatch { expected: self.residual.len(), got: target.len() });
        }
        let scale = best.sqrt();
        let mut col = target;
        for prev in &self.columns {
            let gp = prev[pivot];
            if gp != 0.0 {
                for (c, g) in col.iter_mut().zip(prev) {
                    *c -= g * gp;
                }
            }
        }
        for c in col.iter_mut() {
            *c /= scale;
        }
        col[pivot] = scale;
        for (i, (r, c)) in self.residual.iter_mut().zip(&col).enumerate() {
            *r -= c * c;
            if *r < -self.negative_tol {
                return Err(Error::NegativeDiagonal { index: i, value: *r });
            }
            if *r < 0.0 {
                *r = 0.0;
            }
        }
        self.residual[pivot] = 0.0;
        self.columns.push(col);
        self.pivots.push(pivot);
        self.history.push(self.residual.iter().sum());
        Ok(true)
    }

    pub fn factor(&self, stop: StopReason) -> LowRankFactor {
        let n = self.residual.len();
        let mut g = DMatrix::zeros(n, self.columns.len());
        for (k, col) in self.columns.iter().enumerate() {
            g.set_column(k, &nalgebra::DVector::from_column_slice(col));
        }
        LowRankFactor {
            g,
            pivots: self.pivots.clone(),
            residual_trace: self.residual_trace(),
            trace_history: self.history.clone(),
            stop,
        }
    }
}

/// Runs pivoted incomplete Cholesky until the residual trace is at most
/// `stop_threshold`, the rank reaches `max_rank`, or the residual is exhausted.
pub fn incomplete_cholesky<F: FnMut(usize) -> Vec<f64>>(
    column_oracle: F,
    diag: Vec<f64>,
    stop_threshold: f64,
    max_rank: Option<usize>,
) -> Result<LowRankFactor> {
    let mut run = PivotedCholesky::new(column_oracle, diag)?;
    let cap = max_rank.unwrap_or(usize::MAX).min(run.dim());
    let stop = loop {
        if run.residual_trace() <= stop_threshold {
            break StopReason::Threshold;
        }
        if run.rank() >= cap {
            break StopReason::RankCap;
        }
        if !run.step()? {
            break StopReason::Exhausted;
        }
    };
    Ok(run.factor(stop))
}

/// Column oracle over an explicit matrix.
pub fn dense_oracle(k: &DMatrix<f64>) -> impl FnMut(usize) -> Vec<f64> + '_ {
    move |i| k.column(i).iter().copied().collect()
}
