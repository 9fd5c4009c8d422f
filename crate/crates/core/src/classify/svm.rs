//! Soft-margin kernel SVM trained on the dual by two-variable coordinate ascent.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Smallest curvature used along a working-pair direction.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    pub max_iter: usize,
}

impl SvmConfig {
    pub fn new(c: f64) -> Self {
        Self { c, tol: 1e-3, max_iter: 10_000_000 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// Dual variables, one per training point, each in `[0, C]`.
    pub alpha: Vec<f64>,
    /// Training labels in `{-1, +1}`.
    pub labels: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    /// Dual objective `Σα - ½αᵀQα` before the first and after every update.
    pub objective_history: Vec<f64>,
    /// Maximal KKT violation at termination.
    pub kkt_gap: f64,
    pub iterations: usize,
}

impl SvmModel {
    /// `Σ α_i y_i k(x_i, x) + b` given the kernel values `k(x_i, x)` against all training points.
    pub fn decision(&self, kernel_row: impl IntoIterator<Item = f64>) -> f64 {
        self.alpha
            .iter()
            .zip(&self.labels)
            .zip(kernel_row)
            .map(|((a, y), k)| a * y * k)
            .sum::<f64>()
            + self.bias
    }

    /// Decision values for each row of a `test × train` kernel matrix.
    pub fn decision_values(&self, cross: &DMatrix<f64>) -> Vec<f64> {
        cross.row_iter().map(|row| self.decision(row.iter().copied())).collect()
    }

    /// `+1` when the decision value is nonnegative.
    pub fn predict(&self, cross: &DMatrix<f64>) -> Vec<f64> {
        self.decision_values(cross).into_iter().map(|f| if f >= 0.0 { 1.0 } else { -1.0 }).collect()
    }

    pub fn dual_objective(&self) -> f64 {
        *self.objective_history.last().expect("history starts non-empty")
    }
}

fn in_up(alpha: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && alpha < c) || (y < 0.0 && alpha > 0.0)
}

fn in_low(alpha: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && alpha > 0.0) || (y < 0.0 && alpha < c)
}

/// Trains on a symmetric Gram matrix with labels in `{-1, +1}`.
///
/// The working pair is the maximal violating pair; iteration stops once the
/// violation is at most `tol`. Ties in pair selection go to the lowest index.
pub fn svm_train(gram: &DMatrix<f64>, labels: &[f64], config: SvmConfig) -> Result<SvmModel> {
    config.validate()?;
    let n = labels.len();
    if gram.nrows() != n || gram.ncols() != n {
        return Err(Error::ShapeMismatch { expected: n, got: gram.nrows() });
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::InvalidParameter(format!("labels must be +1 or -1, got {bad}")));
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(Error::SingleClassTraining);
    }
    let c = config.c;
    let y = labels;
    let q = |i: usize, j: usize| y[i] * y[j] * gram[(i, j)];

    let mut alpha = vec![0.0; n];
    // Gradient of ½αᵀQα - eᵀα.
    let mut grad = vec![-1.0; n];
    let objective = |alpha: &[f64], grad: &[f64]| -> f64 {
        -0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
    };
    let mut history = vec![0.0];
    let mut iterations = 0;
    let kkt_gap = loop {
        let mut i = None;
        let mut j = 0;
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t], c) && v > gmax {
                gmax = v;
                i = Some(t);
            }
            if in_low(alpha[t], y[t], c) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        let gap = gmax - gmin;
        let Some(i) = i else { break 0.0 };
        if gap <= config.tol || iterations >= config.max_iter {
            if iterations >= config.max_iter {
                log::warn!("SMO stopped at the iteration cap with KKT gap {gap:e}");
            }
            break gap.max(0.0);
        }

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]).max(TAU);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
        history.push(objective(&alpha, &grad));
        iterations += 1;
    };

    let bias = -rho(&alpha, &grad, y, c);
    Ok(SvmModel {
        alpha,
        labels: y.to_vec(),
        bias,
        c,
        objective_history: history,
        kkt_gap,
        iterations,
    })
}

/// Offset from free support vectors, or the middle of the feasible interval.
fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        0.5 * (ub + lb)
    }
}
