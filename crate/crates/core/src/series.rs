//! Time series, labeled datasets and the lagged regression design.

use nalgebra::{DMatrix, DMatrixView, DVectorView};

use crate::error::{Error, Result};

/// A `d × n` real matrix holding one observation per column.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: DMatrix<f64>,
}

impl TimeSeries {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::EmptyDataset);
        }
        for (col, column) in values.column_iter().enumerate() {
            if let Some(row) = column.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, col });
            }
        }
        Ok(Self { values })
    }

    /// Builds a series from observations laid out as rows (the on-disk layout).
    pub fn from_observations(observations: &[Vec<f64>]) -> Result<Self> {
        let n = observations.len();
        let d = observations.first().map_or(0, Vec::len);
        if let Some(bad) = observations.iter().find(|o| o.len() != d) {
            return Err(Error::DimensionMismatch(d, bad.len()));
        }
        Self::new(DMatrix::from_fn(d, n, |i, t| observations[t][i]))
    }

    /// Builds a univariate series.
    pub fn univariate(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(1, values.len(), values))
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Observation at 0-based time index `t`.
    pub fn observation(&self, t: usize) -> DVectorView<'_, f64> {
        self.values.column(t)
    }

    /// Observations `start..start + len` as a `d × len` view.
    pub fn window(&self, start: usize, len: usize) -> DMatrixView<'_, f64> {
        self.values.columns(start, len)
    }

    /// Subtracts the per-dimension mean over time.
    pub fn centered(&self) -> Self {
        let mut values = self.values.clone();
        for mut row in values.row_iter_mut() {
            let mean = row.mean();
            row.add_scalar_mut(-mean);
        }
        Self { values }
    }
}

/// Series with integer class labels in `0..class_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    series: Vec<TimeSeries>,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    /// Class count is inferred as `max(label) + 1`.
    pub fn new(series: Vec<TimeSeries>, labels: Vec<usize>) -> Result<Self> {
        let class_count = labels.iter().max().map_or(0, |m| m + 1);
        Self::with_class_count(series, labels, class_count)
    }

    pub fn with_class_count(
        series: Vec<TimeSeries>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if labels.len() != series.len() {
            return Err(Error::ShapeMismatch { expected: series.len(), got: labels.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidParameter(format!(
                "label {bad} outside 0..{class_count}"
            )));
        }
        let d = series[0].dim();
        if let Some(bad) = series.iter().find(|s| s.dim() != d) {
            return Err(Error::DimensionMismatch(d, bad.dim()));
        }
        Ok(Self { series, labels, class_count })
    }

    pub fn series(&self) -> &[TimeSeries] {
        &self.series
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.series[0].dim()
    }

    /// Subset by indices, keeping the class count.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::with_class_count(
            indices.iter().map(|&i| self.series[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.class_count,
        )
    }

    pub fn centered(&self) -> Self {
        Self {
            series: self.series.iter().map(TimeSeries::centered).collect(),
            labels: self.labels.clone(),
            class_count: self.class_count,
        }
    }
}

/// Lagged explanatory windows `x` (`pd × (n-p)`) and responses `y` (`d × (n-p)`).
///
/// Column `j` of `x` stacks observations `j, ..., j+p-1` with the earliest lag
/// at the top; column `j` of `y` is observation `j+p` (all 0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedDesign {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub p: usize,
}

impl LaggedDesign {
    pub fn samples(&self) -> usize {
        self.y.ncols()
    }
}

fn check_length(len: usize, p: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::InvalidParameter("lag order must be at least 1".into()));
    }
    if len <= p {
        return Err(Error::SeriesTooShort { len, p });
    }
    Ok(())
}

pub fn build_lagged(series: &TimeSeries, p: usize) -> Result<LaggedDesign> {
    let n = series.len();
    check_length(n, p)?;
    let d = series.dim();
    let m = n - p;
    let values = series.values();
    let x = DMatrix::from_fn(p * d, m, |row, col| values[(row % d, col + row / d)]);
    let y = values.columns(p, m).into_owned();
    Ok(LaggedDesign { x, y, p })
}

/// Diagonal of the pair weighting: `n-p` entries of `1/(2(n-p))` followed by
/// `n'-p` entries of `1/(2(n'-p))`.
pub fn delta_weights(n: usize, n_prime: usize, p: usize) -> Result<Vec<f64>> {
    check_length(n, p)?;
    check_length(n_prime, p)?;
    let (a, b) = (n - p, n_prime - p);
    let mut w = vec![0.5 / a as f64; a];
    w.extend(std::iter::repeat_n(0.5 / b as f64, b));
    Ok(w)
}

/// Per-series share of `log|Δ⁻¹|`: `(n-p)·log(2(n-p))`.
pub fn half_constant(n: usize, p: usize) -> f64 {
    let m = (n - p) as f64;
    m * (2.0 * m).ln()
}

/// `C_{n,n'} = log|Δ⁻¹|`, additively separable in the two lengths.
pub fn pair_constant(n: usize, n_prime: usize, p: usize) -> Result<f64> {
    check_length(n, p)?;
    check_length(n_prime, p)?;
    Ok(half_constant(n, p) + half_constant(n_prime, p))
}
