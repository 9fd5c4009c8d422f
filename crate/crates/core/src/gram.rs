//! Pairwise matrices over datasets and their text serialization.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{eigen_extremes, median};
use crate::series::TimeSeries;

/// Provenance attached to a matrix of kernel or dissimilarity values.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMeta {
    pub kernel: String,
    pub p: usize,
    pub alpha: f64,
    /// `None` for raw dissimilarities, `Some(t)` once `exp(-Φ/t)` is applied.
    pub bandwidth: Option<f64>,
}

/// A symmetric pair evaluator: a dissimilarity `Φ` whose kernel is `exp(-Φ/t)`.
pub trait PairEvaluator: Sync {
    fn eval(&self, a: &TimeSeries, b: &TimeSeries) -> Result<f64>;
    fn meta(&self) -> KernelMeta;
}

impl<T: PairEvaluator + ?Sized> PairEvaluator for Box<T> {
    fn eval(&self, a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
        (**self).eval(a, b)
    }
    fn meta(&self) -> KernelMeta {
        (**self).meta()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub values: DMatrix<f64>,
    pub meta: KernelMeta,
}

fn run_in_pool<R: Send>(workers: usize, job: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        return job();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(job),
        Err(_) => job(),
    }
}

fn evaluate_pairs(
    pairs: &[(usize, usize)],
    rows: &[TimeSeries],
    cols: &[TimeSeries],
    evaluator: &(impl PairEvaluator + ?Sized),
    workers: usize,
) -> Result<Vec<f64>> {
    let results: Vec<Result<f64>> = run_in_pool(workers, || {
        pairs
            .par_iter()
            .map(|&(i, j)| {
                evaluator.eval(&rows[i], &cols[j]).map_err(|e| Error::Pair {
                    i,
                    j,
                    source: Box::new(e),
                })
            })
            .collect()
    });
    results.into_iter().collect()
}

/// Symmetric matrix of evaluator values over `series`, computed on the upper
/// triangle and mirrored. `workers == 0` uses the global rayon pool.
pub fn gram_matrix(
    series: &[TimeSeries],
    evaluator: &(impl PairEvaluator + ?Sized),
    workers: usize,
) -> Result<KernelMatrix> {
    if series.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = series.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let values = evaluate_pairs(&pairs, series, series, evaluator, workers)?;
    let mut m = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    Ok(KernelMatrix { values: m, meta: evaluator.meta() })
}

/// Rectangular matrix with entry `(i, j) = Φ(rows[i], cols[j])`.
pub fn cross_matrix(
    rows: &[TimeSeries],
    cols: &[TimeSeries],
    evaluator: &(impl PairEvaluator + ?Sized),
    workers: usize,
) -> Result<KernelMatrix> {
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let pairs: Vec<(usize, usize)> =
        (0..rows.len()).flat_map(|i| (0..cols.len()).map(move |j| (i, j))).collect();
    let values = evaluate_pairs(&pairs, rows, cols, evaluator, workers)?;
    let m = DMatrix::from_row_iterator(rows.len(), cols.len(), values);
    Ok(KernelMatrix { values: m, meta: evaluator.meta() })
}

/// Median of the strictly upper-triangular entries of a square dissimilarity matrix.
pub fn median_bandwidth(phi: &DMatrix<f64>) -> Result<f64> {
    let n = phi.nrows();
    let mut off: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..phi.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| phi[(i, j)])
        .collect();
    median(&mut off).ok_or(Error::EmptyMatrix)
}

impl KernelMatrix {
    /// Elementwise `exp(-Φ/t)`.
    pub fn exp_transform(&self, bandwidth: f64) -> Result<KernelMatrix> {
        if !(bandwidth > 0.0) {
            return Err(Error::NonPositiveBandwidth(bandwidth));
        }
        Ok(KernelMatrix {
            values: self.values.map(|v| (-v / bandwidth).exp()),
            meta: KernelMeta { bandwidth: Some(bandwidth), ..self.meta.clone() },
        })
    }

    pub fn median_bandwidth(&self) -> Result<f64> {
        median_bandwidth(&self.values)
    }

    /// Extreme eigenvalues of `exp(-Φ/t)` for a square dissimilarity matrix.
    pub fn psd_check(&self, bandwidth: f64) -> Result<(f64, f64)> {
        Ok(eigen_extremes(&self.exp_transform(bandwidth)?.values))
    }

    pub fn header(&self) -> String {
        let bandwidth = match self.meta.bandwidth {
            Some(t) => format!("{t:.16e}"),
            None => "none".to_string(),
        };
        format!(
            "# kernel={} p={} alpha={} bandwidth={}",
            self.meta.kernel, self.meta.p, self.meta.alpha, bandwidth
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for row in self.values.row_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|reason| Error::MalformedFile { path: path.into(), reason })
    }

    /// Parses the text format; comment lines after the header are ignored.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty file")?;
        let body = header.strip_prefix("# ").ok_or("missing header line")?;
        let mut meta = KernelMeta { kernel: String::new(), p: 0, alpha: 0.0, bandwidth: None };
        for field in body.split_whitespace() {
            let (key, value) = field.split_once('=').ok_or(format!("bad header field {field}"))?;
            let bad = |_| format!("bad value for {key}: {value}");
            match key {
                "kernel" => meta.kernel = value.to_string(),
                "p" => meta.p = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "alpha" => meta.alpha = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                "bandwidth" if value == "none" => meta.bandwidth = None,
                "bandwidth" => {
                    meta.bandwidth = Some(value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?)
                }
                _ => return Err(format!("unknown header field {key}")),
            }
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| format!("bad number {t}: {e}")))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err("ragged matrix rows".into());
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err("no matrix rows".into());
        }
        let values = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
        Ok(KernelMatrix { values, meta })
    }
}
