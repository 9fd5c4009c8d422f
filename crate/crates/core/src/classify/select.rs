//! Bandwidth and box-constraint selection by stratified cross-validation.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ovr::{error_rate, ovr_train};
use super::svm::SvmConfig;
use crate::error::{Error, Result};
use crate::gram::{cross_matrix, gram_matrix, median_bandwidth, PairEvaluator};
use crate::series::LabeledDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionGrid {
    pub c_values: Vec<f64>,
    /// Candidate bandwidths as multiples of the median training dissimilarity.
    pub bandwidth_multipliers: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for SelectionGrid {
    fn default() -> Self {
        Self {
            c_values: vec![1.0, 10.0, 100.0],
            bandwidth_multipliers: vec![0.5, 1.0, 2.0],
            folds: 5,
            seed: 0,
            tol: 1e-3,
        }
    }
}

impl SelectionGrid {
    pub fn validate(&self) -> Result<()> {
        if self.c_values.is_empty() || self.bandwidth_multipliers.is_empty() {
            return Err(Error::InvalidParameter("selection grid is empty".into()));
        }
        if let Some(m) = self.bandwidth_multipliers.iter().find(|m| !(**m > 0.0)) {
            return Err(Error::InvalidParameter(format!("bandwidth multiplier must be positive, got {m}")));
        }
        if self.folds < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 folds, got {}", self.folds)));
        }
        Ok(())
    }
}

/// Fold index of every sample. Within each class the samples are shuffled with
/// `seed` and dealt round-robin, continuing the deal across classes.
pub fn stratified_folds(labels: &[usize], class_count: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for class in 0..class_count {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    assignment
}

fn check_folds(labels: &[usize], assignment: &[usize], folds: usize, class_count: usize) -> Result<()> {
    for class in 0..class_count {
        if !labels.contains(&class) {
            continue;
        }
        for fold in 0..folds {
            let present = labels.iter().zip(assignment).any(|(&l, &f)| l == class && f == fold);
            if !present {
                return Err(Error::FoldTooSmall { fold, class });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvCell {
    pub c: f64,
    pub multiplier: f64,
    pub bandwidth: f64,
    /// Mean of the per-fold error rates.
    pub cv_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub kernel: String,
    pub c: f64,
    pub bandwidth: f64,
    pub median: f64,
    pub cv_error: f64,
    pub test_error: f64,
    pub predictions: Vec<usize>,
    pub cells: Vec<CvCell>,
    pub wall_time_seconds: f64,
}

impl SelectionReport {
    pub const HEADER: &'static str = "kernel\tC\tt\tcv_error\ttest_error\twall_time_seconds";

    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{:.6e}\t{:.6}\t{:.6}\t{:.3}",
            self.kernel, self.c, self.bandwidth, self.cv_error, self.test_error, self.wall_time_seconds
        )
    }

    pub fn cv_table(&self) -> String {
        let mut out = String::from("C\tmultiplier\tt\tcv_error\n");
        for cell in &self.cells {
            out.push_str(&format!(
                "{}\t{}\t{:.6e}\t{:.6}\n",
                cell.c, cell.multiplier, cell.bandwidth, cell.cv_error
            ));
        }
        out
    }
}

fn exp_kernel_matrix(phi: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    phi.map(|v| (-v / t).exp())
}

fn cv_error(
    kernel: &DMatrix<f64>,
    labels: &[usize],
    class_count: usize,
    assignment: &[usize],
    folds: usize,
    config: SvmConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for fold in 0..folds {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] != fold).collect();
        let valid: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] == fold).collect();
        let k_train = kernel.select_rows(&train).select_columns(&train);
        let k_valid = kernel.select_rows(&valid).select_columns(&train);
        let y_train: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let y_valid: Vec<usize> = valid.iter().map(|&i| labels[i]).collect();
        let model = ovr_train(&k_train, &y_train, class_count, config)?;
        total += error_rate(&model.predict(&k_valid), &y_valid);
    }
    Ok(total / folds as f64)
}

/// Selection and evaluation on precomputed dissimilarities: `train_phi` is the
/// symmetric training matrix and `test_phi` is `test × train`.
pub fn select_from_matrices(
    kernel: &str,
    train_phi: &DMatrix<f64>,
    train_labels: &[usize],
    class_count: usize,
    test_phi: &DMatrix<f64>,
    test_labels: &[usize],
    grid: &SelectionGrid,
) -> Result<SelectionReport> {
    grid.validate()?;
    let start = Instant::now();
    let assignment = stratified_folds(train_labels, class_count, grid.folds, grid.seed);
    check_folds(train_labels, &assignment, grid.folds, class_count)?;
    let median = median_bandwidth(train_phi)?;
    if !(median > 0.0) {
        return Err(Error::NonPositiveBandwidth(median));
    }

    let cells: Vec<(f64, f64)> = grid
        .c_values
        .iter()
        .flat_map(|&c| grid.bandwidth_multipliers.iter().map(move |&m| (c, m)))
        .collect();
    let errors: Vec<Result<f64>> = cells
        .par_iter()
        .map(|&(c, m)| {
            let k = exp_kernel_matrix(train_phi, m * median);
            let config = SvmConfig { tol: grid.tol, ..SvmConfig::new(c) };
            cv_error(&k, train_labels, class_count, &assignment, grid.folds, config)
        })
        .collect();
    let mut table = Vec::with_capacity(cells.len());
    for (&(c, multiplier), err) in cells.iter().zip(errors) {
        table.push(CvCell { c, multiplier, bandwidth: multiplier * median, cv_error: err? });
    }

    let best = table
        .iter()
        .min_by(|a, b| {
            a.cv_error
                .total_cmp(&b.cv_error)
                .then(a.c.total_cmp(&b.c))
                .then(a.bandwidth.total_cmp(&b.bandwidth))
        })
        .expect("grid validated non-empty")
        .clone();

    let config = SvmConfig { tol: grid.tol, ..SvmConfig::new(best.c) };
    let model = ovr_train(&exp_kernel_matrix(train_phi, best.bandwidth), train_labels, class_count, config)?;
    let predictions = model.predict(&exp_kernel_matrix(test_phi, best.bandwidth));
    let test_error = error_rate(&predictions, test_labels);
    Ok(SelectionReport {
        kernel: kernel.to_string(),
        c: best.c,
        bandwidth: best.bandwidth,
        median,
        cv_error: best.cv_error,
        test_error,
        predictions,
        cells: table,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Computes the training and train-versus-test dissimilarities once, then runs
/// [`select_from_matrices`]. The wall time covers both stages.
pub fn select_and_evaluate(
    train: &LabeledDataset,
    test: &LabeledDataset,
    evaluator: &(impl PairEvaluator + ?Sized),
    grid: &SelectionGrid,
    workers: usize,
) -> Result<SelectionReport> {
    if train.dim() != test.dim() {
        return Err(Error::DimensionMismatch(train.dim(), test.dim()));
    }
    let start = Instant::now();
    let class_count = train.class_count().max(test.class_count());
    let train_phi = gram_matrix(train.series(), evaluator, workers)?;
    let test_phi = cross_matrix(test.series(), train.series(), evaluator, workers)?;
    let mut report = select_from_matrices(
        &train_phi.meta.kernel,
        &train_phi.values,
        train.labels(),
        class_count,
        &test_phi.values,
        test.labels(),
        grid,
    )?;
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}
