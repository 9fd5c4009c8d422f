use nalgebra::DMatrix;

use super::svm::{svm_train, SvmConfig, SvmModel};
use crate::error::{Error, Result};

/// One binary machine per class, each separating that class from the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct OvrModel {
    pub machines: Vec<SvmModel>,
}

pub fn ovr_train(
    gram: &DMatrix<f64>,
    labels: &[usize],
    class_count: usize,
    config: SvmConfig,
) -> Result<OvrModel> {
    if class_count < 2 {
        return Err(Error::InvalidParameter(format!(
            "one-vs-rest needs at least 2 classes, got {class_count}"
        )));
    }
    let machines = (0..class_count)
        .map(|class| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
            svm_train(gram, &y, config)
        })
        .collect::<Result<_>>()?;
    Ok(OvrModel { machines })
}

impl OvrModel {
    /// Argmax of the per-class decision values for each row of a `test × train`
    /// kernel matrix; ties go to the lowest class index.
    pub fn predict(&self, cross: &DMatrix<f64>) -> Vec<usize> {
        let scores: Vec<Vec<f64>> = self.machines.iter().map(|m| m.decision_values(cross)).collect();
        (0..cross.nrows())
            .map(|r| {
                let mut best = 0;
                for class in 1..scores.len() {
                    if scores[class][r] > scores[best][r] {
                        best = class;
                    }
                }
                best
            })
            .collect()
    }
}

pub fn error_rate(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let wrong = predicted.iter().zip(truth).filter(|(p, t)| p != t).count();
    wrong as f64 / truth.len() as f64
}
