//! Kernel SVM classification and model selection over dissimilarity matrices.

mod ovr;
mod select;
mod svm;

pub use ovr::{error_rate, ovr_train, OvrModel};
pub use select::{
    select_and_evaluate, select_from_matrices, stratified_folds, CvCell, SelectionGrid,
    SelectionReport,
};
pub use svm::{svm_train, SvmConfig, SvmModel};
