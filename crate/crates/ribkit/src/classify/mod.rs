//! Stump-rib classification: a small deterministic SVM plus the seeded
//! split/train/score harness around it.

mod experiments;
mod svm;

pub use experiments::{
    experiments_csv, run_kernel_grid, seeded_split, sweep_csv, threshold_sweep, ExperimentResult,
    SweepPoint, ThresholdSweep, STANDARD_FEATURE_SETS,
};
pub use svm::{f1_score, train_svm, KernelKind, KernelSpec, SvmModel};
