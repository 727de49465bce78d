//! Seeded subject-wise splits and the feature-set × kernel evaluation
//! grid, plus the stump-threshold sensitivity sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_feature_matrix, FeatureSet, RibFeatureRecord};
use crate::metrics::mean_std;

use super::svm::{f1_score, train_svm, KernelSpec};

/// Seeds used for every experiment table.
pub const SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

/// Feature-set rows in presentation order: the three PPR depths, DRC
/// alone, then the combinations.
pub const STANDARD_FEATURE_SETS: [FeatureSet; 7] = [
    FeatureSet { ppr_n: Some(2), drc: false },
    FeatureSet { ppr_n: Some(3), drc: false },
    FeatureSet { ppr_n: Some(4), drc: false },
    FeatureSet { ppr_n: None, drc: true },
    FeatureSet { ppr_n: Some(2), drc: true },
    FeatureSet { ppr_n: Some(3), drc: true },
    FeatureSet { ppr_n: Some(4), drc: true },
];

/// SplitMix64 step: a documented, trivially portable 64-bit generator, so
/// splits are bit-identical across implementations.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic subject-wise split: unique subjects sorted, Fisher–Yates
/// shuffled by SplitMix64(seed), cut at floor(train_fraction · n).
pub fn seeded_split(
    subject_ids: &[String],
    seed: u64,
    train_fraction: f64,
) -> Result<(Vec<String>, Vec<String>)> {
    let mut subjects: Vec<String> = subject_ids.to_vec();
    subjects.sort();
    subjects.dedup();
    if subjects.len() < 2 {
        return Err(Error::TooFewSubjects {
            needed: 2,
            got: subjects.len(),
        });
    }
    let mut state = seed;
    for i in (1..subjects.len()).rev() {
        let j = (splitmix64(&mut state) % (i as u64 + 1)) as usize;
        subjects.swap(i, j);
    }
    let cut = (train_fraction * subjects.len() as f64).floor() as usize;
    let test = subjects.split_off(cut);
    Ok((subjects, test))
}

/// Mean/std F1 of one feature set under one kernel across the seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub feature_set: String,
    pub kernel: String,
    pub per_seed_f1: Vec<f64>,
    pub mean_f1: f64,
    pub std_f1: f64,
}

fn subject_of(id: &str) -> &str {
    id.split_once('/').map_or(id, |(s, _)| s)
}

/// One seeded split → train → test-F1 evaluation.
fn run_one_seed(
    records: &[RibFeatureRecord],
    set: FeatureSet,
    kernel: KernelSpec,
    seed: u64,
) -> Result<f64> {
    let (matrix, _skipped) = build_feature_matrix(records, set)?;
    let subjects: Vec<String> = matrix
        .ids
        .iter()
        .map(|id| subject_of(id).to_string())
        .collect();
    let (train_subjects, _test) = seeded_split(&subjects, seed, 0.7)?;
    let in_train: Vec<bool> = subjects
        .iter()
        .map(|s| train_subjects.contains(s))
        .collect();

    let mut train_x = Vec::new();
    let mut train_y = Vec::new();
    let mut test_x = Vec::new();
    let mut test_y = Vec::new();
    for (i, row) in matrix.rows.iter().enumerate() {
        if in_train[i] {
            train_x.push(row.clone());
            train_y.push(matrix.stump[i]);
        } else {
            test_x.push(row.clone());
            test_y.push(matrix.stump[i]);
        }
    }
    if test_x.is_empty() {
        return Err(Error::EmptySample);
    }
    let model = train_svm(&train_x, &train_y, kernel, 1.0)?;
    let pred = model.predict(&test_x)?;
    f1_score(&pred, &test_y)
}

fn run_combination(
    records: &[RibFeatureRecord],
    set: FeatureSet,
    kernel: KernelSpec,
) -> Result<ExperimentResult> {
    let per_seed_f1: Vec<f64> = SEEDS
        .iter()
        .map(|&seed| run_one_seed(records, set, kernel, seed))
        .collect::<Result<_>>()?;
    let (mean_f1, std_f1) = mean_std(&per_seed_f1);
    Ok(ExperimentResult {
        feature_set: set.label(),
        kernel: kernel.name().to_string(),
        per_seed_f1,
        mean_f1,
        std_f1,
    })
}

/// Evaluates the full grid: 7 feature sets × {polynomial degree 5,
/// linear}, 10 seeds each. Rows come back in presentation order,
/// polynomial before linear within each feature set.
pub fn run_kernel_grid(records: &[RibFeatureRecord]) -> Result<Vec<ExperimentResult>> {
    let combos: Vec<(FeatureSet, KernelSpec)> = STANDARD_FEATURE_SETS
        .iter()
        .flat_map(|&set| {
            [
                (set, KernelSpec::polynomial(5)),
                (set, KernelSpec::linear()),
            ]
        })
        .collect();
    combos
        .par_iter()
        .map(|&(set, kernel)| run_combination(records, set, kernel))
        .collect()
}

/// Mean F1 at one (threshold, feature set) grid point; `None` when the
/// relabeled cohort degenerates to a single class somewhere in the runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold_mm: f64,
    pub feature_set: String,
    pub mean_f1: Option<f64>,
    pub std_f1: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdSweep {
    pub points: Vec<SweepPoint>,
    /// The standard stump threshold, for the reference line in plots.
    pub reference_mm: f64,
}

/// Relabels `is_stump` at each threshold and reruns the seeded linear-SVM
/// experiment per feature set.
pub fn threshold_sweep(
    records: &[RibFeatureRecord],
    thresholds: &[f64],
    feature_sets: &[FeatureSet],
) -> Result<ThresholdSweep> {
    let grid: Vec<(f64, FeatureSet)> = thresholds
        .iter()
        .flat_map(|&t| feature_sets.iter().map(move |&s| (t, s)))
        .collect();
    let points: Vec<SweepPoint> = grid
        .par_iter()
        .map(|&(threshold, set)| {
            let relabeled: Vec<RibFeatureRecord> = records
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    r.is_stump = r.length_mm <= threshold;
                    r
                })
                .collect();
            let outcome = run_combination(&relabeled, set, KernelSpec::linear());
            match outcome {
                Ok(res) => SweepPoint {
                    threshold_mm: threshold,
                    feature_set: set.label(),
                    mean_f1: Some(res.mean_f1),
                    std_f1: Some(res.std_f1),
                },
                Err(_) => SweepPoint {
                    threshold_mm: threshold,
                    feature_set: set.label(),
                    mean_f1: None,
                    std_f1: None,
                },
            }
        })
        .collect();
    Ok(ThresholdSweep {
        points,
        reference_mm: crate::rlma::STUMP_THRESHOLD_MM,
    })
}

/// One CSV row per (feature set, kernel): per-seed F1 columns, mean, std.
pub fn experiments_csv(results: &[ExperimentResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["feature_set".to_string(), "kernel".to_string()];
    header.extend((0..SEEDS.len()).map(|i| format!("f1_seed{i}")));
    header.push("mean_f1".into());
    header.push("std_f1".into());
    w.write_record(&header).expect("csv write");
    for r in results {
        let mut row = vec![r.feature_set.clone(), r.kernel.clone()];
        row.extend(r.per_seed_f1.iter().map(|v| format!("{v:.4}")));
        row.push(format!("{:.4}", r.mean_f1));
        row.push(format!("{:.4}", r.std_f1));
        w.write_record(&row).expect("csv write");
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("utf8")
}

/// Sweep CSV: threshold_mm, feature_set, mean_f1, std_f1 (absent points
/// leave the value cells empty).
pub fn sweep_csv(sweep: &ThresholdSweep) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["threshold_mm", "feature_set", "mean_f1", "std_f1"])
        .expect("csv write");
    for p in &sweep.points {
        w.write_record([
            format!("{}", p.threshold_mm),
            p.feature_set.clone(),
            p.mean_f1.map_or(String::new(), |v| format!("{v:.4}")),
            p.std_f1.map_or(String::new(), |v| format!("{v:.4}")),
        ])
        .expect("csv write");
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("utf8")
}
