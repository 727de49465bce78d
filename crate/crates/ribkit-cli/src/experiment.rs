//! `ribkit experiment`: seeded classification runs over a feature CSV,
//! either the full feature-set/kernel grid or a threshold sweep.

use std::fs;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use ribkit::classify;
use ribkit::features::{self, FeatureSet};

use crate::common::{self, CmdResult};

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Mode {
    /// All seven feature sets with polynomial and linear kernels.
    Grid,
    /// Linear-kernel F1 as the stump length threshold varies.
    Sweep,
}

#[derive(Parser, Debug)]
pub struct Args {
    /// Feature CSV, as written by `ribkit analyze`.
    #[arg(long)]
    features: PathBuf,
    /// Experiment to run.
    #[arg(long, value_enum)]
    mode: Mode,
    /// Directory for the result CSV and manifest.json.
    #[arg(long)]
    out_dir: PathBuf,
    /// Sweep thresholds in mm, comma-separated.
    #[arg(long, default_value = "10,15,20,25,30,35,40,45,50,55,60")]
    thresholds: String,
    /// Sweep feature sets, comma-separated labels such as
    /// "2-PPR,4-PPR+DRC,DRC".
    #[arg(long, default_value = "2-PPR,4-PPR+DRC")]
    feature_sets: String,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

fn parse_thresholds(raw: &str) -> Result<Vec<f64>, String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| format!("bad threshold {s:?}"))
        })
        .collect()
}

/// Parses labels like "3-PPR", "DRC" or "4-PPR+DRC".
fn parse_feature_set(label: &str) -> Result<FeatureSet, String> {
    let label = label.trim();
    if label.eq_ignore_ascii_case("DRC") {
        return Ok(FeatureSet::drc_only());
    }
    let (ppr_part, with_drc) = match label.strip_suffix("+DRC") {
        Some(rest) => (rest, true),
        None => (label, false),
    };
    let n = ppr_part
        .strip_suffix("-PPR")
        .and_then(|n| n.parse::<usize>().ok())
        .ok_or_else(|| format!("unknown feature set {label:?}"))?;
    let set = if with_drc {
        FeatureSet::nppr_drc(n)
    } else {
        FeatureSet::nppr(n)
    };
    set.validate().map_err(|e| e.to_string())?;
    Ok(set)
}

pub fn run(args: Args) -> CmdResult {
    common::init_jobs(args.jobs);
    common::ensure_out_dir(&args.out_dir)?;
    let csv_text = fs::read(&args.features)?;
    let records = features::read_csv(csv_text.as_slice())?;

    let (file_name, csv) = match args.mode {
        Mode::Grid => {
            let results = classify::run_kernel_grid(&records)?;
            for r in &results {
                println!(
                    "{:<12} {:<12} mean F1 {:.4} (std {:.4})",
                    r.feature_set, r.kernel, r.mean_f1, r.std_f1
                );
            }
            ("grid.csv", classify::experiments_csv(&results))
        }
        Mode::Sweep => {
            let thresholds = parse_thresholds(&args.thresholds)?;
            let sets: Vec<FeatureSet> = args
                .feature_sets
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(parse_feature_set)
                .collect::<Result<_, _>>()?;
            if sets.is_empty() {
                return Err("no feature sets given".into());
            }
            let sweep = classify::threshold_sweep(&records, &thresholds, &sets)?;
            for p in &sweep.points {
                let f1 = p
                    .mean_f1
                    .map(|v| format!("{v:.4}"))
                    .unwrap_or_else(|| "n/a".into());
                println!(
                    "threshold {:>5.1} mm  {:<12} mean F1 {}",
                    p.threshold_mm, p.feature_set, f1
                );
            }
            ("sweep.csv", classify::sweep_csv(&sweep))
        }
    };

    let out_path = args.out_dir.join(file_name);
    fs::write(&out_path, csv)?;
    common::write_manifest(&args.out_dir, "experiment", &[file_name.to_string()])?;
    println!("wrote {}", out_path.display());
    Ok(())
}
