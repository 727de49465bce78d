//! `ribkit evaluate`: instance-level segmentation comparison of a
//! predicted label volume against a reference.

use std::fs;
use std::path::PathBuf;

use clap::Parser;
use serde::Serialize;

use ribkit::metrics::{self, PanopticReport};
use ribkit::nifti;

use crate::common::{self, CmdResult, SCHEMA_VERSION};

#[derive(Parser, Debug)]
pub struct Args {
    /// Predicted instance labels, NIfTI.
    #[arg(long)]
    pred: PathBuf,
    /// Reference instance labels, NIfTI, same grid as the prediction.
    #[arg(long)]
    reference: PathBuf,
    /// Directory for report.json, metrics.csv and manifest.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    schema_version: u32,
    #[serde(flatten)]
    report: &'a PanopticReport,
}

fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

fn metrics_csv(report: &PanopticReport) -> String {
    let header = "binary_dsc,rq,sq_dsc,pq_dsc,sq_assd,pq_assd,tp,fp,fn\n";
    let row = format!(
        "{},{},{},{},{},{},{},{},{}\n",
        fmt3(report.binary_dsc),
        fmt3(report.rq),
        fmt3(report.sq_dsc),
        fmt3(report.pq_dsc),
        report.sq_assd.map(fmt3).unwrap_or_default(),
        report.pq_assd.map(fmt3).unwrap_or_default(),
        report.matching.matched.len(),
        report.matching.false_positives,
        report.matching.false_negatives,
    );
    format!("{header}{row}")
}

pub fn run(args: Args) -> CmdResult {
    common::ensure_out_dir(&args.out_dir)?;
    let pred = nifti::read_nifti_canonical(&args.pred)?;
    let reference = nifti::read_nifti_canonical(&args.reference)?;
    let report = metrics::evaluate_panoptic(&pred, &reference)?;

    let json_path = args.out_dir.join("report.json");
    let doc = ReportDoc {
        schema_version: SCHEMA_VERSION,
        report: &report,
    };
    fs::write(&json_path, serde_json::to_string_pretty(&doc)?)?;

    let csv_path = args.out_dir.join("metrics.csv");
    fs::write(&csv_path, metrics_csv(&report))?;

    common::write_manifest(
        &args.out_dir,
        "evaluate",
        &["report.json".into(), "metrics.csv".into()],
    )?;

    println!(
        "binary DSC {} | RQ {} | PQ(DSC) {} | SQ(ASSD) {}",
        fmt3(report.binary_dsc),
        fmt3(report.rq),
        fmt3(report.pq_dsc),
        report.sq_assd.map(fmt3).unwrap_or_else(|| "n/a".into()),
    );
    println!("wrote {}", json_path.display());
    println!("wrote {}", csv_path.display());
    Ok(())
}
