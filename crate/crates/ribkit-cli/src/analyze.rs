//! `ribkit analyze`: rib instancing, vertebra assignment, centerline
//! measurement and feature extraction for one subject.

use std::fs;
use std::path::PathBuf;

use clap::Parser;
use rayon::prelude::*;
use serde::Serialize;

use ribkit::features::{self, RibFeatureRecord};
use ribkit::instances::{self, AssignmentTable, RibInstance, Side, VertebraInstance};
use ribkit::morphology;
use ribkit::nifti;
use ribkit::rlma::{self, PathPolyline, RlmaConfig, Termination};
use ribkit::{LabelVolume, WorldPoint};

use crate::common::{self, CmdResult, FileConfig, SCHEMA_VERSION};

/// World-space alignment tolerance between the rib and vertebra grids.
const AFFINE_TOL: f64 = 1e-3;

#[derive(Parser, Debug)]
pub struct Args {
    /// Rib mask (binary) or rib instance labels, NIfTI.
    #[arg(long)]
    ribs: PathBuf,
    /// Vertebra instance labels, NIfTI.
    #[arg(long)]
    vertebrae: PathBuf,
    /// Optional corpus mask on the same grid as the vertebrae.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Directory for analyze.json, features.csv and manifest.json.
    #[arg(long)]
    out_dir: PathBuf,
    /// Subject identifier for reports; defaults to the rib file stem.
    #[arg(long)]
    subject_id: Option<String>,
    /// Optional key=value config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Restrict measurement to the two most inferior rib-bearing levels.
    #[arg(long)]
    lowest_two: bool,
    /// Stump-rib length threshold in mm.
    #[arg(long)]
    stump_threshold: Option<f64>,
    /// Path-point relation order kept in the feature records.
    #[arg(long)]
    ppr_n: Option<usize>,
    /// Inner radius of the step-candidate shell, mm.
    #[arg(long)]
    shell_min: Option<f64>,
    /// Outer radius of the step-candidate shell, mm.
    #[arg(long)]
    shell_max: Option<f64>,
    /// Fraction of the mean-direction vector to advance per step.
    #[arg(long)]
    step_fraction: Option<f64>,
    /// Start-point refinement neighborhood radius, mm.
    #[arg(long)]
    start_refine_radius: Option<f64>,
    /// Terminal cone half-angle, degrees.
    #[arg(long)]
    cone_half_angle: Option<f64>,
    /// Number of rays in the terminal cone.
    #[arg(long)]
    cone_rays: Option<usize>,
    /// Longest advance a cone ray may report, mm.
    #[arg(long)]
    cone_max_len: Option<f64>,
    /// Isotropic working resolution, mm.
    #[arg(long)]
    resample: Option<f64>,
}

#[derive(Serialize)]
struct ConfigEcho {
    rlma: RlmaConfig,
    stump_threshold_mm: f64,
    ppr_n: usize,
    lowest_two: bool,
}

#[derive(Serialize)]
struct VertebraReport {
    label: u32,
    centroid: [f64; 3],
    corpus_centroid: [f64; 3],
    frame_degenerate: bool,
}

#[derive(Serialize)]
struct FeatureReport {
    drc: [f64; 3],
    pdrc: f64,
    ppr: Vec<[f64; 3]>,
    volume_length_ratio: f64,
}

#[derive(Serialize)]
struct RibReport {
    label: u32,
    anatomic_label: Option<String>,
    vertebra: Option<u32>,
    side: Option<Side>,
    voxel_count: usize,
    volume_mm3: f64,
    centroid: [f64; 3],
    measured: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    length_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    termination: Option<Termination>,
    #[serde(skip_serializing_if = "Option::is_none")]
    is_stump: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    path_points: Option<Vec<[f64; 3]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<FeatureReport>,
}

#[derive(Serialize)]
struct SkipReport {
    label: u32,
    reason: String,
}

#[derive(Serialize)]
struct Summary {
    num_ribs: usize,
    num_assigned: usize,
    num_orphans: usize,
    num_measured: usize,
    num_stumps: usize,
    /// Stump fraction among measured ribs; null when nothing was measured.
    stump_prevalence: Option<f64>,
}

#[derive(Serialize)]
struct AnalyzeReport {
    schema_version: u32,
    subject: String,
    config: ConfigEcho,
    vertebrae: Vec<VertebraReport>,
    ribs: Vec<RibReport>,
    orphans: Vec<ribkit::instances::OrphanRelabel>,
    skipped: Vec<SkipReport>,
    summary: Summary,
}

fn p3(p: &WorldPoint) -> [f64; 3] {
    [p.x, p.y, p.z]
}

fn subject_from_path(path: &std::path::Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "subject".into());
    name.trim_end_matches(".gz")
        .trim_end_matches(".nii")
        .to_string()
}

fn build_rlma_config(args: &Args, cfg: &FileConfig) -> Result<RlmaConfig, String> {
    let d = RlmaConfig::default();
    Ok(RlmaConfig {
        shell_min_mm: cfg.resolve(args.shell_min, "shell-min", d.shell_min_mm)?,
        shell_max_mm: cfg.resolve(args.shell_max, "shell-max", d.shell_max_mm)?,
        step_fraction: cfg.resolve(args.step_fraction, "step-fraction", d.step_fraction)?,
        start_refine_radius_mm: cfg.resolve(
            args.start_refine_radius,
            "start-refine-radius",
            d.start_refine_radius_mm,
        )?,
        cone_half_angle_deg: cfg.resolve(
            args.cone_half_angle,
            "cone-half-angle",
            d.cone_half_angle_deg,
        )?,
        cone_ray_count: cfg.resolve(args.cone_rays, "cone-rays", d.cone_ray_count)?,
        cone_max_len_mm: cfg.resolve(args.cone_max_len, "cone-max-len", d.cone_max_len_mm)?,
        resample_mm: cfg.resolve(args.resample, "resample", d.resample_mm)?,
    })
}

/// Measurement outcome for one assigned rib, in rib-label order.
struct Measured {
    label: u32,
    path: PathPolyline,
    record: RibFeatureRecord,
}

fn measure_one(
    components: &LabelVolume,
    rib: &RibInstance,
    vertebra: &VertebraInstance,
    subject: &str,
    rlma_cfg: &RlmaConfig,
    stump_threshold: f64,
    ppr_n: usize,
) -> ribkit::Result<Measured> {
    let mask = morphology::binarize(components, rib.label)?;
    let path = rlma::measure_rib(&mask, vertebra.corpus_centroid, rlma_cfg)?;
    let side = rib.side.expect("assigned rib has a side");
    let rib_name = rib
        .anatomic_label()
        .unwrap_or_else(|| format!("rib{}", rib.label));
    let mut record = RibFeatureRecord::compute(
        subject,
        &rib_name,
        side,
        &path,
        vertebra.corpus_centroid,
        &vertebra.frame,
        rib.volume_mm3,
        ppr_n,
    )?;
    record.is_stump = rlma::classify_stump(path.length_mm, stump_threshold)?;
    Ok(Measured {
        label: rib.label,
        path,
        record,
    })
}

/// Labels of the two rib-bearing vertebrae with the most inferior corpus
/// centers. Fewer than two rib-bearing levels keep whatever exists.
fn lowest_two_levels(table: &AssignmentTable, vertebrae: &[VertebraInstance]) -> Vec<u32> {
    let mut bearing: Vec<&VertebraInstance> = vertebrae
        .iter()
        .filter(|v| table.ribs.iter().any(|r| r.vertebra == Some(v.label)))
        .collect();
    bearing.sort_by(|a, b| {
        a.corpus_centroid
            .z
            .partial_cmp(&b.corpus_centroid.z)
            .expect("finite centroid")
    });
    bearing.iter().take(2).map(|v| v.label).collect()
}

fn write_empty_report(args: &Args, subject: &str, echo: ConfigEcho) -> CmdResult {
    let report = AnalyzeReport {
        schema_version: SCHEMA_VERSION,
        subject: subject.to_string(),
        config: echo,
        vertebrae: Vec::new(),
        ribs: Vec::new(),
        orphans: Vec::new(),
        skipped: Vec::new(),
        summary: Summary {
            num_ribs: 0,
            num_assigned: 0,
            num_orphans: 0,
            num_measured: 0,
            num_stumps: 0,
            stump_prevalence: None,
        },
    };
    let json_path = args.out_dir.join("analyze.json");
    fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;
    common::write_manifest(&args.out_dir, "analyze", &["analyze.json".into()])?;
    println!("no ribs found for {subject}; wrote {}", json_path.display());
    Ok(())
}

pub fn run(args: Args) -> CmdResult {
    let cfg = FileConfig::load(args.config.as_deref())?;
    common::init_jobs(cfg.resolve_opt(args.jobs, "jobs")?);
    common::ensure_out_dir(&args.out_dir)?;

    let rlma_cfg = build_rlma_config(&args, &cfg)?;
    let stump_threshold =
        cfg.resolve(args.stump_threshold, "stump-threshold", rlma::STUMP_THRESHOLD_MM)?;
    let ppr_n = cfg.resolve(args.ppr_n, "ppr-n", 4usize)?;
    let subject = match cfg.resolve_opt(args.subject_id.clone(), "subject-id")? {
        Some(s) => s,
        None => subject_from_path(&args.ribs),
    };
    let echo = ConfigEcho {
        rlma: rlma_cfg.clone(),
        stump_threshold_mm: stump_threshold,
        ppr_n,
        lowest_two: args.lowest_two,
    };

    let ribs_vol = nifti::read_nifti_canonical(&args.ribs)?;
    let verts_vol = nifti::read_nifti_canonical(&args.vertebrae)?;
    if !ribs_vol.same_grid(&verts_vol, AFFINE_TOL) {
        return Err("rib and vertebra volumes are not aligned (grid or affine mismatch)".into());
    }
    let corpus_vol = match &args.corpus {
        Some(p) => {
            let v = nifti::read_nifti_canonical(p)?;
            if !v.same_grid(&verts_vol, AFFINE_TOL) {
                return Err("corpus volume is not aligned with the vertebra volume".into());
            }
            Some(v)
        }
        None => None,
    };

    let rib_labels = ribs_vol.distinct_labels();
    if rib_labels.is_empty() {
        return write_empty_report(&args, &subject, echo);
    }
    // A strictly binary input gets instanced; anything with labels > 1 is
    // taken as pre-instanced.
    let components = if rib_labels == [1] {
        instances::rib_components(&ribs_vol)?
    } else {
        ribs_vol
    };

    let vertebrae = instances::vertebra_instances(&verts_vol, corpus_vol.as_ref(), None)?;
    let table = instances::assign_ribs(&components, &verts_vol, &vertebrae)?;

    let measurable_levels: Option<Vec<u32>> = args
        .lowest_two
        .then(|| lowest_two_levels(&table, &vertebrae));

    let to_measure: Vec<(&RibInstance, &VertebraInstance)> = table
        .ribs
        .iter()
        .filter_map(|r| {
            let v_label = r.vertebra?;
            if let Some(keep) = &measurable_levels {
                if !keep.contains(&v_label) {
                    return None;
                }
            }
            let v = vertebrae.iter().find(|v| v.label == v_label)?;
            Some((r, v))
        })
        .collect();

    let outcomes: Vec<(u32, ribkit::Result<Measured>)> = to_measure
        .par_iter()
        .map(|(r, v)| {
            (
                r.label,
                measure_one(
                    &components,
                    r,
                    v,
                    &subject,
                    &rlma_cfg,
                    stump_threshold,
                    ppr_n,
                ),
            )
        })
        .collect();

    let mut measured: Vec<Measured> = Vec::new();
    let mut skipped: Vec<SkipReport> = Vec::new();
    for (label, outcome) in outcomes {
        match outcome {
            Ok(m) => measured.push(m),
            Err(e) => skipped.push(SkipReport {
                label,
                reason: e.to_string(),
            }),
        }
    }
    measured.sort_by_key(|m| m.label);

    let rib_reports: Vec<RibReport> = table
        .ribs
        .iter()
        .map(|r| {
            let m = measured.iter().find(|m| m.label == r.label);
            RibReport {
                label: r.label,
                anatomic_label: r.anatomic_label(),
                vertebra: r.vertebra,
                side: r.side,
                voxel_count: r.voxel_count,
                volume_mm3: r.volume_mm3,
                centroid: p3(&r.centroid),
                measured: m.is_some(),
                length_mm: m.map(|m| m.path.length_mm),
                termination: m.map(|m| m.path.termination),
                is_stump: m.map(|m| m.record.is_stump),
                path_points: m.map(|m| m.path.points.iter().map(p3).collect()),
                features: m.map(|m| FeatureReport {
                    drc: m.record.drc,
                    pdrc: m.record.pdrc,
                    ppr: m.record.ppr.clone(),
                    volume_length_ratio: m.record.volume_length_ratio,
                }),
            }
        })
        .collect();

    let num_stumps = measured.iter().filter(|m| m.record.is_stump).count();
    let summary = Summary {
        num_ribs: table.ribs.len(),
        num_assigned: table.ribs.iter().filter(|r| r.vertebra.is_some()).count(),
        num_orphans: table.orphans.len(),
        num_measured: measured.len(),
        num_stumps,
        stump_prevalence: (!measured.is_empty())
            .then(|| num_stumps as f64 / measured.len() as f64),
    };

    let report = AnalyzeReport {
        schema_version: SCHEMA_VERSION,
        subject: subject.clone(),
        config: echo,
        vertebrae: vertebrae
            .iter()
            .map(|v| VertebraReport {
                label: v.label,
                centroid: p3(&v.centroid),
                corpus_centroid: p3(&v.corpus_centroid),
                frame_degenerate: v.frame_degenerate,
            })
            .collect(),
        ribs: rib_reports,
        orphans: table.orphans.clone(),
        skipped,
        summary,
    };

    let json_path = args.out_dir.join("analyze.json");
    fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;

    let records: Vec<RibFeatureRecord> = measured.into_iter().map(|m| m.record).collect();
    let csv_path = args.out_dir.join("features.csv");
    let mut csv_out = Vec::new();
    features::write_csv(&records, &mut csv_out)?;
    fs::write(&csv_path, csv_out)?;

    common::write_manifest(
        &args.out_dir,
        "analyze",
        &["analyze.json".into(), "features.csv".into()],
    )?;

    println!(
        "analyzed {subject}: {} ribs, {} measured, {} stumps ({} skipped)",
        report.summary.num_ribs,
        report.summary.num_measured,
        report.summary.num_stumps,
        report.skipped.len()
    );
    println!("wrote {}", json_path.display());
    println!("wrote {}", csv_path.display());
    Ok(())
}
