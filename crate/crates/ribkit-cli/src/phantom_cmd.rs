//! `ribkit phantom`: generates a synthetic rib-cage scene with a
//! ground-truth sidecar, for pipeline validation.

use std::fs;
use std::path::PathBuf;

use clap::Parser;
use serde::Serialize;

use ribkit::instances::Side;
use ribkit::nifti;
use ribkit::phantom::{self, SceneTruth};

use crate::common::{self, CmdResult, FileConfig, SCHEMA_VERSION};

#[derive(Parser, Debug)]
pub struct Args {
    /// Number of vertebral levels.
    #[arg(long)]
    levels: Option<usize>,
    /// Ribs per side and level; ranks past the first become supernumerary.
    #[arg(long)]
    ribs_per_side: Option<usize>,
    /// Shortened first-rank ribs as "level:side:length_mm", comma-separated,
    /// e.g. "0:left:25,1:right:30". Levels are 0-based from the bottom.
    #[arg(long)]
    stumps: Option<String>,
    /// Isotropic voxel spacing in mm.
    #[arg(long)]
    spacing: Option<f64>,
    /// Optional key=value scene file; flags take precedence.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Directory for the NIfTI volumes, truth.json and manifest.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct TruthDoc<'a> {
    schema_version: u32,
    #[serde(flatten)]
    truth: &'a SceneTruth,
}

fn parse_side(raw: &str) -> Result<Side, String> {
    match raw.to_ascii_lowercase().as_str() {
        "left" | "l" => Ok(Side::Left),
        "right" | "r" => Ok(Side::Right),
        other => Err(format!("bad side {other:?}; expected left or right")),
    }
}

fn parse_stumps(raw: &str) -> Result<Vec<(usize, Side, f64)>, String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|entry| {
            let parts: Vec<&str> = entry.split(':').collect();
            let [level, side, length] = parts.as_slice() else {
                return Err(format!("bad stump {entry:?}; expected level:side:length"));
            };
            let level = level
                .parse::<usize>()
                .map_err(|_| format!("bad stump level {level:?}"))?;
            let side = parse_side(side)?;
            let length = length
                .parse::<f64>()
                .map_err(|_| format!("bad stump length {length:?}"))?;
            Ok((level, side, length))
        })
        .collect()
}

pub fn run(args: Args) -> CmdResult {
    let cfg = FileConfig::load(args.scene.as_deref())?;
    common::ensure_out_dir(&args.out_dir)?;

    let levels = cfg.resolve(args.levels, "levels", 2usize)?;
    let ribs_per_side = cfg.resolve(args.ribs_per_side, "ribs-per-side", 1usize)?;
    let spacing = cfg.resolve(args.spacing, "spacing", 1.0f64)?;
    let stumps = match cfg.resolve_opt(args.stumps.clone(), "stumps")? {
        Some(raw) => parse_stumps(&raw)?,
        None => Vec::new(),
    };

    let scene = phantom::build_scene(levels, ribs_per_side, &stumps, spacing)?;

    let volumes = [
        ("combined.nii.gz", scene.combined.clone()),
        ("ribs.nii.gz", scene.rib_volume()),
        ("rib_mask.nii.gz", scene.rib_mask()),
        ("vertebrae.nii.gz", scene.vertebra_volume()),
    ];
    let mut artifacts = Vec::new();
    for (name, vol) in &volumes {
        nifti::write_nifti(vol, &args.out_dir.join(name))?;
        artifacts.push(name.to_string());
    }

    let truth_path = args.out_dir.join("truth.json");
    let doc = TruthDoc {
        schema_version: SCHEMA_VERSION,
        truth: &scene.truth,
    };
    fs::write(&truth_path, serde_json::to_string_pretty(&doc)?)?;
    artifacts.push("truth.json".into());

    common::write_manifest(&args.out_dir, "phantom", &artifacts)?;

    let dims = scene.combined.dims();
    println!(
        "phantom: {} levels, {} ribs, {}x{}x{} voxels at {spacing} mm",
        levels,
        scene.truth.ribs.len(),
        dims[0],
        dims[1],
        dims[2]
    );
    println!("wrote {}", args.out_dir.display());
    Ok(())
}
