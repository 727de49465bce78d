//! `ribkit snapshot`: maximum-label projection of a label volume to a
//! binary PPM, with optional path-point markers.

use std::fs;
use std::path::PathBuf;

use clap::Parser;

use ribkit::nifti;
use ribkit::snapshot::{self, Plane};
use ribkit::WorldPoint;

use crate::common::CmdResult;

#[derive(Parser, Debug)]
pub struct Args {
    /// Label volume to project, NIfTI.
    #[arg(long)]
    volume: PathBuf,
    /// Projection plane: coronal or sagittal.
    #[arg(long)]
    plane: Plane,
    /// Output PPM (P6) path.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON file with marker points: an array of [x, y, z] in mm.
    #[arg(long)]
    markers: Option<PathBuf>,
}

pub fn run(args: Args) -> CmdResult {
    let vol = nifti::read_nifti_canonical(&args.volume)?;
    let markers: Vec<WorldPoint> = match &args.markers {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let raw: Vec<[f64; 3]> = serde_json::from_str(&text)?;
            raw.into_iter()
                .map(|[x, y, z]| WorldPoint::new(x, y, z))
                .collect()
        }
        None => Vec::new(),
    };
    let ppm = snapshot::snapshot_ppm(&vol, args.plane, &markers);
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(&args.out, ppm)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
