//! 2D review snapshots: maximum-label projections written as binary PPM.
//!
//! Pixel colors come from a fixed label→hue table, so the same volume
//! always renders byte-identically. Optional world-space marker points
//! (e.g. measured path points) are burned in as white pixels.

use std::io::Write;

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, WorldPoint};

/// Projection plane, named by the anatomical view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plane {
    /// Project along Anterior (axis 1); image axes are Right × Superior.
    Coronal,
    /// Project along Right (axis 0); image axes are Anterior × Superior.
    Sagittal,
}

impl std::str::FromStr for Plane {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coronal" => Ok(Plane::Coronal),
            "sagittal" => Ok(Plane::Sagittal),
            other => Err(Error::InvalidPlane(other.to_string())),
        }
    }
}

/// Fixed color for a label: golden-ratio hue walk, full saturation.
/// Label 0 (background) is black.
pub fn label_color(label: u32) -> [u8; 3] {
    if label == 0 {
        return [0, 0, 0];
    }
    let hue = (label as f64 * 0.618_033_988_749_895).fract() * 6.0;
    let sector = hue.floor() as u32 % 6;
    let f = hue.fract();
    let (v, p) = (0.95f64, 0.95 * (1.0 - 0.75));
    let q = 0.95 * (1.0 - 0.75 * f);
    let t = 0.95 * (1.0 - 0.75 * (1.0 - f));
    let (r, g, b) = match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8]
}

/// Maximum label along each projection ray. Returns (width, height,
/// row-major labels) with Superior at the top row.
fn project_max(vol: &LabelVolume, plane: Plane) -> (usize, usize, Vec<u32>) {
    let [d0, d1, d2] = vol.dims();
    let (w, h) = match plane {
        Plane::Coronal => (d0, d2),
        Plane::Sagittal => (d1, d2),
    };
    let mut labels = vec![0u32; w * h];
    for row in 0..h {
        let k = d2 - 1 - row; // top row = most superior slice
        for col in 0..w {
            let mut best = 0u32;
            match plane {
                Plane::Coronal => {
                    for j in 0..d1 {
                        best = best.max(vol.label_or_zero(col as i64, j as i64, k as i64));
                    }
                }
                Plane::Sagittal => {
                    for i in 0..d0 {
                        best = best.max(vol.label_or_zero(i as i64, col as i64, k as i64));
                    }
                }
            }
            labels[col + row * w] = best;
        }
    }
    (w, h, labels)
}

/// Image-pixel position of a world point under the same projection, or
/// `None` when it falls outside the grid.
fn project_point(vol: &LabelVolume, plane: Plane, p: WorldPoint) -> Option<(usize, usize)> {
    let v = vol.world_to_voxel(p).ok()?;
    let [_, _, d2] = vol.dims();
    let row = d2 - 1 - v.k;
    let col = match plane {
        Plane::Coronal => v.i,
        Plane::Sagittal => v.j,
    };
    Some((col, row))
}

/// Renders the projection with marker points burned in as white pixels.
pub fn render(
    vol: &LabelVolume,
    plane: Plane,
    markers: &[WorldPoint],
) -> (usize, usize, Vec<u8>) {
    let (w, h, labels) = project_max(vol, plane);
    let mut rgb = Vec::with_capacity(w * h * 3);
    for &l in &labels {
        rgb.extend_from_slice(&label_color(l));
    }
    for &m in markers {
        if let Some((col, row)) = project_point(vol, plane, m) {
            let at = (col + row * w) * 3;
            rgb[at..at + 3].copy_from_slice(&[255, 255, 255]);
        }
    }
    (w, h, rgb)
}

/// Complete binary PPM (P6) snapshot.
pub fn snapshot_ppm(vol: &LabelVolume, plane: Plane, markers: &[WorldPoint]) -> Vec<u8> {
    let (w, h, rgb) = render(vol, plane, markers);
    let mut out = Vec::with_capacity(rgb.len() + 32);
    write!(out, "P6\n{w} {h}\n255\n").expect("in-memory write");
    out.extend_from_slice(&rgb);
    out
}
