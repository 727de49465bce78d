//! Grid-level mask operations: nearest-neighbor resampling, hole filling,
//! connected components, surface extraction, and cropping.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, VoxelCoord, WorldPoint};

/// Neighborhood used by component labeling and flood fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    /// Face neighbors only.
    Six,
    /// Face, edge, and corner neighbors.
    TwentySix,
}

impl Connectivity {
    fn deltas(self) -> Vec<(i64, i64, i64)> {
        match self {
            Connectivity::Six => vec![
                (-1, 0, 0),
                (1, 0, 0),
                (0, -1, 0),
                (0, 1, 0),
                (0, 0, -1),
                (0, 0, 1),
            ],
            Connectivity::TwentySix => {
                let mut d = Vec::with_capacity(26);
                for dk in -1i64..=1 {
                    for dj in -1i64..=1 {
                        for di in -1i64..=1 {
                            if (di, dj, dk) != (0, 0, 0) {
                                d.push((di, dj, dk));
                            }
                        }
                    }
                }
                d
            }
        }
    }
}

pub(crate) fn require_axis_aligned(vol: &LabelVolume) -> Result<()> {
    let aff = vol.affine();
    let tol = 1e-6 * vol.spacing().iter().cloned().fold(1.0f64, f64::max);
    for r in 0..3 {
        for c in 0..3 {
            if r != c && aff[(r, c)].abs() > tol {
                return Err(Error::GridMismatch(
                    "operation requires an axis-aligned affine".into(),
                ));
            }
        }
        if aff[(r, r)] <= 0.0 {
            return Err(Error::GridMismatch(
                "operation requires canonical (positive-diagonal) orientation".into(),
            ));
        }
    }
    Ok(())
}

/// Resamples onto an isotropic grid of `target` mm spacing, nearest neighbor.
///
/// The output grid covers the input's world extent edge to edge:
/// `out_dims[a] = ceil(dims[a] * spacing[a] / target)` and the first output
/// voxel center sits half a target step inside the input's leading edge.
pub fn resample_nearest(vol: &LabelVolume, target: f64) -> Result<LabelVolume> {
    if target <= 0.0 || !target.is_finite() {
        return Err(Error::GridMismatch(format!(
            "target spacing {target} must be positive"
        )));
    }
    require_axis_aligned(vol)?;
    let dims = vol.dims();
    let spacing = vol.spacing();

    let mut out_dims = [0usize; 3];
    let mut maps: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for a in 0..3 {
        let extent = dims[a] as f64 * spacing[a];
        out_dims[a] = (extent / target).ceil().max(1.0) as usize;
        maps[a] = (0..out_dims[a])
            .map(|o| {
                let in_f = (o as f64 * target + 0.5 * (target - spacing[a])) / spacing[a];
                (in_f.round().max(0.0) as usize).min(dims[a] - 1)
            })
            .collect();
    }

    let mut affine = *vol.affine();
    for a in 0..3 {
        affine[(a, a)] = target;
        affine[(a, 3)] += 0.5 * (target - spacing[a]);
    }

    let mut data = vec![0u32; out_dims[0] * out_dims[1] * out_dims[2]];
    let src = vol.data();
    let mut out_idx = 0usize;
    for ok in 0..out_dims[2] {
        let k = maps[2][ok];
        for oj in 0..out_dims[1] {
            let j = maps[1][oj];
            let row = dims[0] * (j + dims[1] * k);
            for oi in 0..out_dims[0] {
                data[out_idx] = src[row + maps[0][oi]];
                out_idx += 1;
            }
        }
    }
    LabelVolume::new(out_dims, affine, data)
}

/// Fills enclosed background cavities in a binary mask.
///
/// Background is flooded from the grid border with 6-connectivity; any
/// background voxel the flood cannot reach becomes foreground.
pub fn fill_holes(vol: &LabelVolume) -> Result<LabelVolume> {
    if vol.data().iter().any(|&l| l > 1) {
        return Err(Error::NotBinary);
    }
    let dims = vol.dims();
    let data = vol.data();
    let mut outside = vec![false; data.len()];
    let mut stack: Vec<usize> = Vec::new();

    let push_if_bg = |idx: usize, outside: &mut [bool], stack: &mut Vec<usize>| {
        if data[idx] == 0 && !outside[idx] {
            outside[idx] = true;
            stack.push(idx);
        }
    };
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                if i == 0 || j == 0 || k == 0 || i == dims[0] - 1 || j == dims[1] - 1
                    || k == dims[2] - 1
                {
                    push_if_bg(i + dims[0] * (j + dims[1] * k), &mut outside, &mut stack);
                }
            }
        }
    }

    let deltas = Connectivity::Six.deltas();
    while let Some(idx) = stack.pop() {
        let c = vol.coord_of(idx);
        for &(di, dj, dk) in &deltas {
            let (ni, nj, nk) = (c.i as i64 + di, c.j as i64 + dj, c.k as i64 + dk);
            if vol.in_bounds(ni, nj, nk) {
                let nidx = ni as usize + dims[0] * (nj as usize + dims[1] * nk as usize);
                if data[nidx] == 0 && !outside[nidx] {
                    outside[nidx] = true;
                    stack.push(nidx);
                }
            }
        }
    }

    let filled: Vec<u32> = data
        .iter()
        .zip(outside.iter())
        .map(|(&l, &out)| if l != 0 || !out { 1 } else { 0 })
        .collect();
    LabelVolume::new(dims, *vol.affine(), filled)
}

/// Labels connected components of the foreground (any nonzero voxel).
///
/// Output labels start at 1 and are ordered by component size, largest
/// first; equal sizes are ordered by the smallest linear index they contain,
/// so the labeling is deterministic.
pub fn connected_components(vol: &LabelVolume, conn: Connectivity) -> LabelVolume {
    let dims = vol.dims();
    let data = vol.data();
    let deltas = conn.deltas();

    let mut comp = vec![0u32; data.len()]; // provisional id + 1
    let mut stack: Vec<usize> = Vec::new();
    // (provisional id, size, seed index); seed is the component's min index
    // because the outer scan runs in linear order
    let mut info: Vec<(u32, usize, usize)> = Vec::new();

    for seed in 0..data.len() {
        if data[seed] == 0 || comp[seed] != 0 {
            continue;
        }
        let id = info.len() as u32 + 1;
        let mut size = 0usize;
        comp[seed] = id;
        stack.push(seed);
        while let Some(idx) = stack.pop() {
            size += 1;
            let c = vol.coord_of(idx);
            for &(di, dj, dk) in &deltas {
                let (ni, nj, nk) = (c.i as i64 + di, c.j as i64 + dj, c.k as i64 + dk);
                if vol.in_bounds(ni, nj, nk) {
                    let nidx = ni as usize + dims[0] * (nj as usize + dims[1] * nk as usize);
                    if data[nidx] != 0 && comp[nidx] == 0 {
                        comp[nidx] = id;
                        stack.push(nidx);
                    }
                }
            }
        }
        info.push((id, size, seed));
    }

    let mut order: Vec<usize> = (0..info.len()).collect();
    order.sort_by(|&a, &b| {
        info[b].1.cmp(&info[a].1).then(info[a].2.cmp(&info[b].2))
    });
    let mut relabel = vec![0u32; info.len() + 1];
    for (new_label, &slot) in order.iter().enumerate() {
        relabel[info[slot].0 as usize] = new_label as u32 + 1;
    }
    for v in comp.iter_mut() {
        *v = relabel[*v as usize];
    }
    LabelVolume::new(dims, *vol.affine(), comp).expect("dims unchanged")
}

/// Number of voxels carrying `label`.
pub fn label_count(vol: &LabelVolume, label: u32) -> usize {
    vol.data().iter().filter(|&&l| l == label).count()
}

/// Physical volume of a label in mm^3.
pub fn label_volume_mm3(vol: &LabelVolume, label: u32) -> f64 {
    label_count(vol, label) as f64 * vol.voxel_volume_mm3()
}

/// Mean world position of all voxels carrying `label`.
pub fn centroid(vol: &LabelVolume, label: u32) -> Result<WorldPoint> {
    let mut sum = Vector3::zeros();
    let mut n = 0usize;
    for (idx, &l) in vol.data().iter().enumerate() {
        if l == label {
            let c = vol.coord_of(idx);
            sum += vol.voxel_center(c.i, c.j, c.k).coords;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::LabelsAbsent);
    }
    Ok(WorldPoint::from(sum / n as f64))
}

/// Voxels of `label` with at least one of their 6 face neighbors outside
/// the label (grid boundary counts as outside).
pub fn surface_voxels(vol: &LabelVolume, label: u32) -> Vec<VoxelCoord> {
    let deltas = Connectivity::Six.deltas();
    let mut out = Vec::new();
    for (idx, &l) in vol.data().iter().enumerate() {
        if l != label {
            continue;
        }
        let c = vol.coord_of(idx);
        let boundary = deltas.iter().any(|&(di, dj, dk)| {
            vol.label_or_zero(c.i as i64 + di, c.j as i64 + dj, c.k as i64 + dk) != label
        });
        if boundary {
            out.push(c);
        }
    }
    out
}

/// Extracts `label` as a 0/1 mask on the same grid.
pub fn binarize(vol: &LabelVolume, label: u32) -> Result<LabelVolume> {
    let data: Vec<u32> = vol
        .data()
        .iter()
        .map(|&l| u32::from(l == label))
        .collect();
    if data.iter().all(|&v| v == 0) {
        return Err(Error::LabelsAbsent);
    }
    LabelVolume::new(vol.dims(), *vol.affine(), data)
}

/// Crops to the bounding box of `label` expanded by `margin_mm` on every
/// side (rounded up to whole voxels, clamped to the grid). The affine is
/// translated so every retained voxel keeps its world position.
pub fn crop_to_label(vol: &LabelVolume, label: u32, margin_mm: f64) -> Result<LabelVolume> {
    let dims = vol.dims();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for (idx, &l) in vol.data().iter().enumerate() {
        if l == label {
            let c = vol.coord_of(idx).as_array();
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
    }
    if lo[0] == usize::MAX {
        return Err(Error::LabelsAbsent);
    }
    let spacing = vol.spacing();
    for a in 0..3 {
        let pad = (margin_mm / spacing[a]).ceil().max(0.0) as usize;
        lo[a] = lo[a].saturating_sub(pad);
        hi[a] = (hi[a] + pad).min(dims[a] - 1);
    }

    let new_dims = [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1];
    let mut affine = *vol.affine();
    let linear = affine.fixed_view::<3, 3>(0, 0).into_owned();
    let shift = linear * Vector3::new(lo[0] as f64, lo[1] as f64, lo[2] as f64);
    for r in 0..3 {
        affine[(r, 3)] += shift[r];
    }

    let mut data = vec![0u32; new_dims[0] * new_dims[1] * new_dims[2]];
    let src = vol.data();
    let mut out_idx = 0usize;
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            let row = dims[0] * (j + dims[1] * k);
            for i in lo[0]..=hi[0] {
                data[out_idx] = src[row + i];
                out_idx += 1;
            }
        }
    }
    LabelVolume::new(new_dims, affine, data)
}
