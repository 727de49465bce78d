//! Voxel-grid data model and world/voxel coordinate transforms.
//!
//! All geometry downstream of this module assumes the canonical RAS world
//! frame: +x Right, +y Anterior, +z Superior, coordinates in millimeters.
//! [`LabelVolume::reorient_ras`] brings any axis-dominant volume into a
//! layout whose affine has a positive dominant diagonal, so "posterior"
//! and "inferior" are simply negative y/z directions.

use nalgebra::{Matrix3, Matrix4, Point3, Vector3, Vector4};

use crate::error::{Error, Result};

/// A position in world space (mm, RAS frame).
pub type WorldPoint = Point3<f64>;

/// Relative tolerance for the spacing-vs-affine consistency invariant.
pub const SPACING_REL_TOL: f64 = 1e-6;

/// Integer grid index into a [`LabelVolume`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct VoxelCoord {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl VoxelCoord {
    pub fn new(i: usize, j: usize, k: usize) -> Self {
        Self { i, j, k }
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.i, self.j, self.k]
    }
}

/// Dense 3-D grid of non-negative integer labels with a world transform.
///
/// `data` is stored with the first axis fastest-varying (Fortran order,
/// as in NIfTI): `data[i + dims[0] * (j + dims[1] * k)]`.
///
/// Immutable after construction; shared references are safe to read from
/// any number of threads.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: Matrix4<f64>,
    data: Vec<u32>,
}

impl LabelVolume {
    /// Builds a volume, deriving spacing from the affine column norms.
    pub fn new(dims: [usize; 3], affine: Matrix4<f64>, data: Vec<u32>) -> Result<Self> {
        let expected = dims[0]
            .checked_mul(dims[1])
            .and_then(|n| n.checked_mul(dims[2]))
            .ok_or(Error::MalformedHeader("dimension product overflows".into()))?;
        if dims.contains(&0) {
            return Err(Error::MalformedHeader("zero-sized dimension".into()));
        }
        if data.len() != expected {
            return Err(Error::DataLengthMismatch {
                expected,
                got: data.len(),
            });
        }
        if !affine.iter().all(|v| v.is_finite()) {
            return Err(Error::MalformedHeader("non-finite affine entry".into()));
        }
        let linear = affine.fixed_view::<3, 3>(0, 0).into_owned();
        if linear.determinant().abs() < 1e-12 {
            return Err(Error::SingularAffine);
        }
        let spacing = [
            linear.column(0).norm(),
            linear.column(1).norm(),
            linear.column(2).norm(),
        ];
        Ok(Self {
            dims,
            spacing,
            affine,
            data,
        })
    }

    /// Uniform volume filled with a single label.
    pub fn filled(dims: [usize; 3], affine: Matrix4<f64>, label: u32) -> Result<Self> {
        let n = dims[0] * dims[1] * dims[2];
        Self::new(dims, affine, vec![label; n])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Matrix4<f64> {
        &self.affine
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    pub fn num_voxels(&self) -> usize {
        self.data.len()
    }

    /// World volume of one voxel in mm^3 (|det| of the 3x3 block).
    pub fn voxel_volume_mm3(&self) -> f64 {
        self.affine
            .fixed_view::<3, 3>(0, 0)
            .into_owned()
            .determinant()
            .abs()
    }

    #[inline]
    pub fn index_of(&self, v: VoxelCoord) -> usize {
        v.i + self.dims[0] * (v.j + self.dims[1] * v.k)
    }

    /// Inverse of [`Self::index_of`].
    #[inline]
    pub fn coord_of(&self, idx: usize) -> VoxelCoord {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        VoxelCoord::new(i, rest % self.dims[1], rest / self.dims[1])
    }

    #[inline]
    pub fn in_bounds(&self, i: i64, j: i64, k: i64) -> bool {
        i >= 0
            && j >= 0
            && k >= 0
            && (i as usize) < self.dims[0]
            && (j as usize) < self.dims[1]
            && (k as usize) < self.dims[2]
    }

    #[inline]
    pub fn label(&self, v: VoxelCoord) -> u32 {
        self.data[self.index_of(v)]
    }

    /// Label at signed indices; 0 outside the grid.
    #[inline]
    pub fn label_or_zero(&self, i: i64, j: i64, k: i64) -> u32 {
        if self.in_bounds(i, j, k) {
            self.data[i as usize + self.dims[0] * (j as usize + self.dims[1] * k as usize)]
        } else {
            0
        }
    }

    /// Sorted distinct labels, excluding background 0.
    pub fn distinct_labels(&self) -> Vec<u32> {
        let mut labels: Vec<u32> = self.data.iter().copied().filter(|&l| l != 0).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    pub fn voxel_to_world(&self, v: VoxelCoord) -> Result<WorldPoint> {
        if !self.in_bounds(v.i as i64, v.j as i64, v.k as i64) {
            return Err(Error::OutOfBounds {
                i: v.i as i64,
                j: v.j as i64,
                k: v.k as i64,
                d0: self.dims[0],
                d1: self.dims[1],
                d2: self.dims[2],
            });
        }
        Ok(self.voxel_center(v.i, v.j, v.k))
    }

    /// World position of a voxel center; no bounds check.
    #[inline]
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> WorldPoint {
        let h = self.affine * Vector4::new(i as f64, j as f64, k as f64, 1.0);
        Point3::new(h.x, h.y, h.z)
    }

    /// Inverse affine; volumes always have an invertible 3x3 block.
    pub fn inverse_affine(&self) -> Matrix4<f64> {
        self.affine
            .try_inverse()
            .expect("affine invertibility checked at construction")
    }

    pub fn world_to_voxel(&self, p: WorldPoint) -> Result<VoxelCoord> {
        let inv = self.inverse_affine();
        let v = inv * Vector4::new(p.x, p.y, p.z, 1.0);
        let (i, j, k) = (v.x.round() as i64, v.y.round() as i64, v.z.round() as i64);
        if !self.in_bounds(i, j, k) {
            return Err(Error::OutOfBounds {
                i,
                j,
                k,
                d0: self.dims[0],
                d1: self.dims[1],
                d2: self.dims[2],
            });
        }
        Ok(VoxelCoord::new(i as usize, j as usize, k as usize))
    }

    /// Continuous voxel coordinates of a world point (no rounding).
    pub fn world_to_continuous(&self, p: WorldPoint) -> Vector3<f64> {
        let v = self.inverse_affine() * Vector4::new(p.x, p.y, p.z, 1.0);
        Vector3::new(v.x, v.y, v.z)
    }

    /// True when dims match and affines agree within `tol` (absolute, per entry).
    pub fn same_grid(&self, other: &Self, tol: f64) -> bool {
        self.dims == other.dims
            && self
                .affine
                .iter()
                .zip(other.affine.iter())
                .all(|(a, b)| (a - b).abs() <= tol)
    }

    /// Axis permutation and flips that make the affine RAS-dominant, or an
    /// error if no voxel axis dominates each world axis.
    pub fn ras_orientation(&self) -> Result<([usize; 3], [bool; 3])> {
        orientation_of(&self.affine)
    }

    /// Reorders voxel axes so each world axis is dominated by the matching
    /// voxel axis with positive sign. World positions of all voxels are
    /// preserved exactly.
    pub fn reorient_ras(&self) -> Result<Self> {
        let (perm, flips) = self.ras_orientation()?;
        if perm == [0, 1, 2] && flips == [false, false, false] {
            return Ok(self.clone());
        }
        Ok(self.apply_axis_transform(perm, flips))
    }

    /// Rearranges storage: new axis `a` takes old axis `perm[a]`, reversed
    /// when `flips[a]`. The affine is recomposed so every voxel keeps its
    /// world position.
    pub fn apply_axis_transform(&self, perm: [usize; 3], flips: [bool; 3]) -> Self {
        let new_dims = [
            self.dims[perm[0]],
            self.dims[perm[1]],
            self.dims[perm[2]],
        ];
        let mut new_affine = Matrix4::identity();
        let mut translation = Vector3::new(
            self.affine[(0, 3)],
            self.affine[(1, 3)],
            self.affine[(2, 3)],
        );
        for a in 0..3 {
            let o = perm[a];
            let col = Vector3::new(
                self.affine[(0, o)],
                self.affine[(1, o)],
                self.affine[(2, o)],
            );
            let signed = if flips[a] { -col } else { col };
            if flips[a] {
                translation += col * (self.dims[o] as f64 - 1.0);
            }
            for r in 0..3 {
                new_affine[(r, a)] = signed[r];
            }
        }
        for r in 0..3 {
            new_affine[(r, 3)] = translation[r];
        }

        let mut new_data = vec![0u32; self.data.len()];
        for nk in 0..new_dims[2] {
            for nj in 0..new_dims[1] {
                for ni in 0..new_dims[0] {
                    let n = [ni, nj, nk];
                    let mut old = [0usize; 3];
                    for a in 0..3 {
                        let o = perm[a];
                        old[o] = if flips[a] {
                            self.dims[o] - 1 - n[a]
                        } else {
                            n[a]
                        };
                    }
                    new_data[ni + new_dims[0] * (nj + new_dims[1] * nk)] =
                        self.data[old[0] + self.dims[0] * (old[1] + self.dims[1] * old[2])];
                }
            }
        }
        Self::new(new_dims, new_affine, new_data)
            .expect("axis transform preserves volume validity")
    }

    /// Applies a rigid world transform (e.g. a 90-degree rotation or a
    /// mirror) and re-canonicalizes the layout. Grid-exact for transforms
    /// that map grid axes onto grid axes.
    pub fn rigid_transform(&self, world: &Matrix4<f64>) -> Result<Self> {
        let moved = Self::new(self.dims, world * self.affine, self.data.clone())?;
        moved.reorient_ras()
    }
}

/// Rotation by 90 degrees about the world z (superior) axis, as a homogeneous
/// matrix: +x maps to +y.
pub fn rotation_z90() -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m[(0, 0)] = 0.0;
    m[(0, 1)] = -1.0;
    m[(1, 0)] = 1.0;
    m[(1, 1)] = 0.0;
    m
}

/// Mirror across the world x = 0 plane (left-right flip).
pub fn mirror_x() -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m[(0, 0)] = -1.0;
    m
}

fn orientation_of(affine: &Matrix4<f64>) -> Result<([usize; 3], [bool; 3])> {
    let m: Matrix3<f64> = affine.fixed_view::<3, 3>(0, 0).into_owned();
    // dominant world axis of each voxel axis
    let mut dominated = [usize::MAX; 3]; // world axis -> voxel axis
    for j in 0..3 {
        let col = m.column(j);
        let mut best = 0usize;
        for i in 1..3 {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        // strict dominance: the runner-up must be strictly smaller
        let runner_up = (0..3)
            .filter(|&i| i != best)
            .map(|i| col[i].abs())
            .fold(0.0f64, f64::max);
        if col[best].abs() <= runner_up {
            return Err(Error::NotAxisDominant);
        }
        if dominated[best] != usize::MAX {
            return Err(Error::NotAxisDominant);
        }
        dominated[best] = j;
    }
    let perm = dominated;
    let mut flips = [false; 3];
    for a in 0..3 {
        flips[a] = m[(a, perm[a])] < 0.0;
    }
    Ok((perm, flips))
}

/// Diagonal affine with the given spacing and translation.
pub fn diag_affine(spacing: [f64; 3], origin: [f64; 3]) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    for a in 0..3 {
        m[(a, a)] = spacing[a];
        m[(a, 3)] = origin[a];
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    fn small_volume() -> LabelVolume {
        let mut data = vec![0u32; 64];
        data[1 + 4 * (1 + 4)] = 7;
        LabelVolume::new([4, 4, 4], Matrix4::identity(), data).unwrap()
    }

    #[test]
    fn spacing_derived_from_affine_columns() {
        let aff = diag_affine([0.5, 0.7, 2.0], [1.0, 2.0, 3.0]);
        let vol = LabelVolume::filled([2, 3, 4], aff, 0).unwrap();
        assert_eq!(vol.spacing(), [0.5, 0.7, 2.0]);
    }

    #[test]
    fn voxel_to_world_identity() {
        let vol = small_volume();
        let p = vol.voxel_to_world(VoxelCoord::new(0, 0, 0)).unwrap();
        assert_eq!(p, Point3::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn voxel_to_world_scaled_translated() {
        let aff = diag_affine([0.5, 0.5, 0.5], [10.0, 0.0, 0.0]);
        let vol = LabelVolume::filled([4, 4, 4], aff, 0).unwrap();
        let p = vol.voxel_to_world(VoxelCoord::new(2, 0, 0)).unwrap();
        assert_eq!(p, Point3::new(11.0, 0.0, 0.0));
    }

    #[test]
    fn world_to_voxel_out_of_bounds() {
        let vol = small_volume();
        assert!(matches!(
            vol.world_to_voxel(Point3::new(40.0, 0.0, 0.0)),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn data_length_checked() {
        let r = LabelVolume::new([2, 2, 2], Matrix4::identity(), vec![0; 7]);
        assert!(matches!(r, Err(Error::DataLengthMismatch { .. })));
    }

    #[test]
    fn reorient_noop_on_canonical() {
        let vol = small_volume();
        let re = vol.reorient_ras().unwrap();
        assert_eq!(vol, re);
    }

    #[test]
    fn reorient_flip_preserves_world_positions() {
        // axis 0 flipped: LAS-style layout
        let mut aff = diag_affine([1.0, 1.0, 1.0], [3.0, 0.0, 0.0]);
        aff[(0, 0)] = -1.0;
        let mut data = vec![0u32; 64];
        data[2 + 4 * (1 + 4 * 3)] = 9;
        let vol = LabelVolume::new([4, 4, 4], aff, data).unwrap();
        let world_before = vol.voxel_to_world(VoxelCoord::new(2, 1, 3)).unwrap();

        let re = vol.reorient_ras().unwrap();
        let (perm, flips) = re.ras_orientation().unwrap();
        assert_eq!(perm, [0, 1, 2]);
        assert_eq!(flips, [false, false, false]);

        let hot: Vec<usize> = re
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == 9)
            .map(|(idx, _)| idx)
            .collect();
        assert_eq!(hot.len(), 1);
        let c = re.coord_of(hot[0]);
        let world_after = re.voxel_to_world(c).unwrap();
        assert!((world_before - world_after).norm() < 1e-9);
    }

    #[test]
    fn reorient_permutation_preserves_labels() {
        // volume stored as (j, k, i): column a of the affine moves world axis
        // ((a + 1) mod 3)
        let mut aff = Matrix4::identity();
        aff[(0, 0)] = 0.0;
        aff[(1, 1)] = 0.0;
        aff[(2, 2)] = 0.0;
        aff[(1, 0)] = 1.0;
        aff[(2, 1)] = 1.0;
        aff[(0, 2)] = 1.0;
        let mut data = vec![0u32; 2 * 3 * 4];
        data[1 + 2 * (2 + 3 * 3)] = 5;
        let vol = LabelVolume::new([2, 3, 4], aff, data).unwrap();
        let world_before = vol.voxel_to_world(VoxelCoord::new(1, 2, 3)).unwrap();

        let re = vol.reorient_ras().unwrap();
        assert_eq!(re.dims(), [4, 2, 3]);
        let hot: Vec<usize> = re
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == 5)
            .map(|(idx, _)| idx)
            .collect();
        assert_eq!(hot.len(), 1);
        let world_after = re.voxel_to_world(re.coord_of(hot[0])).unwrap();
        assert!((world_before - world_after).norm() < 1e-9);
    }

    #[test]
    fn oblique_affine_rejected() {
        // 45-degree rotation about z: no strict dominance
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut aff = Matrix4::identity();
        aff[(0, 0)] = s;
        aff[(1, 0)] = s;
        aff[(0, 1)] = -s;
        aff[(1, 1)] = s;
        let vol = LabelVolume::filled([2, 2, 2], aff, 0).unwrap();
        assert!(matches!(vol.reorient_ras(), Err(Error::NotAxisDominant)));
    }

    #[test]
    fn rigid_rotation_moves_content() {
        let mut data = vec![0u32; 27];
        data[2] = 3; // voxel (2,0,0) at world (2,0,0)
        let vol = LabelVolume::new([3, 3, 3], Matrix4::identity(), data).unwrap();
        let rot = vol.rigid_transform(&rotation_z90()).unwrap();
        let hot: Vec<usize> = rot
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == 3)
            .map(|(idx, _)| idx)
            .collect();
        assert_eq!(hot.len(), 1);
        let p = rot.voxel_to_world(rot.coord_of(hot[0])).unwrap();
        assert!((p - Point3::new(0.0, 2.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn roundtrip_random_coords() {
        let aff = diag_affine([0.5, 1.0, 2.0], [-7.0, 3.0, 0.5]);
        let vol = LabelVolume::filled([10, 9, 8], aff, 0).unwrap();
        // deterministic pseudo-random walk over the grid
        let mut state = 0x9e3779b97f4a7c15u64;
        for _ in 0..100 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let i = (state >> 33) as usize % 10;
            let j = (state >> 17) as usize % 9;
            let k = state as usize % 8;
            let c = VoxelCoord::new(i, j, k);
            let p = vol.voxel_to_world(c).unwrap();
            assert_eq!(vol.world_to_voxel(p).unwrap(), c);
        }
    }
}
