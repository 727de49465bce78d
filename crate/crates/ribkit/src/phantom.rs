//! Synthetic voxel phantoms with closed-form geometry.
//!
//! Tubes are swept along parametric curves whose arc length is known
//! exactly, so measured lengths can be checked against an analytic oracle.
//! [`build_scene`] assembles a miniature rib cage — stacked vertebra balls
//! with one arc-shaped rib per side — with the construction parameters
//! attached as ground truth.

use nalgebra::{Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::Side;
use crate::morphology;
use crate::volume::{diag_affine, LabelVolume, WorldPoint};

/// Curve geometry with a closed-form arc length.
#[derive(Debug, Clone)]
pub enum CurveKind {
    Line {
        start: WorldPoint,
        end: WorldPoint,
    },
    /// `point(theta) = center + radius (cos(theta) u + sin(theta) v)`.
    Arc {
        center: WorldPoint,
        u: Vector3<f64>,
        v: Vector3<f64>,
        radius: f64,
        theta_start: f64,
        theta_end: f64,
    },
    /// Rises along `u × v` by `pitch` per full turn, starting at angle 0.
    Helix {
        center: WorldPoint,
        u: Vector3<f64>,
        v: Vector3<f64>,
        radius: f64,
        pitch: f64,
        turns: f64,
    },
}

/// A tube: a curve plus its radius and the voxel spacing it is meant for.
#[derive(Debug, Clone)]
pub struct CurveSpec {
    pub kind: CurveKind,
    pub tube_radius: f64,
    pub spacing: f64,
}

fn orthonormal_pair(u: Vector3<f64>, v: Vector3<f64>) -> Result<(Vector3<f64>, Vector3<f64>)> {
    if u.norm() < 1e-9 {
        return Err(Error::InvalidRecord("curve basis u is zero".into()));
    }
    let un = u.normalize();
    let vp = v - un * v.dot(&un);
    if vp.norm() < 1e-9 {
        return Err(Error::InvalidRecord(
            "curve basis vectors are parallel".into(),
        ));
    }
    Ok((un, vp.normalize()))
}

impl CurveSpec {
    pub fn line(start: WorldPoint, end: WorldPoint, tube_radius: f64, spacing: f64) -> Result<Self> {
        Self::validated(CurveKind::Line { start, end }, tube_radius, spacing)
    }

    #[allow(clippy::too_many_arguments)] // mirrors the geometric parameterization
    pub fn arc(
        center: WorldPoint,
        u: Vector3<f64>,
        v: Vector3<f64>,
        radius: f64,
        theta_start: f64,
        theta_end: f64,
        tube_radius: f64,
        spacing: f64,
    ) -> Result<Self> {
        if radius <= 0.0 || theta_end == theta_start {
            return Err(Error::InvalidRecord("degenerate arc parameters".into()));
        }
        let (u, v) = orthonormal_pair(u, v)?;
        Self::validated(
            CurveKind::Arc {
                center,
                u,
                v,
                radius,
                theta_start,
                theta_end,
            },
            tube_radius,
            spacing,
        )
    }

    #[allow(clippy::too_many_arguments)] // mirrors the geometric parameterization
    pub fn helix(
        center: WorldPoint,
        u: Vector3<f64>,
        v: Vector3<f64>,
        radius: f64,
        pitch: f64,
        turns: f64,
        tube_radius: f64,
        spacing: f64,
    ) -> Result<Self> {
        if radius <= 0.0 || turns <= 0.0 {
            return Err(Error::InvalidRecord("degenerate helix parameters".into()));
        }
        let (u, v) = orthonormal_pair(u, v)?;
        Self::validated(
            CurveKind::Helix {
                center,
                u,
                v,
                radius,
                pitch,
                turns,
            },
            tube_radius,
            spacing,
        )
    }

    fn validated(kind: CurveKind, tube_radius: f64, spacing: f64) -> Result<Self> {
        if !spacing.is_finite() || spacing <= 0.0 {
            return Err(Error::InvalidRecord("spacing must be positive".into()));
        }
        if tube_radius < 2.0 * spacing {
            return Err(Error::InvalidRecord(format!(
                "tube radius {tube_radius} below twice the spacing {spacing}"
            )));
        }
        Ok(Self {
            kind,
            tube_radius,
            spacing,
        })
    }

    /// Exact arc length in mm.
    pub fn analytic_length(&self) -> f64 {
        match &self.kind {
            CurveKind::Line { start, end } => (end - start).norm(),
            CurveKind::Arc {
                radius,
                theta_start,
                theta_end,
                ..
            } => radius * (theta_end - theta_start).abs(),
            CurveKind::Helix {
                radius,
                pitch,
                turns,
                ..
            } => {
                let circumference = 2.0 * std::f64::consts::PI * radius;
                turns * (circumference * circumference + pitch * pitch).sqrt()
            }
        }
    }

    /// Point at normalized parameter `t` in `[0, 1]`.
    pub fn point_at(&self, t: f64) -> WorldPoint {
        match &self.kind {
            CurveKind::Line { start, end } => start + (end - start) * t,
            CurveKind::Arc {
                center,
                u,
                v,
                radius,
                theta_start,
                theta_end,
            } => {
                let th = theta_start + t * (theta_end - theta_start);
                center + (u * th.cos() + v * th.sin()) * *radius
            }
            CurveKind::Helix {
                center,
                u,
                v,
                radius,
                pitch,
                turns,
            } => {
                let th = t * turns * 2.0 * std::f64::consts::PI;
                let w = u.cross(v);
                center
                    + (u * th.cos() + v * th.sin()) * *radius
                    + w * (pitch * th / (2.0 * std::f64::consts::PI))
            }
        }
    }

    /// Unit tangent at normalized parameter `t`, oriented along increasing `t`.
    pub fn tangent_at(&self, t: f64) -> Vector3<f64> {
        match &self.kind {
            CurveKind::Line { start, end } => {
                let d = end - start;
                if d.norm() < 1e-12 {
                    Vector3::x()
                } else {
                    d.normalize()
                }
            }
            CurveKind::Arc {
                u,
                v,
                theta_start,
                theta_end,
                ..
            } => {
                let th = theta_start + t * (theta_end - theta_start);
                let d = -u * th.sin() + v * th.cos();
                if theta_end >= theta_start {
                    d
                } else {
                    -d
                }
            }
            CurveKind::Helix {
                u,
                v,
                radius,
                pitch,
                turns,
                ..
            } => {
                let th = t * turns * 2.0 * std::f64::consts::PI;
                let w = u.cross(v);
                let d = (-u * th.sin() + v * th.cos()) * *radius
                    + w * (pitch / (2.0 * std::f64::consts::PI));
                d.normalize()
            }
        }
    }

    /// Total turning angle in degrees; decides whether flat end caps apply.
    fn turning_deg(&self) -> f64 {
        match &self.kind {
            CurveKind::Line { .. } => 0.0,
            CurveKind::Arc {
                theta_start,
                theta_end,
                ..
            } => (theta_end - theta_start).abs().to_degrees(),
            CurveKind::Helix { turns, .. } => turns * 360.0,
        }
    }
}

/// Plane pair that trims a tube to flat end faces.
#[derive(Clone, Copy)]
struct EndClip {
    start: WorldPoint,
    start_dir: Vector3<f64>,
    end: WorldPoint,
    end_dir: Vector3<f64>,
}

impl EndClip {
    fn keeps(&self, p: WorldPoint) -> bool {
        (p - self.start).dot(&self.start_dir) >= 0.0 && (p - self.end).dot(&self.end_dir) <= 0.0
    }
}

/// Incremental scene assembly with overlap detection.
pub struct PhantomBuilder {
    dims: [usize; 3],
    affine: Matrix4<f64>,
    spacing: [f64; 3],
    origin: [f64; 3],
    data: Vec<u32>,
}

impl PhantomBuilder {
    pub fn new(dims: [usize; 3], affine: Matrix4<f64>) -> Result<Self> {
        let probe = LabelVolume::filled(dims, affine, 0)?;
        morphology::require_axis_aligned(&probe)?;
        Ok(Self {
            dims,
            affine,
            spacing: probe.spacing(),
            origin: [affine[(0, 3)], affine[(1, 3)], affine[(2, 3)]],
            data: vec![0u32; dims[0] * dims[1] * dims[2]],
        })
    }

    /// Marks all voxels whose center lies within `radius` of `center`.
    ///
    /// Fails with [`Error::ExceedsGrid`] when the ball's bounding box does
    /// not keep a one-voxel margin, and with [`Error::SceneOverlap`] when a
    /// voxel already carries a different label.
    pub fn stamp_ball(&mut self, center: WorldPoint, radius: f64, label: u32) -> Result<()> {
        self.stamp_ball_clipped(center, radius, label, None)
    }

    fn stamp_ball_clipped(
        &mut self,
        center: WorldPoint,
        radius: f64,
        label: u32,
        clip: Option<&EndClip>,
    ) -> Result<()> {
        let c = [center.x, center.y, center.z];
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            let lo_f = ((c[a] - radius - self.origin[a]) / self.spacing[a]).ceil();
            let hi_f = ((c[a] + radius - self.origin[a]) / self.spacing[a]).floor();
            if lo_f < 1.0 || hi_f > self.dims[a] as f64 - 2.0 {
                return Err(Error::ExceedsGrid);
            }
            if hi_f < lo_f {
                return Ok(()); // ball falls between voxel centers
            }
            lo[a] = lo_f as usize;
            hi[a] = hi_f as usize;
        }
        let r2 = radius * radius;
        for k in lo[2]..=hi[2] {
            let dz = self.origin[2] + k as f64 * self.spacing[2] - c[2];
            for j in lo[1]..=hi[1] {
                let dy = self.origin[1] + j as f64 * self.spacing[1] - c[1];
                for i in lo[0]..=hi[0] {
                    let dx = self.origin[0] + i as f64 * self.spacing[0] - c[0];
                    if dx * dx + dy * dy + dz * dz > r2 {
                        continue;
                    }
                    if let Some(cl) = clip {
                        let p = WorldPoint::new(c[0] + dx, c[1] + dy, c[2] + dz);
                        if !cl.keeps(p) {
                            continue;
                        }
                    }
                    let idx = i + self.dims[0] * (j + self.dims[1] * k);
                    let cur = self.data[idx];
                    if cur == 0 {
                        self.data[idx] = label;
                    } else if cur != label {
                        return Err(Error::SceneOverlap(i, j, k));
                    }
                }
            }
        }
        Ok(())
    }

    /// Sweeps a ball along the curve at quarter-spacing steps.
    ///
    /// Tubes that turn less than 170 degrees get flat end faces (the swept
    /// union is trimmed by the end-tangent planes); stronger turners keep
    /// rounded caps since the trim planes would cut the tube body.
    pub fn stamp_tube(&mut self, spec: &CurveSpec, label: u32) -> Result<()> {
        let len = spec.analytic_length();
        let min_spacing = self.spacing.iter().cloned().fold(f64::INFINITY, f64::min);
        if len < 1e-9 {
            return self.stamp_ball(spec.point_at(0.0), spec.tube_radius, label);
        }
        let clip_store;
        let clip = if spec.turning_deg() < 170.0 {
            clip_store = EndClip {
                start: spec.point_at(0.0),
                start_dir: spec.tangent_at(0.0),
                end: spec.point_at(1.0),
                end_dir: spec.tangent_at(1.0),
            };
            Some(&clip_store)
        } else {
            None
        };
        let step = spec.spacing.min(min_spacing) / 4.0;
        let n = (len / step).ceil().max(1.0) as usize;
        for s in 0..=n {
            let t = s as f64 / n as f64;
            self.stamp_ball_clipped(spec.point_at(t), spec.tube_radius, label, clip)?;
        }
        Ok(())
    }

    pub fn finish(self) -> LabelVolume {
        LabelVolume::new(self.dims, self.affine, self.data).expect("builder grid is valid")
    }
}

/// Grid that contains all `(point, radius)` spheres with a two-voxel pad.
///
/// The origin snaps down to the spacing lattice so voxel centers sit at
/// integer multiples of the spacing; mirror-symmetric scenes then voxelize
/// mirror-symmetrically.
fn fitting_grid(items: &[(WorldPoint, f64)], spacing: f64) -> (usize, [usize; 3], Matrix4<f64>) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for (p, r) in items {
        let c = [p.x, p.y, p.z];
        for a in 0..3 {
            lo[a] = lo[a].min(c[a] - r - 2.0 * spacing);
            hi[a] = hi[a].max(c[a] + r + 2.0 * spacing);
        }
    }
    let mut dims = [0usize; 3];
    for a in 0..3 {
        lo[a] = (lo[a] / spacing).floor() * spacing;
        dims[a] = ((hi[a] - lo[a]) / spacing).ceil() as usize + 1;
    }
    let total = dims[0] * dims[1] * dims[2];
    (total, dims, diag_affine([spacing; 3], lo))
}

fn curve_extremes(spec: &CurveSpec) -> Vec<(WorldPoint, f64)> {
    (0..=64)
        .map(|s| (spec.point_at(s as f64 / 64.0), spec.tube_radius))
        .collect()
}

/// Voxelizes one tube on an automatically sized grid (binary labels).
pub fn voxelize_tube(spec: &CurveSpec) -> Result<LabelVolume> {
    let (_, dims, affine) = fitting_grid(&curve_extremes(spec), spec.spacing);
    let mut b = PhantomBuilder::new(dims, affine)?;
    b.stamp_tube(spec, 1)?;
    Ok(b.finish())
}

/// Voxelizes one tube into a caller-provided grid (binary labels).
pub fn voxelize_tube_in_grid(
    spec: &CurveSpec,
    dims: [usize; 3],
    affine: Matrix4<f64>,
) -> Result<LabelVolume> {
    let mut b = PhantomBuilder::new(dims, affine)?;
    b.stamp_tube(spec, 1)?;
    Ok(b.finish())
}

// Scene geometry. All lengths in mm; the arc plane droops about the
// lateral axis so ribs descend toward their anterior ends.
const VERTEBRA_RADIUS: f64 = 12.0;
const LEVEL_SPACING: f64 = 35.0;
const ARC_RADIUS: f64 = 60.0;
const RIB_TUBE_RADIUS: f64 = 4.0;
const DROOP_RAD: f64 = 20.0 * std::f64::consts::PI / 180.0;
const START_LATERAL: f64 = 16.0;
const CENTER_LATERAL: f64 = 30.0;
const START_POSTERIOR: f64 = -9.0;
const THETA_END: f64 = 150.0 * std::f64::consts::PI / 180.0;
/// Superior-inferior shift applied to each supernumerary rib.
const EXTRA_RIB_DROP: f64 = 10.0;
/// First vertebra label; ribs are labeled 1 upward.
pub const VERTEBRA_LABEL_BASE: u32 = 101;

/// Longest rib the default scene arc can represent.
pub fn full_rib_length() -> f64 {
    ARC_RADIUS * (THETA_END - theta_start())
}

fn theta_start() -> f64 {
    ((START_LATERAL - CENTER_LATERAL) / ARC_RADIUS).asin()
}

/// Construction record for one generated rib.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RibTruth {
    pub label: u32,
    pub level: usize,
    pub side: Side,
    pub vertebra_label: u32,
    pub length_mm: f64,
    pub tube_radius_mm: f64,
    pub start: [f64; 3],
    pub centroid_hint: [f64; 3],
    /// Supernumerary ribs exceed the one-rib-per-side capacity and are
    /// expected to end up orphaned by assignment.
    pub expect_orphan: bool,
}

/// Construction record for one generated vertebra.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VertebraTruth {
    pub label: u32,
    pub level: usize,
    pub center: [f64; 3],
    pub radius_mm: f64,
    /// Row-major frame; identity by construction (anterior corpus offset).
    pub frame: [[f64; 3]; 3],
}

/// Ground truth attached to a generated scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneTruth {
    pub vertebrae: Vec<VertebraTruth>,
    pub ribs: Vec<RibTruth>,
}

/// A generated scene: one combined label volume plus its construction truth.
///
/// Rib labels count up from 1; vertebra labels from
/// [`VERTEBRA_LABEL_BASE`]. `curves` parallels `truth.ribs`.
pub struct PhantomScene {
    pub combined: LabelVolume,
    pub truth: SceneTruth,
    pub curves: Vec<CurveSpec>,
}

impl PhantomScene {
    fn filtered(&self, keep: impl Fn(u32) -> u32) -> LabelVolume {
        let data: Vec<u32> = self.combined.data().iter().map(|&l| keep(l)).collect();
        LabelVolume::new(self.combined.dims(), *self.combined.affine(), data)
            .expect("same grid")
    }

    /// Rib instances only, construction labels preserved.
    pub fn rib_volume(&self) -> LabelVolume {
        self.filtered(|l| if l != 0 && l < VERTEBRA_LABEL_BASE { l } else { 0 })
    }

    /// Binary rib mask, as the measurement pipeline expects it.
    pub fn rib_mask(&self) -> LabelVolume {
        self.filtered(|l| u32::from(l != 0 && l < VERTEBRA_LABEL_BASE))
    }

    /// Vertebra instances only.
    pub fn vertebra_volume(&self) -> LabelVolume {
        self.filtered(|l| if l >= VERTEBRA_LABEL_BASE { l } else { 0 })
    }

    /// Corpus (vertebral body) mask: the anterior half of each vertebra,
    /// carrying the vertebra label. Stands in for the body submask a real
    /// vertebra segmentation provides, so frame construction can stay
    /// data-driven under arbitrary scene orientations.
    pub fn corpus_volume(&self) -> LabelVolume {
        let verts = self.vertebra_volume();
        let mut data = verts.data().to_vec();
        for (idx, l) in data.iter_mut().enumerate() {
            if *l == 0 {
                continue;
            }
            let center_y = self
                .truth
                .vertebrae
                .iter()
                .find(|v| v.label == *l)
                .expect("stamped label has a truth record")
                .center[1];
            let c = verts.coord_of(idx);
            if verts.voxel_center(c.i, c.j, c.k).y <= center_y {
                *l = 0;
            }
        }
        LabelVolume::new(verts.dims(), *verts.affine(), data).expect("same grid")
    }

    /// Truth record for the rib whose sampled centroid is nearest `p`.
    pub fn rib_truth_near(&self, p: WorldPoint) -> &RibTruth {
        self.truth
            .ribs
            .iter()
            .min_by(|a, b| {
                let da = (WorldPoint::new(a.centroid_hint[0], a.centroid_hint[1], a.centroid_hint[2]) - p).norm();
                let db = (WorldPoint::new(b.centroid_hint[0], b.centroid_hint[1], b.centroid_hint[2]) - p).norm();
                da.partial_cmp(&db).unwrap()
            })
            .expect("scene has ribs")
    }
}

/// Arc for one rib. Supernumerary ribs shift inferiorly by
/// `EXTRA_RIB_DROP` per rank so tubes stay disjoint.
fn rib_curve(
    level_z: f64,
    side: Side,
    rank: usize,
    length_mm: f64,
    spacing: f64,
) -> Result<CurveSpec> {
    let ts = theta_start();
    let te = ts + length_mm / ARC_RADIUS;
    let (sin_d, cos_d) = DROOP_RAD.sin_cos();
    let u = Vector3::new(0.0, -cos_d, sin_d);
    let v = match side {
        Side::Right => Vector3::x(),
        Side::Left => -Vector3::x(),
    };
    let cx = match side {
        Side::Right => CENTER_LATERAL,
        Side::Left => -CENTER_LATERAL,
    };
    let z0 = level_z - rank as f64 * EXTRA_RIB_DROP;
    let center = WorldPoint::new(
        cx,
        START_POSTERIOR + ARC_RADIUS * ts.cos() * cos_d,
        z0 - ARC_RADIUS * ts.cos() * sin_d,
    );
    CurveSpec::arc(center, u, v, ARC_RADIUS, ts, te, RIB_TUBE_RADIUS, spacing)
}

/// Builds a stacked-vertebra scene with `ribs_per_side` ribs per side and
/// level. `stumps` truncates the primary rib of the named (level, side)
/// pairs to the given arc length in mm.
pub fn build_scene(
    levels: usize,
    ribs_per_side: usize,
    stumps: &[(usize, Side, f64)],
    spacing: f64,
) -> Result<PhantomScene> {
    if levels == 0 || ribs_per_side == 0 {
        return Err(Error::InvalidRecord(
            "scene needs at least one level and one rib per side".into(),
        ));
    }
    let full = full_rib_length();
    for &(level, _, len) in stumps {
        if level >= levels {
            return Err(Error::InvalidRecord(format!(
                "stump level {level} outside 0..{levels}"
            )));
        }
        if !(len > 0.0 && len <= full) {
            return Err(Error::InvalidRecord(format!(
                "stump length {len} outside (0, {full:.1}]"
            )));
        }
    }

    let mut curves: Vec<CurveSpec> = Vec::new();
    let mut ribs: Vec<RibTruth> = Vec::new();
    let mut vertebrae: Vec<VertebraTruth> = Vec::new();
    let mut next_rib_label = 1u32;
    for level in 0..levels {
        let z = level as f64 * LEVEL_SPACING;
        let vlabel = VERTEBRA_LABEL_BASE + level as u32;
        vertebrae.push(VertebraTruth {
            label: vlabel,
            level,
            center: [0.0, 0.0, z],
            radius_mm: VERTEBRA_RADIUS,
            frame: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        });
        for side in [Side::Right, Side::Left] {
            for rank in 0..ribs_per_side {
                let length = if rank == 0 {
                    stumps
                        .iter()
                        .find(|&&(l, s, _)| l == level && s == side)
                        .map(|&(_, _, len)| len)
                        .unwrap_or(full)
                } else {
                    full
                };
                let curve = rib_curve(z, side, rank, length, spacing)?;
                let start = curve.point_at(0.0);
                let samples = 100usize;
                let mut hint = Vector3::zeros();
                for s in 0..=samples {
                    hint += curve.point_at(s as f64 / samples as f64).coords;
                }
                hint /= (samples + 1) as f64;
                ribs.push(RibTruth {
                    label: next_rib_label,
                    level,
                    side,
                    vertebra_label: vlabel,
                    length_mm: length,
                    tube_radius_mm: RIB_TUBE_RADIUS,
                    start: [start.x, start.y, start.z],
                    centroid_hint: [hint.x, hint.y, hint.z],
                    expect_orphan: rank > 0,
                });
                curves.push(curve);
                next_rib_label += 1;
            }
        }
    }

    let mut extremes: Vec<(WorldPoint, f64)> = Vec::new();
    for v in &vertebrae {
        extremes.push((
            WorldPoint::new(v.center[0], v.center[1], v.center[2]),
            v.radius_mm,
        ));
    }
    for c in &curves {
        extremes.extend(curve_extremes(c));
    }
    let (_, dims, affine) = fitting_grid(&extremes, spacing);

    let mut builder = PhantomBuilder::new(dims, affine)?;
    for v in &vertebrae {
        builder.stamp_ball(
            WorldPoint::new(v.center[0], v.center[1], v.center[2]),
            v.radius_mm,
            v.label,
        )?;
    }
    for (curve, rib) in curves.iter().zip(ribs.iter()) {
        builder.stamp_tube(curve, rib.label)?;
    }

    Ok(PhantomScene {
        combined: builder.finish(),
        truth: SceneTruth { vertebrae, ribs },
        curves,
    })
}
