//! Rib length measurement: shell-averaged path stepping with a ray-cast
//! cone finish.
//!
//! The algorithm walks a polyline through the rib mask. Each step collects
//! the rib voxels in a fixed spherical shell around the newest path point,
//! drops those that have drifted back toward earlier points, and advances
//! halfway toward the survivors' mean. When the shell empties near the rib
//! tip, a cone of rays finds the farthest contiguous mask voxel and closes
//! the path. Length is the polyline length.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology;
use crate::volume::{LabelVolume, WorldPoint};

/// Ribs measuring at or under this length are stump (short) ribs.
pub const STUMP_THRESHOLD_MM: f64 = 38.0;

/// Distance between samples along each cone ray.
const RAY_SAMPLE_STEP_MM: f64 = 0.25;

/// Safety bound on path growth (~3.75 m of rib at full shell steps).
const MAX_ITERATIONS: usize = 500;

/// Tuning for the path walker. Defaults reproduce the reference setup.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RlmaConfig {
    /// Inner radius of the candidate shell.
    pub shell_min_mm: f64,
    /// Outer radius of the candidate shell.
    pub shell_max_mm: f64,
    /// Fraction of the mean-direction vector to advance per step.
    pub step_fraction: f64,
    /// Neighborhood radius for start-point refinement.
    pub start_refine_radius_mm: f64,
    /// Half-angle of the terminal ray cone.
    pub cone_half_angle_deg: f64,
    /// Number of rays in the terminal cone.
    pub cone_ray_count: usize,
    /// Longest advance a cone ray may report.
    pub cone_max_len_mm: f64,
    /// Isotropic working resolution for the mask.
    pub resample_mm: f64,
}

impl Default for RlmaConfig {
    fn default() -> Self {
        Self {
            shell_min_mm: 14.5,
            shell_max_mm: 15.5,
            step_fraction: 0.5,
            start_refine_radius_mm: 5.0,
            cone_half_angle_deg: 30.0,
            cone_ray_count: 64,
            cone_max_len_mm: 20.0,
            resample_mm: 0.5,
        }
    }
}

impl RlmaConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.shell_min_mm > 0.0
            && self.shell_min_mm < self.shell_max_mm
            && self.step_fraction > 0.0
            && self.step_fraction <= 1.0
            && self.start_refine_radius_mm > 0.0
            && self.cone_half_angle_deg > 0.0
            && self.cone_half_angle_deg < 90.0
            && self.cone_ray_count >= 1
            && self.cone_max_len_mm > 0.0
            && self.resample_mm > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidRecord(format!("invalid config: {self:?}")))
        }
    }
}

/// Why the path walker stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Shell emptied after at least one step; cone closed the path.
    ConeEnd,
    /// The very first shell was already empty (rib shorter than the shell).
    NoCandidates,
    /// Iteration cap hit; the mask is pathological.
    MaxIterations,
}

/// Measured rib path.
///
/// Consecutive iterative points are at most `shell_max_mm` apart; the final
/// cone segment is at most `cone_max_len_mm`.
#[derive(Debug, Clone)]
pub struct PathPolyline {
    pub points: Vec<WorldPoint>,
    pub length_mm: f64,
    pub termination: Termination,
}

impl PathPolyline {
    fn from_points(points: Vec<WorldPoint>, termination: Termination) -> Self {
        let length_mm = points
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .sum();
        Self {
            points,
            length_mm,
            termination,
        }
    }
}

/// True iff a measured length is a stump rib.
pub fn classify_stump(length_mm: f64, threshold_mm: f64) -> Result<bool> {
    if length_mm < 0.0 {
        return Err(Error::NegativeLength(length_mm));
    }
    Ok(length_mm <= threshold_mm)
}

/// Crops, resamples to the working resolution, and fills holes.
pub fn preprocess_rib(rib: &LabelVolume, cfg: &RlmaConfig) -> Result<LabelVolume> {
    if rib.data().iter().any(|&l| l > 1) {
        return Err(Error::NotBinary);
    }
    let cropped = morphology::crop_to_label(rib, 1, cfg.shell_max_mm + 2.0).map_err(|e| {
        if matches!(e, Error::LabelsAbsent) {
            Error::EmptyMask
        } else {
            e
        }
    })?;
    let resampled = morphology::resample_nearest(&cropped, cfg.resample_mm)?;
    morphology::fill_holes(&resampled)
}

/// Voxel-center point caches for one preprocessed rib.
struct RibField {
    vol: LabelVolume,
    pts: Vec<WorldPoint>,
    surface: Vec<WorldPoint>,
}

impl RibField {
    fn build(vol: LabelVolume) -> Result<Self> {
        let mut pts = Vec::new();
        for (idx, &l) in vol.data().iter().enumerate() {
            if l != 0 {
                let c = vol.coord_of(idx);
                pts.push(vol.voxel_center(c.i, c.j, c.k));
            }
        }
        if pts.is_empty() {
            return Err(Error::EmptyMask);
        }
        let surface = morphology::surface_voxels(&vol, 1)
            .iter()
            .map(|c| vol.voxel_center(c.i, c.j, c.k))
            .collect();
        Ok(Self { vol, pts, surface })
    }

    fn nearest(points: &[WorldPoint], target: WorldPoint) -> WorldPoint {
        let mut best = points[0];
        let mut best_d = f64::INFINITY;
        for &p in points {
            let d = (p - target).norm_squared();
            if d < best_d {
                best_d = d;
                best = p;
            }
        }
        best
    }

    fn start_point(&self, corpus_center: WorldPoint, cfg: &RlmaConfig) -> WorldPoint {
        let near_surface = Self::nearest(&self.surface, corpus_center);
        let r2 = cfg.start_refine_radius_mm * cfg.start_refine_radius_mm;
        let mut sum = Vector3::zeros();
        let mut n = 0usize;
        for &p in &self.pts {
            if (p - near_surface).norm_squared() <= r2 {
                sum += p.coords;
                n += 1;
            }
        }
        // n >= 1: the surface voxel itself is a rib voxel
        let mean = WorldPoint::from(sum / n as f64);
        Self::nearest(&self.surface, mean)
    }

    fn next_point(&self, path: &[WorldPoint], cfg: &RlmaConfig) -> Option<WorldPoint> {
        let last = *path.last().expect("path non-empty");
        let prior = &path[..path.len() - 1];
        let min2 = cfg.shell_min_mm * cfg.shell_min_mm;
        let max2 = cfg.shell_max_mm * cfg.shell_max_mm;
        let mut sum = Vector3::zeros();
        let mut n = 0usize;
        for &p in &self.pts {
            let d_last2 = (p - last).norm_squared();
            if d_last2 < min2 || d_last2 > max2 {
                continue;
            }
            if prior.iter().any(|&q| (p - q).norm_squared() < d_last2) {
                continue;
            }
            sum += p.coords;
            n += 1;
        }
        if n == 0 {
            return None;
        }
        let mean = WorldPoint::from(sum / n as f64);
        let target = last + (mean - last) * cfg.step_fraction;
        let next = Self::nearest(&self.pts, target);
        // zero advance would loop forever on a degenerate mask
        if (next - last).norm_squared() < 1e-18 {
            return None;
        }
        Some(next)
    }

    fn contains_world(&self, inv: &nalgebra::Matrix4<f64>, p: WorldPoint) -> bool {
        let v = inv * nalgebra::Vector4::new(p.x, p.y, p.z, 1.0);
        let (i, j, k) = (v.x.round() as i64, v.y.round() as i64, v.z.round() as i64);
        self.vol.in_bounds(i, j, k) && self.vol.label_or_zero(i, j, k) == 1
    }

    fn terminal_point(
        &self,
        path: &[WorldPoint],
        fallback_dir: Vector3<f64>,
        cfg: &RlmaConfig,
    ) -> WorldPoint {
        let last = *path.last().expect("path non-empty");
        let dir = if path.len() >= 2 {
            let d = last - path[path.len() - 2];
            if d.norm() > 1e-12 {
                d.normalize()
            } else {
                fallback_dir
            }
        } else {
            fallback_dir
        };
        let (e1, e2) = orthonormal_complement(dir);
        let inv = self.vol.inverse_affine();
        let cos_cap = cfg.cone_half_angle_deg.to_radians().cos();
        let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
        let steps = (cfg.cone_max_len_mm / RAY_SAMPLE_STEP_MM).floor() as usize;

        let mut best_dist = 0.0f64;
        let mut best_point = last;
        for i in 0..cfg.cone_ray_count {
            // spiral over the spherical cap, ray 0 exactly on axis
            let u = if cfg.cone_ray_count == 1 {
                1.0
            } else {
                1.0 - (1.0 - cos_cap) * i as f64 / (cfg.cone_ray_count - 1) as f64
            };
            let sin_t = (1.0 - u * u).max(0.0).sqrt();
            let phi = golden * i as f64;
            let ray = dir * u + (e1 * phi.cos() + e2 * phi.sin()) * sin_t;

            let mut reach = 0.0f64;
            let mut reach_point = last;
            for s in 1..=steps {
                let dist = s as f64 * RAY_SAMPLE_STEP_MM;
                let p = last + ray * dist;
                if !self.contains_world(&inv, p) {
                    break;
                }
                reach = dist;
                reach_point = p;
            }
            if reach > best_dist {
                best_dist = reach;
                best_point = reach_point;
            }
        }
        best_point
    }
}

/// Two unit vectors completing `dir` to an orthonormal basis.
///
/// Anchored to the superior axis so the ray pattern turns with the heading
/// under in-plane reorientation instead of staying pinned to world x/y.
fn orthonormal_complement(dir: Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let pick = if dir.z.abs() < 0.999 {
        Vector3::z()
    } else {
        Vector3::x()
    };
    let e1 = dir.cross(&pick).normalize();
    let e2 = dir.cross(&e1);
    (e1, e2)
}

/// First path point: nearest surface voxel to the corpus center, refined by
/// averaging the surrounding rib voxels and re-projecting to the surface.
///
/// `rib` must already be preprocessed (see [`preprocess_rib`]).
pub fn find_start_point(
    rib: &LabelVolume,
    corpus_center: WorldPoint,
    cfg: &RlmaConfig,
) -> Result<WorldPoint> {
    cfg.validate()?;
    let field = RibField::build(rib.clone())?;
    Ok(field.start_point(corpus_center, cfg))
}

/// One shell step, or `None` when the shell holds no usable candidates.
pub fn next_path_point(
    rib: &LabelVolume,
    path: &[WorldPoint],
    cfg: &RlmaConfig,
) -> Option<WorldPoint> {
    if path.is_empty() {
        return None;
    }
    let field = RibField::build(rib.clone()).ok()?;
    field.next_point(path, cfg)
}

/// Cone finish: the farthest contiguous in-mask point over a spiral of rays
/// around the last segment direction (`fallback_dir` for one-point paths).
/// Returns the last path point when no ray advances.
pub fn terminal_point(
    rib: &LabelVolume,
    path: &[WorldPoint],
    fallback_dir: Vector3<f64>,
    cfg: &RlmaConfig,
) -> WorldPoint {
    let field = match RibField::build(rib.clone()) {
        Ok(f) => f,
        Err(_) => return *path.last().expect("path non-empty"),
    };
    field.terminal_point(path, fallback_dir, cfg)
}

/// Measures one rib from its raw binary mask.
pub fn measure_rib(
    rib: &LabelVolume,
    corpus_center: WorldPoint,
    cfg: &RlmaConfig,
) -> Result<PathPolyline> {
    cfg.validate()?;
    let processed = preprocess_rib(rib, cfg)?;
    let field = RibField::build(processed)?;

    let start = field.start_point(corpus_center, cfg);
    let mut points = vec![start];
    let mut capped = true;
    for _ in 0..MAX_ITERATIONS {
        match field.next_point(&points, cfg) {
            Some(p) => points.push(p),
            None => {
                capped = false;
                break;
            }
        }
    }
    if capped {
        return Ok(PathPolyline::from_points(points, Termination::MaxIterations));
    }

    let termination = if points.len() == 1 {
        Termination::NoCandidates
    } else {
        Termination::ConeEnd
    };
    let outward = start - corpus_center;
    let fallback = if outward.norm() > 1e-9 {
        outward.normalize()
    } else {
        Vector3::x()
    };
    let terminal = field.terminal_point(&points, fallback, cfg);
    if (terminal - *points.last().unwrap()).norm() > 1e-12 {
        points.push(terminal);
    }
    Ok(PathPolyline::from_points(points, termination))
}
