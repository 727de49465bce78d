//! Rib instance extraction, vertebra-local frames, and rib-to-vertebra
//! assignment.
//!
//! Assignment is greedy over (rib, vertebra) pairs ordered by minimal
//! surface-to-surface distance. Each rib joins at most one vertebra and
//! each vertebra accepts at most one rib per side; leftovers are relabeled
//! into a reserved orphan range.

use std::collections::HashSet;
use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{self, Connectivity};
use crate::volume::{LabelVolume, WorldPoint};

/// First label handed out to unassigned rib components.
pub const ORPHAN_LABEL_START: u32 = 200;

/// Body side, relative to the vertebra-local frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Left => write!(f, "left"),
            Side::Right => write!(f, "right"),
        }
    }
}

/// One vertebra with its anatomic frame.
///
/// `frame` columns are the Right, Anterior, Superior unit vectors in world
/// coordinates; the matrix is orthonormal with determinant +1.
#[derive(Debug, Clone)]
pub struct VertebraInstance {
    pub label: u32,
    pub centroid: WorldPoint,
    pub corpus_centroid: WorldPoint,
    pub frame: Matrix3<f64>,
    /// Frame fell back to world axes because the corpus direction was
    /// degenerate.
    pub frame_degenerate: bool,
}

/// One connected rib component, possibly assigned to a vertebra.
#[derive(Debug, Clone)]
pub struct RibInstance {
    pub label: u32,
    pub voxel_count: usize,
    pub volume_mm3: f64,
    pub centroid: WorldPoint,
    pub vertebra: Option<u32>,
    pub side: Option<Side>,
}

impl RibInstance {
    /// Anatomic name derived from the assignment, e.g. `"103-right"`.
    pub fn anatomic_label(&self) -> Option<String> {
        match (self.vertebra, self.side) {
            (Some(v), Some(s)) => Some(format!("{v}-{s}")),
            _ => None,
        }
    }
}

/// Relabeling applied to a rib component that found no vertebra.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OrphanRelabel {
    pub old_label: u32,
    pub new_label: u32,
}

/// Full assignment outcome for one subject.
#[derive(Debug, Clone)]
pub struct AssignmentTable {
    pub ribs: Vec<RibInstance>,
    pub orphans: Vec<OrphanRelabel>,
}

#[derive(Serialize)]
struct RibRecord {
    label: u32,
    vertebra: Option<u32>,
    side: Option<String>,
    anatomic_label: Option<String>,
    voxel_count: usize,
    volume_mm3: f64,
    centroid: [f64; 3],
    orphan: bool,
    orphan_label: Option<u32>,
}

impl AssignmentTable {
    /// Serializes rib records (sorted by component label) as pretty JSON.
    pub fn to_json(&self) -> String {
        let mut records: Vec<RibRecord> = self
            .ribs
            .iter()
            .map(|r| {
                let orphan_label = self
                    .orphans
                    .iter()
                    .find(|o| o.old_label == r.label)
                    .map(|o| o.new_label);
                RibRecord {
                    label: r.label,
                    vertebra: r.vertebra,
                    side: r.side.map(|s| s.to_string()),
                    anatomic_label: r.anatomic_label(),
                    voxel_count: r.voxel_count,
                    volume_mm3: r.volume_mm3,
                    centroid: [r.centroid.x, r.centroid.y, r.centroid.z],
                    orphan: r.vertebra.is_none(),
                    orphan_label,
                }
            })
            .collect();
        records.sort_by_key(|r| r.label);
        serde_json::to_string_pretty(&records).expect("records are serializable")
    }
}

/// Splits a binary rib mask into connected components (26-neighborhood).
pub fn rib_components(rib_mask: &LabelVolume) -> Result<LabelVolume> {
    if rib_mask.data().iter().any(|&l| l > 1) {
        return Err(Error::NotBinary);
    }
    if rib_mask.data().iter().all(|&l| l == 0) {
        return Err(Error::EmptyMask);
    }
    Ok(morphology::connected_components(rib_mask, Connectivity::TwentySix))
}

/// Centroid of the vertebral corpus.
///
/// With an explicit corpus mask this is its centroid. Without one, the
/// anterior half of the vertebra stands in for the corpus: all mask voxels
/// whose anterior (world y) coordinate is at or beyond the mask's median.
pub fn corpus_center(
    vertebra: &LabelVolume,
    corpus: Option<&LabelVolume>,
) -> Result<WorldPoint> {
    if let Some(c) = corpus {
        return mask_centroid(c);
    }
    let pts = mask_points(vertebra)?;
    let mut ys: Vec<f64> = pts.iter().map(|p| p.y).collect();
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = ys.len();
    let median = if n % 2 == 1 {
        ys[n / 2]
    } else {
        0.5 * (ys[n / 2 - 1] + ys[n / 2])
    };
    let mut sum = Vector3::zeros();
    let mut count = 0usize;
    for p in &pts {
        if p.y >= median {
            sum += p.coords;
            count += 1;
        }
    }
    // count > 0: at least the maximal-y voxel satisfies y >= median
    Ok(WorldPoint::from(sum / count as f64))
}

fn mask_points(vol: &LabelVolume) -> Result<Vec<WorldPoint>> {
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
    Ok(pts)
}

fn mask_centroid(vol: &LabelVolume) -> Result<WorldPoint> {
    let pts = mask_points(vol)?;
    let sum: Vector3<f64> = pts.iter().map(|p| p.coords).sum();
    Ok(WorldPoint::from(sum / pts.len() as f64))
}

/// Vertebra frame plus a degeneracy flag.
#[derive(Debug, Clone, Copy)]
pub struct VertebraFrame {
    pub matrix: Matrix3<f64>,
    pub degenerate: bool,
}

/// Builds the vertebra-local frame.
///
/// Superior is the hint (normalized) or world +z. Anterior is the component
/// of (corpus center − vertebra centroid) orthogonal to Superior; Right
/// completes the right-handed triple. When the corpus direction projects to
/// (nearly) nothing, the frame falls back to world axes and is flagged.
pub fn vertebra_frame(
    vertebra: &LabelVolume,
    corpus_center: WorldPoint,
    superior_hint: Option<Vector3<f64>>,
) -> Result<VertebraFrame> {
    let centroid = mask_centroid(vertebra)?;
    let s = match superior_hint {
        Some(v) if v.norm() > 1e-12 => v.normalize(),
        Some(_) => {
            return Err(Error::InvalidRecord(
                "superior hint has zero length".into(),
            ))
        }
        None => Vector3::z(),
    };
    let raw = corpus_center - centroid;
    let perp = raw - s * raw.dot(&s);
    if perp.norm() < 1e-6 {
        return Ok(VertebraFrame {
            matrix: Matrix3::identity(),
            degenerate: true,
        });
    }
    let a = perp.normalize();
    let r = a.cross(&s);
    Ok(VertebraFrame {
        matrix: Matrix3::from_columns(&[r, a, s]),
        degenerate: false,
    })
}

/// Builds one [`VertebraInstance`] per distinct label in `verts`.
///
/// When `corpus` is given it must carry the same labels on the same grid;
/// labels missing from it fall back to the anterior-half rule.
pub fn vertebra_instances(
    verts: &LabelVolume,
    corpus: Option<&LabelVolume>,
    superior_hint: Option<Vector3<f64>>,
) -> Result<Vec<VertebraInstance>> {
    let labels = verts.distinct_labels();
    if labels.is_empty() {
        return Err(Error::EmptyMask);
    }
    if let Some(c) = corpus {
        if !c.same_grid(verts, 1e-6) {
            return Err(Error::GridMismatch(
                "corpus mask grid differs from vertebra grid".into(),
            ));
        }
    }
    let mut out = Vec::with_capacity(labels.len());
    for label in labels {
        let mask = morphology::binarize(verts, label)?;
        let corpus_mask = corpus
            .map(|c| morphology::binarize(c, label))
            .transpose()
            .or_else(|e| match e {
                Error::LabelsAbsent => Ok(None),
                other => Err(other),
            })?;
        let cc = corpus_center(&mask, corpus_mask.as_ref())?;
        let frame = vertebra_frame(&mask, cc, superior_hint)?;
        out.push(VertebraInstance {
            label,
            centroid: mask_centroid(&mask)?,
            corpus_centroid: cc,
            frame: frame.matrix,
            frame_degenerate: frame.degenerate,
        });
    }
    Ok(out)
}

/// Side of a rib relative to a vertebra: the sign of the Right component of
/// the centroid offset in the vertebra frame.
pub fn determine_side(rib_centroid: WorldPoint, vertebra: &VertebraInstance) -> Result<Side> {
    let local = vertebra.frame.transpose() * (rib_centroid - vertebra.centroid);
    if local.x > 1e-6 {
        Ok(Side::Right)
    } else if local.x < -1e-6 {
        Ok(Side::Left)
    } else {
        Err(Error::AmbiguousSide)
    }
}

/// Greedy rib-to-vertebra assignment.
///
/// Pairs are visited by ascending minimal surface-to-surface distance
/// (ties: rib label, then vertebra label). A pair is accepted when the rib
/// is still free and the vertebra has no rib on that side yet; pairs whose
/// side is ambiguous are skipped. Unassigned ribs are relabeled from
/// [`ORPHAN_LABEL_START`] upward in component-label order.
pub fn assign_ribs(
    rib_components: &LabelVolume,
    vert_volume: &LabelVolume,
    vertebrae: &[VertebraInstance],
) -> Result<AssignmentTable> {
    if !rib_components.same_grid(vert_volume, 1e-6) {
        return Err(Error::GridMismatch(
            "rib and vertebra volumes are on different grids".into(),
        ));
    }
    let rib_labels = rib_components.distinct_labels();
    if rib_labels.is_empty() {
        return Err(Error::EmptyMask);
    }

    let mut ribs: Vec<RibInstance> = Vec::with_capacity(rib_labels.len());
    let mut rib_surfaces: Vec<Vec<WorldPoint>> = Vec::with_capacity(rib_labels.len());
    for &label in &rib_labels {
        let surf = morphology::surface_voxels(rib_components, label);
        rib_surfaces.push(
            surf.iter()
                .map(|c| rib_components.voxel_center(c.i, c.j, c.k))
                .collect(),
        );
        ribs.push(RibInstance {
            label,
            voxel_count: morphology::label_count(rib_components, label),
            volume_mm3: morphology::label_volume_mm3(rib_components, label),
            centroid: morphology::centroid(rib_components, label)?,
            vertebra: None,
            side: None,
        });
    }

    let vert_surfaces: Vec<Vec<WorldPoint>> = vertebrae
        .iter()
        .map(|v| {
            morphology::surface_voxels(vert_volume, v.label)
                .iter()
                .map(|c| vert_volume.voxel_center(c.i, c.j, c.k))
                .collect()
        })
        .collect();

    // exact minimal surface distance for every pair
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ri, rs) in rib_surfaces.iter().enumerate() {
        for (vi, vs) in vert_surfaces.iter().enumerate() {
            if vs.is_empty() {
                continue;
            }
            let mut best = f64::INFINITY;
            'outer: for p in rs {
                for q in vs {
                    let d2 = (p - q).norm_squared();
                    if d2 < best {
                        best = d2;
                        if best == 0.0 {
                            break 'outer;
                        }
                    }
                }
            }
            pairs.push((best.sqrt(), ri, vi));
        }
    }
    pairs.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(rib_labels[a.1].cmp(&rib_labels[b.1]))
            .then(vertebrae[a.2].label.cmp(&vertebrae[b.2].label))
    });

    let mut side_taken: HashSet<(u32, Side)> = HashSet::new();
    for &(_, ri, vi) in &pairs {
        if ribs[ri].vertebra.is_some() {
            continue;
        }
        let vert = &vertebrae[vi];
        let side = match determine_side(ribs[ri].centroid, vert) {
            Ok(s) => s,
            Err(Error::AmbiguousSide) => continue,
            Err(e) => return Err(e),
        };
        if side_taken.insert((vert.label, side)) {
            ribs[ri].vertebra = Some(vert.label);
            ribs[ri].side = Some(side);
        }
    }

    let reserved_floor = rib_labels
        .iter()
        .chain(vertebrae.iter().map(|v| &v.label))
        .fold(ORPHAN_LABEL_START, |acc, &l| acc.max(l + 1));
    let mut orphans = Vec::new();
    for (next, rib) in (reserved_floor..).zip(ribs.iter().filter(|r| r.vertebra.is_none())) {
        orphans.push(OrphanRelabel {
            old_label: rib.label,
            new_label: next,
        });
    }

    Ok(AssignmentTable { ribs, orphans })
}
