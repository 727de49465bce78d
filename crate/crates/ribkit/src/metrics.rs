//! Segmentation evaluation: overlap, surface distance, and panoptic
//! instance scores.
//!
//! Instance matching is one-to-one at DSC ≥ 0.5. Above that threshold each
//! instance can overlap at most one partner that strongly, so the greedy
//! descending-DSC pass already yields the optimal assignment.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{self, surface_voxels};
use crate::volume::LabelVolume;

/// Grid-position tolerance when comparing two volumes' grids.
const GRID_TOL: f64 = 1e-6;

fn check_same_grid(x: &LabelVolume, y: &LabelVolume) -> Result<()> {
    if !x.same_grid(y, GRID_TOL) {
        return Err(Error::GridMismatch(
            "volumes are not on the same grid".into(),
        ));
    }
    Ok(())
}

/// Dice overlap of the nonzero regions; 1.0 when both masks are empty.
pub fn dice(x: &LabelVolume, y: &LabelVolume) -> Result<f64> {
    check_same_grid(x, y)?;
    let mut nx = 0usize;
    let mut ny = 0usize;
    let mut both = 0usize;
    for (&a, &b) in x.data().iter().zip(y.data()) {
        let (a, b) = (a != 0, b != 0);
        nx += usize::from(a);
        ny += usize::from(b);
        both += usize::from(a && b);
    }
    if nx + ny == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (nx + ny) as f64)
}

/// Exact 1D squared-distance transform (lower envelope of parabolas) at
/// positions `i * spacing`. `INFINITY` marks non-site cells.
#[allow(clippy::needless_range_loop)] // textbook index formulation
fn dt_1d(f: &mut [f64], spacing: f64) {
    let n = f.len();
    // envelope over finite sites only; infinities poison the boundary math
    let sites: Vec<usize> = (0..n).filter(|&i| f[i].is_finite()).collect();
    if sites.is_empty() {
        return;
    }
    let x = |i: usize| i as f64 * spacing;
    let mut v: Vec<usize> = Vec::with_capacity(sites.len()); // site index per parabola
    let mut z: Vec<f64> = Vec::with_capacity(sites.len() + 1); // envelope boundaries
    v.push(sites[0]);
    z.push(f64::NEG_INFINITY);
    z.push(f64::INFINITY);
    for &q in &sites[1..] {
        loop {
            let p = *v.last().unwrap();
            let s = ((f[q] + x(q) * x(q)) - (f[p] + x(p) * x(p))) / (2.0 * x(q) - 2.0 * x(p));
            if s <= z[v.len() - 1] {
                v.pop();
                z.pop();
            } else {
                v.push(q);
                *z.last_mut().unwrap() = s;
                z.push(f64::INFINITY);
                break;
            }
        }
    }
    let snapshot: Vec<f64> = v.iter().map(|&p| f[p]).collect();
    let mut k = 0usize;
    for i in 0..n {
        while z[k + 1] < x(i) {
            k += 1;
        }
        let p = v[k];
        let d = x(i) - x(p);
        f[i] = d * d + snapshot[k];
    }
}

/// Squared world distance from every voxel to the nearest seed voxel,
/// separably over the three axes (exact for axis-aligned grids).
fn edt_sq(dims: [usize; 3], spacing: [f64; 3], seed: &[bool]) -> Vec<f64> {
    let [d0, d1, d2] = dims;
    let mut dist: Vec<f64> = seed
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();
    let mut line = vec![0.0f64; d0.max(d1).max(d2)];

    // axis 0: contiguous
    for start in (0..d0 * d1 * d2).step_by(d0) {
        dt_1d(&mut dist[start..start + d0], spacing[0]);
    }
    // axis 1: stride d0
    for k in 0..d2 {
        for i in 0..d0 {
            let base = i + k * d0 * d1;
            for j in 0..d1 {
                line[j] = dist[base + j * d0];
            }
            dt_1d(&mut line[..d1], spacing[1]);
            for j in 0..d1 {
                dist[base + j * d0] = line[j];
            }
        }
    }
    // axis 2: stride d0*d1
    let plane = d0 * d1;
    for j in 0..d1 {
        for i in 0..d0 {
            let base = i + j * d0;
            for k in 0..d2 {
                line[k] = dist[base + k * plane];
            }
            dt_1d(&mut line[..d2], spacing[2]);
            for k in 0..d2 {
                dist[base + k * plane] = line[k];
            }
        }
    }
    dist
}

/// Average symmetric surface distance in mm between the nonzero regions.
/// Surfaces are 6-neighborhood boundary voxels; distances are between voxel
/// centers; the denominator is the total boundary-voxel count.
pub fn assd(x: &LabelVolume, y: &LabelVolume) -> Result<f64> {
    check_same_grid(x, y)?;
    morphology::require_axis_aligned(x)?;
    let fg = |v: &LabelVolume| -> Result<LabelVolume> {
        let data: Vec<u32> = v.data().iter().map(|&l| u32::from(l != 0)).collect();
        LabelVolume::new(v.dims(), *v.affine(), data)
    };
    let (bx, by) = (fg(x)?, fg(y)?);
    let sa = surface_voxels(&bx, 1);
    let sb = surface_voxels(&by, 1);
    if sa.is_empty() || sb.is_empty() {
        return Err(Error::EmptyMask);
    }

    let dims = x.dims();
    let spacing = x.spacing();
    let seed_of = |surf: &[crate::volume::VoxelCoord]| {
        let mut seed = vec![false; dims[0] * dims[1] * dims[2]];
        for &c in surf {
            seed[x.index_of(c)] = true;
        }
        seed
    };
    let to_b = edt_sq(dims, spacing, &seed_of(&sb));
    let to_a = edt_sq(dims, spacing, &seed_of(&sa));

    let sum_a: f64 = sa.iter().map(|&c| to_b[x.index_of(c)].sqrt()).sum();
    let sum_b: f64 = sb.iter().map(|&c| to_a[x.index_of(c)].sqrt()).sum();
    Ok((sum_a + sum_b) / (sa.len() + sb.len()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub reference: u32,
    pub prediction: u32,
    pub dsc: f64,
}

/// One-to-one instance matches at DSC ≥ 0.5 plus the leftover counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceMatching {
    pub matched: Vec<MatchedPair>,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Matches prediction instances to reference instances greedily by
/// descending DSC (ties: smaller label pair), one-to-one, DSC ≥ 0.5.
pub fn match_instances(pred: &LabelVolume, reference: &LabelVolume) -> Result<InstanceMatching> {
    check_same_grid(pred, reference)?;

    let mut pred_sizes: HashMap<u32, usize> = HashMap::new();
    let mut ref_sizes: HashMap<u32, usize> = HashMap::new();
    let mut overlaps: HashMap<(u32, u32), usize> = HashMap::new();
    for (&p, &r) in pred.data().iter().zip(reference.data()) {
        if p != 0 {
            *pred_sizes.entry(p).or_default() += 1;
        }
        if r != 0 {
            *ref_sizes.entry(r).or_default() += 1;
        }
        if p != 0 && r != 0 {
            *overlaps.entry((r, p)).or_default() += 1;
        }
    }

    let mut candidates: Vec<MatchedPair> = overlaps
        .iter()
        .map(|(&(r, p), &o)| MatchedPair {
            reference: r,
            prediction: p,
            dsc: 2.0 * o as f64 / (ref_sizes[&r] + pred_sizes[&p]) as f64,
        })
        .filter(|m| m.dsc >= 0.5)
        .collect();
    candidates.sort_by(|a, b| {
        b.dsc
            .total_cmp(&a.dsc)
            .then(a.reference.cmp(&b.reference))
            .then(a.prediction.cmp(&b.prediction))
    });

    let mut used_ref: HashSet<u32> = HashSet::new();
    let mut used_pred: HashSet<u32> = HashSet::new();
    let mut matched = Vec::new();
    for m in candidates {
        if used_ref.contains(&m.reference) || used_pred.contains(&m.prediction) {
            continue;
        }
        used_ref.insert(m.reference);
        used_pred.insert(m.prediction);
        matched.push(m);
    }
    Ok(InstanceMatching {
        false_positives: pred_sizes.len() - used_pred.len(),
        false_negatives: ref_sizes.len() - used_ref.len(),
        matched,
    })
}

/// Panoptic summary for one subject.
///
/// `pq = sq · rq` holds exactly for both metric families. `sq_assd` is
/// absent when nothing matched.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanopticReport {
    pub binary_dsc: f64,
    pub rq: f64,
    pub sq_dsc: f64,
    pub pq_dsc: f64,
    pub sq_assd: Option<f64>,
    pub pq_assd: Option<f64>,
    pub matching: InstanceMatching,
}

impl PanopticReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Recognition quality: detection F1 over instances.
fn recognition_quality(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp + fn_ == 0 {
        return 1.0; // nothing to detect, nothing invented
    }
    tp as f64 / (tp as f64 + 0.5 * (fp + fn_) as f64)
}

/// Both instances of a matched pair as binary masks on a shared crop of
/// their union bounding box (one-voxel margin). Keeps the ASSD transform
/// small without moving any voxel in world space.
fn pair_masks(
    pred: &LabelVolume,
    reference: &LabelVolume,
    pair: &MatchedPair,
) -> Result<(LabelVolume, LabelVolume)> {
    let dims = pred.dims();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for (idx, (&p, &r)) in pred.data().iter().zip(reference.data()).enumerate() {
        if p == pair.prediction || r == pair.reference {
            let c = pred.coord_of(idx);
            let ijk = [c.i, c.j, c.k];
            for a in 0..3 {
                lo[a] = lo[a].min(ijk[a]);
                hi[a] = hi[a].max(ijk[a]);
            }
        }
    }
    for a in 0..3 {
        lo[a] = lo[a].saturating_sub(1);
        hi[a] = (hi[a] + 1).min(dims[a] - 1);
    }
    let sz = [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1];
    let mut affine = *pred.affine();
    let shift = affine.fixed_view::<3, 3>(0, 0)
        * nalgebra::Vector3::new(lo[0] as f64, lo[1] as f64, lo[2] as f64);
    affine[(0, 3)] += shift.x;
    affine[(1, 3)] += shift.y;
    affine[(2, 3)] += shift.z;

    let extract = |vol: &LabelVolume, label: u32| -> Result<LabelVolume> {
        let mut data = vec![0u32; sz[0] * sz[1] * sz[2]];
        for k in 0..sz[2] {
            for j in 0..sz[1] {
                for i in 0..sz[0] {
                    if vol.label_or_zero(
                        (lo[0] + i) as i64,
                        (lo[1] + j) as i64,
                        (lo[2] + k) as i64,
                    ) == label
                    {
                        data[i + sz[0] * (j + sz[1] * k)] = 1;
                    }
                }
            }
        }
        LabelVolume::new(sz, affine, data)
    };
    Ok((extract(pred, pair.prediction)?, extract(reference, pair.reference)?))
}

/// Full panoptic evaluation of a predicted instance map against a
/// reference instance map on the same grid.
pub fn evaluate_panoptic(pred: &LabelVolume, reference: &LabelVolume) -> Result<PanopticReport> {
    let matching = match_instances(pred, reference)?;
    let binary_dsc = dice(pred, reference)?;
    let tp = matching.matched.len();
    let rq = recognition_quality(tp, matching.false_positives, matching.false_negatives);

    let sq_dsc = if tp == 0 {
        0.0
    } else {
        matching.matched.iter().map(|m| m.dsc).sum::<f64>() / tp as f64
    };
    let sq_assd = if tp == 0 {
        None
    } else {
        let mut total = 0.0;
        for pair in &matching.matched {
            let (pm, rm) = pair_masks(pred, reference, pair)?;
            total += assd(&pm, &rm)?;
        }
        Some(total / tp as f64)
    };

    Ok(PanopticReport {
        binary_dsc,
        rq,
        sq_dsc,
        pq_dsc: sq_dsc * rq,
        sq_assd,
        pq_assd: sq_assd.map(|s| s * rq),
        matching,
    })
}

/// Mean and sample standard deviation (n−1; 0 when n < 2).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `mean ± std` to three decimals, the usual reporting convention.
pub fn format_mean_std(values: &[f64]) -> String {
    let (m, s) = mean_std(values);
    format!("{m:.3} ± {s:.3}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix4;

    fn grid(spacing: [f64; 3]) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        for a in 0..3 {
            m[(a, a)] = spacing[a];
        }
        m
    }

    fn vol(dims: [usize; 3], spacing: [f64; 3], data: Vec<u32>) -> LabelVolume {
        LabelVolume::new(dims, grid(spacing), data).unwrap()
    }

    fn vol_with<F: Fn(usize, usize, usize) -> u32>(
        dims: [usize; 3],
        spacing: [f64; 3],
        f: F,
    ) -> LabelVolume {
        let mut data = vec![0u32; dims[0] * dims[1] * dims[2]];
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data[i + dims[0] * (j + dims[1] * k)] = f(i, j, k);
                }
            }
        }
        vol(dims, spacing, data)
    }

    #[test]
    fn dice_basics() {
        let a = vol_with([4, 4, 4], [1.0; 3], |i, _, _| u32::from(i < 2));
        let b = vol_with([4, 4, 4], [1.0; 3], |i, _, _| u32::from(i >= 2));
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
        // |X| = |Y| = 8 with overlap 4 → 2·4/16 = 0.5
        let p = vol_with([4, 2, 2], [1.0; 3], |i, _, _| u32::from(i < 2));
        let q = vol_with([4, 2, 2], [1.0; 3], |i, _, k| {
            u32::from(i < 2 && k == 0 || (2..4).contains(&i) && k == 1)
        });
        assert_eq!(q.data().iter().filter(|&&v| v != 0).count(), 8);
        let d = dice(&p, &q).unwrap();
        assert!((d - 0.5).abs() < 1e-12, "dice {d}");
    }

    #[test]
    fn dice_empty_and_mismatch() {
        let e = vol([3, 3, 3], [1.0; 3], vec![0; 27]);
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
        let other = vol([3, 3, 3], [2.0; 3], vec![0; 27]);
        assert!(matches!(dice(&e, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn assd_identical_is_zero_and_singletons_measure_spacing() {
        let a = vol_with([8, 8, 8], [1.0; 3], |i, j, k| {
            u32::from((2..6).contains(&i) && (2..6).contains(&j) && (2..6).contains(&k))
        });
        assert!(assd(&a, &a).unwrap().abs() < 1e-12);

        let s1 = vol_with([9, 5, 5], [1.0; 3], |i, j, k| u32::from(i == 2 && j == 2 && k == 2));
        let s2 = vol_with([9, 5, 5], [1.0; 3], |i, j, k| u32::from(i == 5 && j == 2 && k == 2));
        let d = assd(&s1, &s2).unwrap();
        assert!((d - 3.0).abs() < 1e-12, "assd {d}");
    }

    #[test]
    fn assd_scales_with_spacing_and_rejects_empty() {
        let mk = |sp: f64| {
            vol_with([9, 5, 5], [sp; 3], |i, j, k| u32::from(i == 2 && j == 2 && k == 2))
        };
        let mk2 = |sp: f64| {
            vol_with([9, 5, 5], [sp; 3], |i, j, k| u32::from(i == 5 && j == 2 && k == 2))
        };
        let d1 = assd(&mk(1.0), &mk2(1.0)).unwrap();
        let d2 = assd(&mk(2.0), &mk2(2.0)).unwrap();
        assert!((d2 - 2.0 * d1).abs() < 1e-12);

        let empty = vol([5, 5, 5], [1.0; 3], vec![0; 125]);
        let one = vol_with([5, 5, 5], [1.0; 3], |i, _, _| u32::from(i == 2));
        assert!(matches!(assd(&empty, &one), Err(Error::EmptyMask)));
    }

    // Brute-force all-pairs nearest-surface oracle.
    fn assd_oracle(x: &LabelVolume, y: &LabelVolume) -> f64 {
        let fg = |v: &LabelVolume| {
            let data: Vec<u32> = v.data().iter().map(|&l| u32::from(l != 0)).collect();
            LabelVolume::new(v.dims(), *v.affine(), data).unwrap()
        };
        let (bx, by) = (fg(x), fg(y));
        let sa = surface_voxels(&bx, 1);
        let sb = surface_voxels(&by, 1);
        let pts = |v: &LabelVolume, cs: &[crate::volume::VoxelCoord]| -> Vec<crate::WorldPoint> {
            cs.iter().map(|c| v.voxel_center(c.i, c.j, c.k)).collect()
        };
        let (pa, pb) = (pts(x, &sa), pts(y, &sb));
        let min_d = |p: &crate::WorldPoint, qs: &[crate::WorldPoint]| {
            qs.iter()
                .map(|q| (p - q).norm())
                .fold(f64::INFINITY, f64::min)
        };
        let sum_a: f64 = pa.iter().map(|p| min_d(p, &pb)).sum();
        let sum_b: f64 = pb.iter().map(|p| min_d(p, &pa)).sum();
        (sum_a + sum_b) / (pa.len() + pb.len()) as f64
    }

    #[test]
    fn assd_matches_brute_force_on_random_masks() {
        let mut state = 0x1234_5678_9abc_def0u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for trial in 0..20 {
            let spacing = [
                0.5 + (next() % 20) as f64 * 0.1,
                0.5 + (next() % 20) as f64 * 0.1,
                0.5 + (next() % 20) as f64 * 0.1,
            ];
            let density = 10 + next() % 50;
            let mk = |next: &mut dyn FnMut() -> u64| {
                let mut data = vec![0u32; 12 * 12 * 12];
                for v in data.iter_mut() {
                    *v = u32::from(next() % 100 < density);
                }
                data
            };
            let (da, db) = (mk(&mut next), mk(&mut next));
            if da.iter().all(|&v| v == 0) || db.iter().all(|&v| v == 0) {
                continue;
            }
            let a = vol([12, 12, 12], spacing, da);
            let b = vol([12, 12, 12], spacing, db);
            let fast = assd(&a, &b).unwrap();
            let slow = assd_oracle(&a, &b);
            assert!(
                (fast - slow).abs() < 1e-9,
                "trial {trial}: {fast} vs {slow}"
            );
            let sym = assd(&b, &a).unwrap();
            assert!((fast - sym).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_instance_maps_match_perfectly() {
        let m = vol_with([6, 6, 2], [1.0; 3], |i, _, _| {
            if i < 2 {
                1
            } else if i < 4 {
                0
            } else {
                2
            }
        });
        let r = match_instances(&m, &m).unwrap();
        assert_eq!(r.matched.len(), 2);
        assert!(r.matched.iter().all(|p| p.dsc == 1.0));
        assert_eq!((r.false_positives, r.false_negatives), (0, 0));
    }

    #[test]
    fn split_reference_matches_once_with_one_fp() {
        // reference: one 4-voxel instance; prediction: two 2-voxel halves
        let reference = vol([4, 1, 1], [1.0; 3], vec![7, 7, 7, 7]);
        let pred = vol([4, 1, 1], [1.0; 3], vec![1, 1, 2, 2]);
        let r = match_instances(&pred, &reference).unwrap();
        assert_eq!(r.matched.len(), 1);
        // equal DSC 2/3 both halves; smaller label pair wins
        assert_eq!(r.matched[0].prediction, 1);
        assert!((r.matched[0].dsc - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!((r.false_positives, r.false_negatives), (1, 0));
    }

    #[test]
    fn below_threshold_overlap_is_fp_and_fn() {
        // |X| = |Y| = 10, overlap 4 → DSC 2·4/20 = 0.4 < 0.5
        let reference = vol_with([20, 1, 1], [1.0; 3], |i, _, _| u32::from(i < 10) * 3);
        let pred = vol_with([20, 1, 1], [1.0; 3], |i, _, _| u32::from((6..16).contains(&i)) * 9);
        let r = match_instances(&pred, &reference).unwrap();
        assert!(r.matched.is_empty());
        assert_eq!((r.false_positives, r.false_negatives), (1, 1));
    }

    // Exhaustive optimal one-to-one assignment over candidate pairs.
    fn oracle_best_tp(cands: &[MatchedPair]) -> usize {
        fn rec(cands: &[MatchedPair], used_r: &mut Vec<u32>, used_p: &mut Vec<u32>) -> usize {
            match cands.split_first() {
                None => 0,
                Some((c, rest)) => {
                    let skip = rec(rest, used_r, used_p);
                    if used_r.contains(&c.reference) || used_p.contains(&c.prediction) {
                        return skip;
                    }
                    used_r.push(c.reference);
                    used_p.push(c.prediction);
                    let take = 1 + rec(rest, used_r, used_p);
                    used_r.pop();
                    used_p.pop();
                    skip.max(take)
                }
            }
        }
        rec(cands, &mut Vec::new(), &mut Vec::new())
    }

    #[test]
    fn greedy_matching_is_optimal_on_random_instance_maps() {
        let mut state = 0xfeed_beef_cafe_0001u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..30 {
            // reference: up to 4 axis-slabs of a 10³ grid; prediction: the
            // same slabs with boundary noise and occasional relabeling
            let dims = [10usize, 10, 10];
            let slabs = 2 + (next() % 3) as usize;
            let refv = vol_with(dims, [1.0; 3], |i, _, _| {
                let s = i * slabs / 10;
                (s + 1) as u32
            });
            let noise_mod = 3 + next() % 5;
            let mut pdata = refv.data().to_vec();
            for v in pdata.iter_mut() {
                if next() % noise_mod == 0 {
                    *v = (next() % (slabs as u64 + 1)) as u32;
                }
            }
            let pred = vol(dims, [1.0; 3], pdata);
            let got = match_instances(&pred, &refv).unwrap();

            // rebuild the ≥0.5 candidate list the same way for the oracle
            let mut ps: HashMap<u32, usize> = HashMap::new();
            let mut rs: HashMap<u32, usize> = HashMap::new();
            let mut ov: HashMap<(u32, u32), usize> = HashMap::new();
            for (&p, &r) in pred.data().iter().zip(refv.data()) {
                if p != 0 {
                    *ps.entry(p).or_default() += 1;
                }
                if r != 0 {
                    *rs.entry(r).or_default() += 1;
                }
                if p != 0 && r != 0 {
                    *ov.entry((r, p)).or_default() += 1;
                }
            }
            let cands: Vec<MatchedPair> = ov
                .iter()
                .map(|(&(r, p), &o)| MatchedPair {
                    reference: r,
                    prediction: p,
                    dsc: 2.0 * o as f64 / (rs[&r] + ps[&p]) as f64,
                })
                .filter(|m| m.dsc >= 0.5)
                .collect();
            assert_eq!(got.matched.len(), oracle_best_tp(&cands));
        }
    }

    #[test]
    fn panoptic_identities() {
        let m = vol_with([6, 6, 6], [1.0; 3], |i, _, _| if i < 3 { 1 } else { 2 });
        let rep = evaluate_panoptic(&m, &m).unwrap();
        assert_eq!(rep.rq, 1.0);
        assert_eq!(rep.sq_dsc, 1.0);
        assert_eq!(rep.pq_dsc, 1.0);
        assert_eq!(rep.binary_dsc, 1.0);
        assert_eq!(rep.sq_assd, Some(0.0));
        assert_eq!(rep.pq_assd, Some(0.0));
    }

    #[test]
    fn pq_is_exactly_sq_times_rq() {
        // degrade one instance below the match threshold
        let refv = vol_with([12, 4, 4], [1.0; 3], |i, _, _| {
            if i < 4 {
                1
            } else if i < 8 {
                2
            } else {
                3
            }
        });
        let pred = vol_with([12, 4, 4], [1.0; 3], |i, j, _| {
            if i < 4 {
                1
            } else if i < 8 {
                u32::from(j == 0) * 2 // shrunken: DSC 2·16/(64+16)=0.4
            } else {
                3
            }
        });
        let rep = evaluate_panoptic(&pred, &refv).unwrap();
        assert_eq!(rep.matching.matched.len(), 2);
        assert_eq!(rep.matching.false_negatives, 1);
        assert_eq!(rep.matching.false_positives, 1);
        assert_eq!(rep.pq_dsc, rep.sq_dsc * rep.rq);
        assert_eq!(rep.pq_assd.unwrap(), rep.sq_assd.unwrap() * rep.rq);
        let rq_expect = 2.0 / (2.0 + 0.5 * 2.0);
        assert!((rep.rq - rq_expect).abs() < 1e-12);
    }

    #[test]
    fn rounding_convention() {
        // a three-decimal product must match the product of its
        // three-decimal factors within the last digit
        assert_eq!(format!("{:.3}", 0.984f64 * 0.987), "0.971");
        assert_eq!(format_mean_std(&[0.971]), "0.971 ± 0.000");
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-12);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
