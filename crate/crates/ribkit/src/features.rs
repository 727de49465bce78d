//! Vertebra-relative rib morphometry.
//!
//! Every directional feature is expressed in the frame of the rib's own
//! vertebra (Right/Anterior/Superior columns) and left ribs are mirrored so
//! the Right axis always points away from the spine. That makes left and
//! right ribs directly comparable and the features invariant under rigid
//! motion of the whole scene.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::Side;
use crate::rlma::{self, PathPolyline};

/// Maps a world vector into the vertebra frame, mirroring left ribs across
/// the sagittal plane of that frame.
pub fn to_vertebra_frame(v: Vector3<f64>, frame: &Matrix3<f64>, side: Side) -> Vector3<f64> {
    let mut local = frame.transpose() * v;
    if side == Side::Left {
        local.x = -local.x;
    }
    local
}

/// Displacement from the corpus center to the rib start, in the vertebra
/// frame. Component order is (Right, Anterior, Superior); a rib that starts
/// behind the corpus has a negative Anterior component.
pub fn compute_drc(
    start_point: crate::WorldPoint,
    corpus_center: crate::WorldPoint,
    frame: &Matrix3<f64>,
    side: Side,
) -> Vector3<f64> {
    to_vertebra_frame(start_point - corpus_center, frame, side)
}

/// Unit direction vectors between the first `n` path points, in the
/// vertebra frame. Returns `n - 1` vectors.
pub fn compute_nppr(
    path: &PathPolyline,
    n: usize,
    frame: &Matrix3<f64>,
    side: Side,
) -> Result<Vec<Vector3<f64>>> {
    if n < 2 {
        return Err(Error::InvalidRecord(format!(
            "path-point relation needs n >= 2, got {n}"
        )));
    }
    if path.points.len() < n {
        return Err(Error::InsufficientPath {
            needed: n,
            got: path.points.len(),
        });
    }
    let mut out = Vec::with_capacity(n - 1);
    for w in path.points[..n].windows(2) {
        let d = w[1] - w[0];
        let norm = d.norm();
        if norm < 1e-12 {
            return Err(Error::InvalidRecord(
                "coincident consecutive path points".into(),
            ));
        }
        out.push(to_vertebra_frame(d / norm, frame, side));
    }
    Ok(out)
}

/// Volume-to-length ratio in mm³/mm. For a tube of constant cross-section
/// this is the cross-section area.
pub fn volume_length_ratio(rib_world_volume_mm3: f64, length_mm: f64) -> Result<f64> {
    if length_mm < 0.0 {
        return Err(Error::NegativeLength(length_mm));
    }
    if length_mm == 0.0 {
        return Err(Error::InvalidRecord(
            "volume-to-length ratio needs a positive length".into(),
        ));
    }
    Ok(rib_world_volume_mm3 / length_mm)
}

/// Full per-rib feature record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RibFeatureRecord {
    pub subject: String,
    /// Anatomic rib name, e.g. `103-left`.
    pub rib: String,
    pub side: Side,
    pub length_mm: f64,
    pub is_stump: bool,
    /// (Right, Anterior, Superior), mirrored for left ribs.
    pub drc: [f64; 3],
    /// Anterior component of `drc`; negative = posterior.
    pub pdrc: f64,
    /// Unit path-direction vectors, as many as the path allowed (≤ requested).
    pub ppr: Vec<[f64; 3]>,
    pub volume_length_ratio: f64,
}

impl RibFeatureRecord {
    /// Assembles a record from a measured path. `ppr_n` is the largest
    /// path-point relation to keep; shorter paths keep what they have.
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        subject: &str,
        rib: &str,
        side: Side,
        path: &PathPolyline,
        corpus_center: crate::WorldPoint,
        frame: &Matrix3<f64>,
        rib_volume_mm3: f64,
        ppr_n: usize,
    ) -> Result<Self> {
        if path.points.is_empty() {
            return Err(Error::InsufficientPath { needed: 1, got: 0 });
        }
        let drc_v = compute_drc(path.points[0], corpus_center, frame, side);
        let usable_n = ppr_n.min(path.points.len());
        let ppr = if usable_n >= 2 {
            compute_nppr(path, usable_n, frame, side)?
                .into_iter()
                .map(|v| [v.x, v.y, v.z])
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            subject: subject.to_string(),
            rib: rib.to_string(),
            side,
            length_mm: path.length_mm,
            is_stump: rlma::classify_stump(path.length_mm, rlma::STUMP_THRESHOLD_MM)?,
            drc: [drc_v.x, drc_v.y, drc_v.z],
            pdrc: drc_v.y,
            ppr,
            volume_length_ratio: volume_length_ratio(rib_volume_mm3, path.length_mm)?,
        })
    }
}

/// Which feature columns feed the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSet {
    /// `Some(n)` contributes the 3(n−1) flattened n-PPR components.
    pub ppr_n: Option<usize>,
    /// Include the 3 DRC components.
    pub drc: bool,
}

impl FeatureSet {
    pub fn nppr(n: usize) -> Self {
        Self {
            ppr_n: Some(n),
            drc: false,
        }
    }

    pub fn drc_only() -> Self {
        Self {
            ppr_n: None,
            drc: true,
        }
    }

    pub fn nppr_drc(n: usize) -> Self {
        Self {
            ppr_n: Some(n),
            drc: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.ppr_n {
            Some(n) if n < 2 => Err(Error::InvalidRecord(format!(
                "feature set needs n >= 2, got {n}"
            ))),
            None if !self.drc => Err(Error::InvalidRecord("empty feature set".into())),
            _ => Ok(()),
        }
    }

    pub fn column_count(&self) -> usize {
        self.ppr_n.map_or(0, |n| 3 * (n - 1)) + if self.drc { 3 } else { 0 }
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.column_count());
        if let Some(n) = self.ppr_n {
            for i in 1..n {
                for axis in ["r", "a", "s"] {
                    names.push(format!("ppr{i}_{axis}"));
                }
            }
        }
        if self.drc {
            for axis in ["r", "a", "s"] {
                names.push(format!("drc_{axis}"));
            }
        }
        names
    }

    /// Human-readable name, e.g. `4-PPR+DRC`.
    pub fn label(&self) -> String {
        match (self.ppr_n, self.drc) {
            (Some(n), true) => format!("{n}-PPR+DRC"),
            (Some(n), false) => format!("{n}-PPR"),
            (None, true) => "DRC".to_string(),
            (None, false) => "(empty)".to_string(),
        }
    }
}

/// Dense design matrix for one feature set, rows ordered by (subject, rib).
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub feature_set: FeatureSet,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Class label per row: true = stump rib.
    pub stump: Vec<bool>,
    /// `subject/rib` identifier per row.
    pub ids: Vec<String>,
}

/// Builds the design matrix. Records whose path is too short for the
/// requested n are skipped and reported back by id so callers can log them.
pub fn build_feature_matrix(
    records: &[RibFeatureRecord],
    set: FeatureSet,
) -> Result<(FeatureMatrix, Vec<String>)> {
    set.validate()?;
    let need_ppr = set.ppr_n.map_or(0, |n| n - 1);

    let mut order: Vec<&RibFeatureRecord> = records.iter().collect();
    order.sort_by(|a, b| (&a.subject, &a.rib).cmp(&(&b.subject, &b.rib)));

    let mut rows = Vec::new();
    let mut stump = Vec::new();
    let mut ids = Vec::new();
    let mut skipped = Vec::new();
    for rec in order {
        let id = format!("{}/{}", rec.subject, rec.rib);
        if rec.ppr.len() < need_ppr {
            skipped.push(id);
            continue;
        }
        let mut row = Vec::with_capacity(set.column_count());
        for v in &rec.ppr[..need_ppr] {
            row.extend_from_slice(v);
        }
        if set.drc {
            row.extend_from_slice(&rec.drc);
        }
        rows.push(row);
        stump.push(rec.is_stump);
        ids.push(id);
    }
    if rows.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok((
        FeatureMatrix {
            feature_set: set,
            columns: set.column_names(),
            rows,
            stump,
            ids,
        },
        skipped,
    ))
}

/// Writes records as CSV. The ppr block is sized to the longest record;
/// shorter records leave trailing ppr cells empty.
pub fn write_csv<W: std::io::Write>(records: &[RibFeatureRecord], out: W) -> Result<()> {
    let max_ppr = records.iter().map(|r| r.ppr.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);

    let mut header = vec![
        "subject".to_string(),
        "rib".to_string(),
        "side".to_string(),
    ];
    for i in 1..=max_ppr {
        for axis in ["r", "a", "s"] {
            header.push(format!("ppr{i}_{axis}"));
        }
    }
    for axis in ["r", "a", "s"] {
        header.push(format!("drc_{axis}"));
    }
    header.push("pdrc".to_string());
    header.push("vol_len_ratio".to_string());
    header.push("length_mm".to_string());
    header.push("is_stump".to_string());
    w.write_record(&header).map_err(csv_err)?;

    for rec in records {
        let mut row = vec![
            rec.subject.clone(),
            rec.rib.clone(),
            rec.side.to_string(),
        ];
        for i in 0..max_ppr {
            match rec.ppr.get(i) {
                Some(v) => row.extend(v.iter().map(|x| format!("{x}"))),
                None => row.extend(std::iter::repeat_n(String::new(), 3)),
            }
        }
        row.extend(rec.drc.iter().map(|x| format!("{x}")));
        row.push(format!("{}", rec.pdrc));
        row.push(format!("{}", rec.volume_length_ratio));
        row.push(format!("{}", rec.length_mm));
        row.push(format!("{}", rec.is_stump));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads records written by [`write_csv`].
pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<RibFeatureRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let find = |name: &str| -> Result<usize> {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::InvalidRecord(format!("missing CSV column {name}")))
    };
    let max_ppr = cols
        .iter()
        .filter(|c| c.starts_with("ppr") && c.ends_with("_r"))
        .count();
    let (ci_subject, ci_rib, ci_side) = (find("subject")?, find("rib")?, find("side")?);
    let ci_drc = find("drc_r")?;
    let (ci_pdrc, ci_ratio) = (find("pdrc")?, find("vol_len_ratio")?);
    let (ci_len, ci_stump) = (find("length_mm")?, find("is_stump")?);
    let ppr_starts: Vec<usize> = (1..=max_ppr)
        .map(|i| find(&format!("ppr{i}_r")))
        .collect::<Result<_>>()?;

    let parse_f = |s: &str, what: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::InvalidRecord(format!("bad {what} value: {s:?}")))
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let cell = |i: usize| rec.get(i).unwrap_or("");
        let side = match cell(ci_side) {
            "left" => Side::Left,
            "right" => Side::Right,
            other => {
                return Err(Error::InvalidRecord(format!("bad side value: {other:?}")));
            }
        };
        let mut ppr = Vec::new();
        for &s in &ppr_starts {
            if cell(s).is_empty() {
                break;
            }
            ppr.push([
                parse_f(cell(s), "ppr")?,
                parse_f(cell(s + 1), "ppr")?,
                parse_f(cell(s + 2), "ppr")?,
            ]);
        }
        out.push(RibFeatureRecord {
            subject: cell(ci_subject).to_string(),
            rib: cell(ci_rib).to_string(),
            side,
            length_mm: parse_f(cell(ci_len), "length")?,
            is_stump: match cell(ci_stump) {
                "true" => true,
                "false" => false,
                other => {
                    return Err(Error::InvalidRecord(format!("bad stump flag: {other:?}")));
                }
            },
            drc: [
                parse_f(cell(ci_drc), "drc")?,
                parse_f(cell(ci_drc + 1), "drc")?,
                parse_f(cell(ci_drc + 2), "drc")?,
            ],
            pdrc: parse_f(cell(ci_pdrc), "pdrc")?,
            ppr,
            volume_length_ratio: parse_f(cell(ci_ratio), "ratio")?,
        });
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidRecord(format!("csv: {e}"))
}
