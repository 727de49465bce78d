//! NIfTI-1 reading and writing for integer label volumes.
//!
//! Single-file `.nii` / `.nii.gz` only. Reading accepts uint8, int16, int32,
//! uint16, and float32 data (floats must hold exact non-negative integers)
//! in either byte order; writing always emits little-endian uint16 with the
//! affine in the sform fields.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use nalgebra::Matrix4;

use crate::error::{Error, Result};
use crate::volume::LabelVolume;

const HEADER_LEN: usize = 348;
const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
const MAGIC_PAIR: &[u8; 4] = b"ni1\0";

/// Data section offset used when writing (header + 4-byte extender pad).
const WRITE_VOX_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_UINT16: i16 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

fn i16_at(b: &[u8], off: usize, e: Endian) -> i16 {
    let a = [b[off], b[off + 1]];
    match e {
        Endian::Little => i16::from_le_bytes(a),
        Endian::Big => i16::from_be_bytes(a),
    }
}

fn i32_at(b: &[u8], off: usize, e: Endian) -> i32 {
    let a = [b[off], b[off + 1], b[off + 2], b[off + 3]];
    match e {
        Endian::Little => i32::from_le_bytes(a),
        Endian::Big => i32::from_be_bytes(a),
    }
}

fn f32_at(b: &[u8], off: usize, e: Endian) -> f32 {
    let a = [b[off], b[off + 1], b[off + 2], b[off + 3]];
    match e {
        Endian::Little => f32::from_le_bytes(a),
        Endian::Big => f32::from_be_bytes(a),
    }
}

fn u16_at(b: &[u8], off: usize, e: Endian) -> u16 {
    let a = [b[off], b[off + 1]];
    match e {
        Endian::Little => u16::from_le_bytes(a),
        Endian::Big => u16::from_be_bytes(a),
    }
}

/// Parses an uncompressed NIfTI-1 byte stream into a label volume.
///
/// The volume is returned in its stored orientation; callers that need the
/// canonical frame should follow up with [`LabelVolume::reorient_ras`].
pub fn parse_nifti_bytes(bytes: &[u8]) -> Result<LabelVolume> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::MalformedHeader(format!(
            "file holds {} bytes, header needs {HEADER_LEN}",
            bytes.len()
        )));
    }
    let endian = match i32_at(bytes, 0, Endian::Little) {
        348 => Endian::Little,
        _ if i32_at(bytes, 0, Endian::Big) == 348 => Endian::Big,
        other => {
            return Err(Error::MalformedHeader(format!(
                "sizeof_hdr is {other}, expected 348"
            )))
        }
    };

    let magic: &[u8; 4] = bytes[344..348].try_into().unwrap();
    if magic == MAGIC_PAIR {
        return Err(Error::MalformedHeader(
            "detached .hdr/.img pairs are not supported".into(),
        ));
    }
    if magic != MAGIC_SINGLE {
        return Err(Error::MalformedHeader(format!(
            "bad magic {:?}, expected \"n+1\\0\"",
            &magic[..]
        )));
    }

    let ndim = i16_at(bytes, 40, endian);
    if ndim != 3 {
        return Err(Error::NotThreeDimensional(ndim));
    }
    let mut dims = [0usize; 3];
    for (a, slot) in dims.iter_mut().enumerate() {
        let d = i16_at(bytes, 42 + 2 * a, endian);
        if d < 1 {
            return Err(Error::MalformedHeader(format!("dim[{}] = {d}", a + 1)));
        }
        *slot = d as usize;
    }

    let datatype = i16_at(bytes, 70, endian);
    let bitpix = i16_at(bytes, 72, endian);
    let expected_bitpix = match datatype {
        DT_UINT8 => 8,
        DT_INT16 | DT_UINT16 => 16,
        DT_INT32 | DT_FLOAT32 => 32,
        other => return Err(Error::UnsupportedDatatype(other)),
    };
    if bitpix != expected_bitpix {
        return Err(Error::MalformedHeader(format!(
            "bitpix {bitpix} inconsistent with datatype {datatype}"
        )));
    }

    let scl_slope = f32_at(bytes, 112, endian);
    let scl_inter = f32_at(bytes, 116, endian);
    let scaled = (scl_slope.is_finite() && scl_slope != 0.0 && scl_slope != 1.0)
        || (scl_inter.is_finite() && scl_inter != 0.0);
    if scaled {
        return Err(Error::MalformedHeader(format!(
            "scaled voxel values (slope {scl_slope}, inter {scl_inter}) are not labels"
        )));
    }

    let mut pixdim = [0f32; 8];
    for (a, p) in pixdim.iter_mut().enumerate() {
        *p = f32_at(bytes, 76 + 4 * a, endian);
    }
    let affine = read_affine(bytes, endian, &pixdim)?;

    let vox_offset = f32_at(bytes, 108, endian);
    if !vox_offset.is_finite() || vox_offset < HEADER_LEN as f32 {
        return Err(Error::MalformedHeader(format!(
            "vox_offset {vox_offset} precedes header end"
        )));
    }
    let offset = vox_offset as usize;

    let n = dims[0] * dims[1] * dims[2];
    let bytes_per = (expected_bitpix / 8) as usize;
    let need = offset + n * bytes_per;
    if bytes.len() < need {
        return Err(Error::TruncatedData {
            expected: need,
            found: bytes.len(),
        });
    }

    let mut data = Vec::with_capacity(n);
    match datatype {
        DT_UINT8 => {
            data.extend(bytes[offset..offset + n].iter().map(|&v| v as u32));
        }
        DT_UINT16 => {
            for idx in 0..n {
                data.push(u16_at(bytes, offset + 2 * idx, endian) as u32);
            }
        }
        DT_INT16 => {
            for idx in 0..n {
                let v = i16_at(bytes, offset + 2 * idx, endian);
                if v < 0 {
                    return Err(Error::NegativeLabel(v as i64));
                }
                data.push(v as u32);
            }
        }
        DT_INT32 => {
            for idx in 0..n {
                let v = i32_at(bytes, offset + 4 * idx, endian);
                if v < 0 {
                    return Err(Error::NegativeLabel(v as i64));
                }
                data.push(v as u32);
            }
        }
        DT_FLOAT32 => {
            for idx in 0..n {
                let v = f32_at(bytes, offset + 4 * idx, endian) as f64;
                if !v.is_finite() || v.fract() != 0.0 {
                    return Err(Error::NonIntegralLabel(v));
                }
                if v < 0.0 {
                    return Err(Error::NegativeLabel(v as i64));
                }
                if v > u32::MAX as f64 {
                    return Err(Error::LabelOverflow(v as u64));
                }
                data.push(v as u32);
            }
        }
        _ => unreachable!("datatype validated above"),
    }

    LabelVolume::new(dims, affine, data)
}

/// Affine priority: sform when sform_code > 0, then qform, then a diagonal
/// of pixdim with zero origin.
fn read_affine(bytes: &[u8], endian: Endian, pixdim: &[f32; 8]) -> Result<Matrix4<f64>> {
    let qform_code = i16_at(bytes, 252, endian);
    let sform_code = i16_at(bytes, 254, endian);

    if sform_code > 0 {
        let mut m = Matrix4::identity();
        for r in 0..3 {
            for c in 0..4 {
                m[(r, c)] = f32_at(bytes, 280 + 16 * r + 4 * c, endian) as f64;
            }
        }
        // header self-consistency: declared pixdim must agree with the sform
        // column scale when it is set at all
        for a in 0..3 {
            let p = pixdim[a + 1] as f64;
            let norm = m.fixed_view::<3, 1>(0, a).norm();
            if p > 0.0 && (norm - p).abs() > 0.01 * norm.max(p).max(1.0) {
                return Err(Error::MalformedHeader(format!(
                    "pixdim[{}] = {p} disagrees with sform column norm {norm:.4}",
                    a + 1
                )));
            }
        }
        return Ok(m);
    }

    if qform_code > 0 {
        let b = f32_at(bytes, 256, endian) as f64;
        let c = f32_at(bytes, 260, endian) as f64;
        let d = f32_at(bytes, 264, endian) as f64;
        let a2 = 1.0 - b * b - c * c - d * d;
        if a2 < -1e-5 {
            return Err(Error::MalformedHeader(format!(
                "quaternion (b, c, d) has norm {} > 1",
                (b * b + c * c + d * d).sqrt()
            )));
        }
        let a = a2.max(0.0).sqrt();
        let qfac = if pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let (sx, sy, sz) = (pixdim[1] as f64, pixdim[2] as f64, pixdim[3] as f64);
        if sx <= 0.0 || sy <= 0.0 || sz <= 0.0 {
            return Err(Error::MalformedHeader(
                "qform requires positive pixdim[1..=3]".into(),
            ));
        }
        let rot = [
            [
                a * a + b * b - c * c - d * d,
                2.0 * b * c - 2.0 * a * d,
                2.0 * b * d + 2.0 * a * c,
            ],
            [
                2.0 * b * c + 2.0 * a * d,
                a * a + c * c - b * b - d * d,
                2.0 * c * d - 2.0 * a * b,
            ],
            [
                2.0 * b * d - 2.0 * a * c,
                2.0 * c * d + 2.0 * a * b,
                a * a + d * d - b * b - c * c,
            ],
        ];
        let scale = [sx, sy, sz * qfac];
        let mut m = Matrix4::identity();
        for r in 0..3 {
            for col in 0..3 {
                m[(r, col)] = rot[r][col] * scale[col];
            }
        }
        m[(0, 3)] = f32_at(bytes, 268, endian) as f64;
        m[(1, 3)] = f32_at(bytes, 272, endian) as f64;
        m[(2, 3)] = f32_at(bytes, 276, endian) as f64;
        return Ok(m);
    }

    let (sx, sy, sz) = (pixdim[1] as f64, pixdim[2] as f64, pixdim[3] as f64);
    if sx <= 0.0 || sy <= 0.0 || sz <= 0.0 {
        return Err(Error::MalformedHeader(
            "no sform/qform and pixdim[1..=3] not positive".into(),
        ));
    }
    let mut m = Matrix4::identity();
    m[(0, 0)] = sx;
    m[(1, 1)] = sy;
    m[(2, 2)] = sz;
    Ok(m)
}

/// Serializes a volume as little-endian uint16 with the affine in the sform.
pub fn write_nifti_bytes(vol: &LabelVolume) -> Result<Vec<u8>> {
    for &l in vol.data() {
        if l > u16::MAX as u32 {
            return Err(Error::LabelOverflow(l as u64));
        }
    }
    let dims = vol.dims();
    for &d in &dims {
        if d > i16::MAX as usize {
            return Err(Error::MalformedHeader(format!(
                "dimension {d} exceeds the NIfTI-1 limit of {}",
                i16::MAX
            )));
        }
    }

    let mut out = vec![0u8; WRITE_VOX_OFFSET + 2 * vol.num_voxels()];
    let put_i16 = |buf: &mut [u8], off: usize, v: i16| {
        buf[off..off + 2].copy_from_slice(&v.to_le_bytes());
    };
    let put_f32 = |buf: &mut [u8], off: usize, v: f32| {
        buf[off..off + 4].copy_from_slice(&v.to_le_bytes());
    };

    out[0..4].copy_from_slice(&348i32.to_le_bytes());
    out[38] = b'r';
    put_i16(&mut out, 40, 3);
    for (a, &d) in dims.iter().enumerate() {
        put_i16(&mut out, 42 + 2 * a, d as i16);
    }
    for a in 4..8 {
        put_i16(&mut out, 40 + 2 * a, 1);
    }
    put_i16(&mut out, 70, DT_UINT16);
    put_i16(&mut out, 72, 16);
    put_f32(&mut out, 76, 1.0); // qfac, unused with qform_code = 0
    let spacing = vol.spacing();
    for (a, &s) in spacing.iter().enumerate() {
        put_f32(&mut out, 80 + 4 * a, s as f32);
    }
    put_f32(&mut out, 108, WRITE_VOX_OFFSET as f32);
    put_f32(&mut out, 112, 1.0); // scl_slope
    put_f32(&mut out, 116, 0.0); // scl_inter
    out[123] = 2; // NIFTI_UNITS_MM
    put_i16(&mut out, 252, 0); // qform_code
    put_i16(&mut out, 254, 1); // sform_code: scanner anatomical
    let aff = vol.affine();
    for r in 0..3 {
        for c in 0..4 {
            put_f32(&mut out, 280 + 16 * r + 4 * c, aff[(r, c)] as f32);
        }
    }
    out[344..348].copy_from_slice(MAGIC_SINGLE);
    // bytes 348..352 stay zero: no header extensions

    let mut off = WRITE_VOX_OFFSET;
    for &l in vol.data() {
        out[off..off + 2].copy_from_slice(&(l as u16).to_le_bytes());
        off += 2;
    }
    Ok(out)
}

fn looks_gzipped(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b
}

/// Reads a `.nii` or `.nii.gz` file in its stored orientation.
pub fn read_nifti(path: &Path) -> Result<LabelVolume> {
    let raw = fs::read(path)?;
    let bytes = if looks_gzipped(&raw) {
        let mut dec = GzDecoder::new(raw.as_slice());
        let mut out = Vec::new();
        dec.read_to_end(&mut out)
            .map_err(|e| Error::CorruptGzip(e.to_string()))?;
        out
    } else {
        raw
    };
    parse_nifti_bytes(&bytes)
}

/// Reads a file and reorients it into the canonical frame.
pub fn read_nifti_canonical(path: &Path) -> Result<LabelVolume> {
    read_nifti(path)?.reorient_ras()
}

/// Writes a `.nii` file, gzip-compressed when the path ends in `.gz`.
pub fn write_nifti(vol: &LabelVolume, path: &Path) -> Result<()> {
    let bytes = write_nifti_bytes(vol)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz")) {
        let file = fs::File::create(path)?;
        let mut enc = GzEncoder::new(file, flate2::Compression::default());
        enc.write_all(&bytes)?;
        enc.finish()?;
    } else {
        fs::write(path, bytes)?;
    }
    Ok(())
}
