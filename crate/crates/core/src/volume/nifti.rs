//! Single-file NIfTI-1 reader and writer (`.nii` and `.nii.gz`).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::volume::{Affine, Grid, LabelMap, Volume3D};

const HEADER_SIZE: usize = 348;
const DEFAULT_VOX_OFFSET: usize = 352;
const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
const MAGIC_PAIR: &[u8; 4] = b"ni1\0";

mod offset {
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const DESCRIP: usize = 148;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN_B: usize = 256;
    pub const QOFFSET_X: usize = 268;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

/// On-disk voxel type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataType {
    Uint8,
    Int8,
    Int16,
    Uint16,
    Int32,
    Float32,
    Float64,
}

impl DataType {
    pub const ALL: [DataType; 7] = [
        DataType::Uint8,
        DataType::Int8,
        DataType::Int16,
        DataType::Uint16,
        DataType::Int32,
        DataType::Float32,
        DataType::Float64,
    ];

    pub fn code(self) -> i16 {
        match self {
            DataType::Uint8 => 2,
            DataType::Int16 => 4,
            DataType::Int32 => 8,
            DataType::Float32 => 16,
            DataType::Float64 => 64,
            DataType::Int8 => 256,
            DataType::Uint16 => 512,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        Ok(match code {
            2 => DataType::Uint8,
            4 => DataType::Int16,
            8 => DataType::Int32,
            16 => DataType::Float32,
            64 => DataType::Float64,
            256 => DataType::Int8,
            512 => DataType::Uint16,
            other => return Err(Error::Unsupported(format!("NIfTI datatype code {other}"))),
        })
    }

    pub fn size(self) -> usize {
        match self {
            DataType::Uint8 | DataType::Int8 => 1,
            DataType::Int16 | DataType::Uint16 => 2,
            DataType::Int32 | DataType::Float32 => 4,
            DataType::Float64 => 8,
        }
    }

    pub fn is_float(self) -> bool {
        matches!(self, DataType::Float32 | DataType::Float64)
    }
}

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

struct Reader<'a> {
    buf: &'a [u8],
    endian: Endian,
}

impl Reader<'_> {
    fn bytes<const N: usize>(&self, at: usize) -> [u8; N] {
        let mut b: [u8; N] = self.buf[at..at + N].try_into().expect("in-bounds header field");
        if matches!(self.endian, Endian::Big) {
            b.reverse();
        }
        b
    }

    fn i16(&self, at: usize) -> i16 {
        i16::from_le_bytes(self.bytes(at))
    }

    fn i32(&self, at: usize) -> i32 {
        i32::from_le_bytes(self.bytes(at))
    }

    fn f32(&self, at: usize) -> f32 {
        f32::from_le_bytes(self.bytes(at))
    }
}

fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b
}

fn wants_gzip(path: &Path) -> bool {
    path.to_string_lossy().to_ascii_lowercase().ends_with(".gz")
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume3D> {
    let path = path.as_ref();
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    if is_gzip(&raw) {
        let mut out = Vec::new();
        MultiGzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        raw = out;
    }
    decode(&raw)
}

pub fn write_nifti(vol: &Volume3D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(vol)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = if wants_gzip(path) {
        // GzEncoder writes mtime 0 and no file name, so output is reproducible.
        let mut gz = GzEncoder::new(&mut w, Compression::default());
        gz.write_all(&bytes).and_then(|_| gz.finish().map(|_| ()))
    } else {
        w.write_all(&bytes)
    };
    res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_label_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    LabelMap::from_volume(&read_nifti(path)?)
}

/// Label maps are always stored as uint8.
pub fn write_label_map(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    write_nifti(&map.to_volume(), path)
}

pub(crate) fn decode(buf: &[u8]) -> Result<Volume3D> {
    if buf.len() < HEADER_SIZE {
        return Err(Error::Format(format!("header truncated ({} bytes)", buf.len())));
    }
    let endian = match (
        i32::from_le_bytes(buf[0..4].try_into().expect("4 bytes")),
        i32::from_be_bytes(buf[0..4].try_into().expect("4 bytes")),
    ) {
        (348, _) => Endian::Little,
        (_, 348) => Endian::Big,
        (n, _) => return Err(Error::Format(format!("sizeof_hdr is {n}, expected 348"))),
    };
    let magic = &buf[offset::MAGIC..offset::MAGIC + 4];
    if magic == MAGIC_PAIR {
        return Err(Error::Unsupported("two-file (.hdr/.img) NIfTI-1".into()));
    }
    if magic != MAGIC_SINGLE {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let r = Reader { buf, endian };

    let ndim = r.i16(offset::DIM);
    if !(1..=7).contains(&ndim) {
        return Err(Error::Format(format!("dim[0] = {ndim} out of range 1..=7")));
    }
    let mut dims = [1usize; 3];
    for k in 0..ndim as usize {
        let d = r.i16(offset::DIM + 2 * (k + 1));
        if d < 1 {
            return Err(Error::Format(format!("dim[{}] = {d}", k + 1)));
        }
        if k < 3 {
            dims[k] = d as usize;
        } else if d != 1 {
            return Err(Error::Unsupported(format!(
                "non-singleton dimension {} of size {d}",
                k + 1
            )));
        }
    }

    let dtype = DataType::from_code(r.i16(offset::DATATYPE))?;
    let bitpix = r.i16(offset::BITPIX);
    if bitpix as usize != dtype.size() * 8 {
        return Err(Error::Format(format!("bitpix {bitpix} inconsistent with {dtype:?}")));
    }

    let vox_offset = r.f32(offset::VOX_OFFSET);
    if !(vox_offset >= DEFAULT_VOX_OFFSET as f32) || vox_offset.fract() != 0.0 {
        return Err(Error::Format(format!(
            "vox_offset {vox_offset} invalid for single-file NIfTI-1"
        )));
    }
    let start = vox_offset as usize;

    let mut pixdim = [0.0f64; 8];
    for (k, p) in pixdim.iter_mut().enumerate() {
        *p = f64::from(r.f32(offset::PIXDIM + 4 * k));
    }
    let affine = header_affine(&r, &pixdim)?;
    let grid = Grid::new(dims, affine)?;

    let n = grid.len();
    let nbytes = n * dtype.size();
    if buf.len() < start + nbytes {
        return Err(Error::Stream(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            format!(
                "voxel data truncated: need {} bytes after offset {start}, have {}",
                nbytes,
                buf.len().saturating_sub(start)
            ),
        )));
    }
    let raw = Reader {
        buf: &buf[start..start + nbytes],
        endian,
    };
    let mut data: Vec<f64> = (0..n)
        .map(|i| {
            let at = i * dtype.size();
            match dtype {
                DataType::Uint8 => f64::from(raw.buf[at]),
                DataType::Int8 => f64::from(raw.buf[at] as i8),
                DataType::Int16 => f64::from(raw.i16(at)),
                DataType::Uint16 => f64::from(u16::from_le_bytes(raw.bytes(at))),
                DataType::Int32 => f64::from(raw.i32(at)),
                DataType::Float32 => f64::from(raw.f32(at)),
                DataType::Float64 => f64::from_le_bytes(raw.bytes(at)),
            }
        })
        .collect();

    let slope = f64::from(r.f32(offset::SCL_SLOPE));
    let inter = f64::from(r.f32(offset::SCL_INTER));
    let mut out_type = dtype;
    if slope != 0.0 && slope.is_finite() && inter.is_finite() && (slope != 1.0 || inter != 0.0) {
        for v in &mut data {
            *v = *v * slope + inter;
        }
        out_type = DataType::Float64;
    }
    Volume3D::new(grid, data, out_type)
}

fn header_affine(r: &Reader<'_>, pixdim: &[f64; 8]) -> Result<Affine> {
    let mut a = [[0.0; 4]; 4];
    a[3][3] = 1.0;
    if r.i16(offset::SFORM_CODE) > 0 {
        for (row, out) in a.iter_mut().take(3).enumerate() {
            for (c, v) in out.iter_mut().enumerate() {
                *v = f64::from(r.f32(offset::SROW_X + 16 * row + 4 * c));
            }
        }
        return Ok(a);
    }
    if r.i16(offset::QFORM_CODE) > 0 {
        let b = f64::from(r.f32(offset::QUATERN_B));
        let c = f64::from(r.f32(offset::QUATERN_B + 4));
        let d = f64::from(r.f32(offset::QUATERN_B + 8));
        let rot = quaternion_to_rotation(b, c, d);
        let qfac = if pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let scale = [pixdim[1], pixdim[2], pixdim[3] * qfac];
        for row in 0..3 {
            for col in 0..3 {
                a[row][col] = rot[row][col] * scale[col];
            }
            a[row][3] = f64::from(r.f32(offset::QOFFSET_X + 4 * row));
        }
        return Ok(a);
    }
    for k in 0..3 {
        a[k][k] = if pixdim[k + 1] > 0.0 { pixdim[k + 1] } else { 1.0 };
    }
    Ok(a)
}

fn quaternion_to_rotation(b: f64, c: f64, d: f64) -> [[f64; 3]; 3] {
    let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
    [
        [
            a * a + b * b - c * c - d * d,
            2.0 * (b * c - a * d),
            2.0 * (b * d + a * c),
        ],
        [
            2.0 * (b * c + a * d),
            a * a + c * c - b * b - d * d,
            2.0 * (c * d - a * b),
        ],
        [
            2.0 * (b * d - a * c),
            2.0 * (c * d + a * b),
            a * a + d * d - c * c - b * b,
        ],
    ]
}

/// Quaternion (b, c, d) and qfac for an affine with orthogonal columns.
fn rotation_to_quaternion(affine: &Affine, spacing: [f64; 3]) -> Option<([f64; 3], f64)> {
    let mut m = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            m[r][c] = affine[r][c] / spacing[c];
        }
    }
    for i in 0..3 {
        for j in (i + 1)..3 {
            let dot: f64 = (0..3).map(|r| m[r][i] * m[r][j]).sum();
            if dot.abs() > 1e-5 {
                return None;
            }
        }
    }
    let mut qfac = 1.0;
    if super::orientation::det3(&m) < 0.0 {
        qfac = -1.0;
        for row in &mut m {
            row[2] = -row[2];
        }
    }
    let trace = m[0][0] + m[1][1] + m[2][2] + 1.0;
    let (a, b, c, d);
    if trace > 0.5 {
        let a2 = 0.5 * trace.sqrt();
        a = a2;
        b = 0.25 * (m[2][1] - m[1][2]) / a2;
        c = 0.25 * (m[0][2] - m[2][0]) / a2;
        d = 0.25 * (m[1][0] - m[0][1]) / a2;
    } else {
        let xd = 1.0 + m[0][0] - (m[1][1] + m[2][2]);
        let yd = 1.0 + m[1][1] - (m[0][0] + m[2][2]);
        let zd = 1.0 + m[2][2] - (m[0][0] + m[1][1]);
        if xd > 1.0 {
            let b2 = 0.5 * xd.sqrt();
            b = b2;
            c = 0.25 * (m[0][1] + m[1][0]) / b2;
            d = 0.25 * (m[0][2] + m[2][0]) / b2;
            a = 0.25 * (m[2][1] - m[1][2]) / b2;
        } else if yd > 1.0 {
            let c2 = 0.5 * yd.sqrt();
            c = c2;
            b = 0.25 * (m[0][1] + m[1][0]) / c2;
            d = 0.25 * (m[1][2] + m[2][1]) / c2;
            a = 0.25 * (m[0][2] - m[2][0]) / c2;
        } else {
            let d2 = 0.5 * zd.sqrt();
            d = d2;
            b = 0.25 * (m[0][2] + m[2][0]) / d2;
            c = 0.25 * (m[1][2] + m[2][1]) / d2;
            a = 0.25 * (m[1][0] - m[0][1]) / d2;
        }
    }
    let s = if a < 0.0 { -1.0 } else { 1.0 };
    Some(([s * b, s * c, s * d], qfac))
}

pub(crate) fn encode(vol: &Volume3D) -> Result<Vec<u8>> {
    let grid = vol.grid();
    let dims = grid.dims();
    if dims.iter().any(|&d| d == 0 || d > i16::MAX as usize) {
        return Err(Error::Contract(format!("dims {dims:?} cannot be stored in NIfTI-1")));
    }
    let dtype = vol.dtype();
    let mut out = vec![0u8; DEFAULT_VOX_OFFSET + grid.len() * dtype.size()];
    let put = |out: &mut [u8], at: usize, b: &[u8]| out[at..at + b.len()].copy_from_slice(b);

    put(&mut out, 0, &(HEADER_SIZE as i32).to_le_bytes());
    put(&mut out, offset::DIM, &3i16.to_le_bytes());
    for (k, &d) in dims.iter().enumerate() {
        put(&mut out, offset::DIM + 2 * (k + 1), &(d as i16).to_le_bytes());
    }
    for k in 4..8 {
        put(&mut out, offset::DIM + 2 * k, &1i16.to_le_bytes());
    }
    put(&mut out, offset::DATATYPE, &dtype.code().to_le_bytes());
    put(&mut out, offset::BITPIX, &((dtype.size() * 8) as i16).to_le_bytes());

    let affine = grid.affine();
    let spacing = grid.spacing();
    let quat = rotation_to_quaternion(affine, spacing);
    let qfac = quat.map_or(1.0, |(_, q)| q);
    put(&mut out, offset::PIXDIM, &(qfac as f32).to_le_bytes());
    for k in 0..3 {
        put(
            &mut out,
            offset::PIXDIM + 4 * (k + 1),
            &(spacing[k] as f32).to_le_bytes(),
        );
    }
    for k in 4..8 {
        put(&mut out, offset::PIXDIM + 4 * k, &1f32.to_le_bytes());
    }
    put(&mut out, offset::VOX_OFFSET, &(DEFAULT_VOX_OFFSET as f32).to_le_bytes());
    put(&mut out, offset::SCL_SLOPE, &1f32.to_le_bytes());
    put(&mut out, offset::SCL_INTER, &0f32.to_le_bytes());
    // mm + seconds
    out[offset::XYZT_UNITS] = 2 | 8;
    put(&mut out, offset::DESCRIP, b"rootlet-levels");

    if let Some((q, _)) = quat {
        put(&mut out, offset::QFORM_CODE, &1i16.to_le_bytes());
        for (k, v) in q.iter().enumerate() {
            put(&mut out, offset::QUATERN_B + 4 * k, &(*v as f32).to_le_bytes());
        }
        for r in 0..3 {
            put(
                &mut out,
                offset::QOFFSET_X + 4 * r,
                &(affine[r][3] as f32).to_le_bytes(),
            );
        }
    }
    put(&mut out, offset::SFORM_CODE, &1i16.to_le_bytes());
    for r in 0..3 {
        for c in 0..4 {
            put(
                &mut out,
                offset::SROW_X + 16 * r + 4 * c,
                &(affine[r][c] as f32).to_le_bytes(),
            );
        }
    }
    put(&mut out, offset::MAGIC, MAGIC_SINGLE);

    let body = &mut out[DEFAULT_VOX_OFFSET..];
    for (i, &v) in vol.data().iter().enumerate() {
        let at = i * dtype.size();
        match dtype {
            DataType::Uint8 => body[at] = v.round() as u8,
            DataType::Int8 => body[at] = (v.round() as i8) as u8,
            DataType::Int16 => put(body, at, &(v.round() as i16).to_le_bytes()),
            DataType::Uint16 => put(body, at, &(v.round() as u16).to_le_bytes()),
            DataType::Int32 => put(body, at, &(v.round() as i32).to_le_bytes()),
            DataType::Float32 => put(body, at, &(v as f32).to_le_bytes()),
            DataType::Float64 => put(body, at, &v.to_le_bytes()),
        }
    }
    Ok(out)
}
