//! Voxel grids, scalar volumes and label maps.
//!
//! Data are stored x-fastest (`index = i + nx * (j + ny * k)`), the NIfTI
//! on-disk order. The third voxel axis is the "slice" axis throughout.

mod nifti;
mod orientation;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use nifti::{read_label_map, read_nifti, write_label_map, write_nifti, DataType};
pub use orientation::{orientation_of, Direction, Orientation};

/// Row-major 4×4 voxel-to-world matrix (mm).
pub type Affine = [[f64; 4]; 4];

pub fn diagonal_affine(spacing: [f64; 3]) -> Affine {
    let mut a = [[0.0; 4]; 4];
    for k in 0..3 {
        a[k][k] = spacing[k];
    }
    a[3][3] = 1.0;
    a
}

/// Geometry shared by every volume defined on the same lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: Affine,
}

impl Grid {
    /// Builds a grid whose spacing is the column norms of `affine`.
    pub fn new(dims: [usize; 3], affine: Affine) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Contract(format!("grid dims {dims:?} contain a zero")));
        }
        let mut spacing = [0.0; 3];
        for (k, s) in spacing.iter_mut().enumerate() {
            *s = (0..3).map(|r| affine[r][k] * affine[r][k]).sum::<f64>().sqrt();
        }
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Geometry(format!(
                "affine has a degenerate column (spacing {spacing:?})"
            )));
        }
        if affine.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("affine contains non-finite entries".into()));
        }
        Ok(Grid { dims, spacing, affine })
    }

    /// Axis-aligned RAS grid with the given spacing and origin at voxel 0.
    pub fn with_spacing(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        Grid::new(dims, diagonal_affine(spacing))
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Affine {
        &self.affine
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice_len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn n_slices(&self) -> usize {
        self.dims[2]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn orientation(&self) -> Result<Orientation> {
        orientation_of(&self.affine)
    }

    pub fn voxel_to_world(&self, v: [f64; 3]) -> [f64; 3] {
        let a = &self.affine;
        let mut out = [0.0; 3];
        for (r, o) in out.iter_mut().enumerate() {
            *o = a[r][0] * v[0] + a[r][1] * v[1] + a[r][2] * v[2] + a[r][3];
        }
        out
    }

    pub fn world_to_voxel(&self, p: [f64; 3]) -> Result<[f64; 3]> {
        let m = orientation::linear_part(&self.affine);
        let det = orientation::det3(&m);
        if det.abs() < 1e-12 {
            return Err(Error::Geometry("affine linear part is singular".into()));
        }
        let inv = invert3(&m, det);
        let d = [
            p[0] - self.affine[0][3],
            p[1] - self.affine[1][3],
            p[2] - self.affine[2][3],
        ];
        let mut out = [0.0; 3];
        for (r, o) in out.iter_mut().enumerate() {
            *o = inv[r][0] * d[0] + inv[r][1] * d[1] + inv[r][2] * d[2];
        }
        Ok(out)
    }

    /// True when every voxel axis is parallel to a world axis.
    pub fn is_axis_aligned(&self) -> bool {
        (0..3).all(|c| {
            let nonzero = (0..3)
                .filter(|&r| self.affine[r][c].abs() > 1e-6 * self.spacing[c])
                .count();
            nonzero == 1
        })
    }

    /// Axis-aligned grid whose third voxel axis runs inferior/superior.
    pub fn require_axial(&self) -> Result<Orientation> {
        if !self.is_axis_aligned() {
            return Err(Error::Geometry(
                "oblique or sheared affine; axial slices required".into(),
            ));
        }
        let o = self.orientation()?;
        if o.axes()[2].axis() != 2 {
            return Err(Error::Geometry(format!(
                "slice axis must run inferior-superior, volume is {o}"
            )));
        }
        Ok(o)
    }

    /// Same lattice: equal dims and affine within 1e-6 mm.
    pub fn matches(&self, other: &Grid) -> bool {
        self.dims == other.dims
            && self
                .affine
                .iter()
                .flatten()
                .zip(other.affine.iter().flatten())
                .all(|(a, b)| (a - b).abs() <= 1e-6)
    }

    pub(crate) fn ensure_matches(&self, other: &Grid, what: &str) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "grid mismatch for {what}: dims {:?} vs {:?}",
                self.dims, other.dims
            )))
        }
    }
}

fn invert3(m: &[[f64; 3]; 3], det: f64) -> [[f64; 3]; 3] {
    let mut inv = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
            let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
            inv[r][c] = (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) / det;
        }
    }
    inv
}

/// Scalar volume. Values are held as `f64`; `dtype` records the on-disk type.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    grid: Grid,
    data: Vec<f64>,
    dtype: DataType,
}

impl Volume3D {
    pub fn new(grid: Grid, data: Vec<f64>, dtype: DataType) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Contract(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                grid.dims()
            )));
        }
        Ok(Volume3D { grid, data, dtype })
    }

    pub fn filled(grid: Grid, value: f64) -> Self {
        let n = grid.len();
        Volume3D {
            grid,
            data: vec![value; n],
            dtype: DataType::Float32,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn dtype(&self) -> DataType {
        self.dtype
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.grid.index(i, j, k)]
    }

    pub fn into_parts(self) -> (Grid, Vec<f64>, DataType) {
        (self.grid, self.data, self.dtype)
    }
}

/// Integer label volume: `{0} ∪ {2..8}` for rootlets, `{0, 1}` for masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    grid: Grid,
    data: Vec<u8>,
}

impl Eq for Grid {}

pub const ROOTLET_CLASSES: std::ops::RangeInclusive<u8> = 2..=8;

impl LabelMap {
    pub fn new(grid: Grid, data: Vec<u8>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Contract(format!(
                "label data length {} does not match dims {:?}",
                data.len(),
                grid.dims()
            )));
        }
        Ok(LabelMap { grid, data })
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        LabelMap { grid, data: vec![0; n] }
    }

    /// Integer-valued scalar volume to labels; rejects fractional or out-of-range values.
    pub fn from_volume(vol: &Volume3D) -> Result<Self> {
        let data = vol
            .data()
            .iter()
            .map(|&v| {
                if v.fract() == 0.0 && (0.0..=255.0).contains(&v) {
                    Ok(v as u8)
                } else {
                    Err(Error::Contract(format!("value {v} is not a label in 0..=255")))
                }
            })
            .collect::<Result<Vec<u8>>>()?;
        LabelMap::new(vol.grid().clone(), data)
    }

    pub fn to_volume(&self) -> Volume3D {
        Volume3D {
            grid: self.grid.clone(),
            data: self.data.iter().map(|&v| f64::from(v)).collect(),
            dtype: DataType::Uint8,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> u8 {
        self.data[self.grid.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: u8) {
        let idx = self.grid.index(i, j, k);
        self.data[idx] = v;
    }

    pub fn labels(&self) -> BTreeSet<u8> {
        let mut seen = [false; 256];
        for &v in &self.data {
            seen[v as usize] = true;
        }
        (0..=255u8).filter(|&v| seen[v as usize]).collect()
    }

    pub fn count(&self, label: u8) -> usize {
        self.data.iter().filter(|&&v| v == label).count()
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Binary mask of voxels equal to `label`.
    pub fn indicator(&self, label: u8) -> LabelMap {
        LabelMap {
            grid: self.grid.clone(),
            data: self.data.iter().map(|&v| u8::from(v == label)).collect(),
        }
    }

    /// Binary mask of all nonzero voxels.
    pub fn nonzero(&self) -> LabelMap {
        LabelMap {
            grid: self.grid.clone(),
            data: self.data.iter().map(|&v| u8::from(v != 0)).collect(),
        }
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v <= 1)
    }

    pub fn ensure_binary(&self, what: &str) -> Result<()> {
        if self.is_binary() {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "{what} must be a binary mask with values in {{0, 1}}"
            )))
        }
    }

    pub fn ensure_rootlet_classes(&self, what: &str) -> Result<()> {
        match self
            .labels()
            .into_iter()
            .find(|&v| v != 0 && !ROOTLET_CLASSES.contains(&v))
        {
            None => Ok(()),
            Some(bad) => Err(Error::Contract(format!(
                "{what} contains label {bad}; rootlet classes are 2..=8"
            ))),
        }
    }

    /// Sorted slice indices that hold at least one nonzero voxel.
    pub fn occupied_slices(&self) -> Vec<usize> {
        let plane = self.grid.slice_len();
        self.data
            .chunks_exact(plane)
            .enumerate()
            .filter(|(_, s)| s.iter().any(|&v| v != 0))
            .map(|(k, _)| k)
            .collect()
    }
}

/// Pontomedullary junction position in world coordinates (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmjPoint {
    pub point_mm: [f64; 3],
}

impl PmjPoint {
    pub fn new(point_mm: [f64; 3]) -> Result<Self> {
        if point_mm.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("PMJ coordinate {point_mm:?} is not finite")));
        }
        Ok(PmjPoint { point_mm })
    }

    pub fn from_voxel(grid: &Grid, voxel: [f64; 3]) -> Result<Self> {
        PmjPoint::new(grid.voxel_to_world(voxel))
    }

    /// Centroid of the nonzero voxels of a PMJ label volume, plus the voxel count.
    pub fn from_label(label: &LabelMap) -> Result<(Self, usize)> {
        let mut sum = [0.0; 3];
        let mut n = 0usize;
        for (idx, _) in label.data().iter().enumerate().filter(|(_, &v)| v != 0) {
            let c = label.grid().coords(idx);
            for k in 0..3 {
                sum[k] += c[k] as f64;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Degenerate("PMJ label volume has no nonzero voxel".into()));
        }
        let voxel = sum.map(|s| s / n as f64);
        Ok((PmjPoint::from_voxel(label.grid(), voxel)?, n))
    }

    /// Checks the point lies inside the grid's voxel bounding box.
    pub fn ensure_within(&self, grid: &Grid) -> Result<()> {
        let v = grid.world_to_voxel(self.point_mm)?;
        let dims = grid.dims();
        let inside = (0..3).all(|k| v[k] >= -0.5 - 1e-6 && v[k] <= dims[k] as f64 - 0.5 + 1e-6);
        if inside {
            Ok(())
        } else {
            Err(Error::Range(format!(
                "PMJ {:?} mm (voxel {v:?}) lies outside the volume",
                self.point_mm
            )))
        }
    }
}
