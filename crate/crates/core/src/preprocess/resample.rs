//! Resampling onto a new isotropic (or per-axis) spacing with the same
//! direction cosines and physical field of view.
//!
//! Output voxel centers are mapped into input voxel space and sampled there;
//! coordinates outside the input clamp to the nearest edge voxel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Grid, LabelMap, Volume3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Linear,
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleSpec {
    pub spacing: [f64; 3],
    pub interpolation: Interpolation,
}

impl ResampleSpec {
    pub fn isotropic(mm: f64, interpolation: Interpolation) -> Result<Self> {
        ResampleSpec {
            spacing: [mm; 3],
            interpolation,
        }
        .validated()
    }

    fn validated(self) -> Result<Self> {
        if self.spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
            Ok(self)
        } else {
            Err(Error::Argument(format!(
                "target spacing {:?} must be positive",
                self.spacing
            )))
        }
    }
}

const SAME_SPACING_RTOL: f64 = 1e-6;

/// Output grid for `spacing`, plus the per-axis input-voxel step per output voxel.
pub fn resampled_grid(grid: &Grid, spacing: [f64; 3]) -> Result<(Grid, [f64; 3])> {
    if !grid.is_axis_aligned() {
        return Err(Error::Geometry("resampling requires an axis-aligned affine".into()));
    }
    let old_dims = grid.dims();
    let old_spacing = grid.spacing();
    let old = grid.affine();
    let mut ratio = [0.0; 3];
    let mut dims = [0usize; 3];
    let mut first_center = [0.0; 3];
    for k in 0..3 {
        ratio[k] = spacing[k] / old_spacing[k];
        // spacings read back from float32 headers are only float32-exact
        if (ratio[k] - 1.0).abs() <= SAME_SPACING_RTOL {
            ratio[k] = 1.0;
        }
        let extent = old_dims[k] as f64 / ratio[k];
        dims[k] = ((extent - 1e-9).ceil() as usize).max(1);
        first_center[k] = 0.5 * ratio[k] - 0.5;
    }
    let mut affine = *old;
    for r in 0..3 {
        for c in 0..3 {
            affine[r][c] = old[r][c] * ratio[c];
        }
        affine[r][3] = old[r][3] + (0..3).map(|c| old[r][c] * first_center[c]).sum::<f64>();
    }
    Ok((Grid::new(dims, affine)?, ratio))
}

#[inline]
fn source_coord(j: usize, ratio: f64, n: usize) -> f64 {
    ((j as f64 + 0.5) * ratio - 0.5).clamp(0.0, (n - 1) as f64)
}

#[inline]
fn nearest(x: f64, n: usize) -> usize {
    ((x + 0.5).floor() as usize).min(n - 1)
}

fn sample_nearest<T: Copy + Send + Sync>(grid: &Grid, data: &[T], out: &Grid, ratio: [f64; 3]) -> Vec<T> {
    let od = out.dims();
    let id = grid.dims();
    let xs: Vec<usize> = (0..od[0])
        .map(|i| nearest(source_coord(i, ratio[0], id[0]), id[0]))
        .collect();
    let ys: Vec<usize> = (0..od[1])
        .map(|j| nearest(source_coord(j, ratio[1], id[1]), id[1]))
        .collect();
    let mut result = Vec::with_capacity(out.len());
    result.par_extend((0..od[2]).into_par_iter().flat_map_iter(|k| {
        let z = nearest(source_coord(k, ratio[2], id[2]), id[2]);
        let xs = &xs;
        ys.iter()
            .flat_map(move |&y| xs.iter().map(move |&x| data[grid.index(x, y, z)]))
            .collect::<Vec<_>>()
    }));
    result
}

fn axis_weights(n_out: usize, ratio: f64, n_in: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|j| {
            let x = source_coord(j, ratio, n_in);
            let lo = (x.floor() as usize).min(n_in - 1);
            let hi = (lo + 1).min(n_in - 1);
            (lo, hi, x - lo as f64)
        })
        .collect()
}

fn sample_linear(vol: &Volume3D, out: &Grid, ratio: [f64; 3]) -> Vec<f64> {
    let grid = vol.grid();
    let data = vol.data();
    let od = out.dims();
    let id = grid.dims();
    let wx = axis_weights(od[0], ratio[0], id[0]);
    let wy = axis_weights(od[1], ratio[1], id[1]);
    let wz = axis_weights(od[2], ratio[2], id[2]);
    let plane = od[0] * od[1];
    let mut result = vec![0.0; out.len()];
    result
        .par_chunks_mut(plane)
        .zip(wz.par_iter())
        .for_each(|(slab, &(z0, z1, fz))| {
            for (j, &(y0, y1, fy)) in wy.iter().enumerate() {
                for (i, &(x0, x1, fx)) in wx.iter().enumerate() {
                    let v = |x, y, z| data[grid.index(x, y, z)];
                    let c00 = v(x0, y0, z0) * (1.0 - fx) + v(x1, y0, z0) * fx;
                    let c10 = v(x0, y1, z0) * (1.0 - fx) + v(x1, y1, z0) * fx;
                    let c01 = v(x0, y0, z1) * (1.0 - fx) + v(x1, y0, z1) * fx;
                    let c11 = v(x0, y1, z1) * (1.0 - fx) + v(x1, y1, z1) * fx;
                    let c0 = c00 * (1.0 - fy) + c10 * fy;
                    let c1 = c01 * (1.0 - fy) + c11 * fy;
                    slab[i + od[0] * j] = c0 * (1.0 - fz) + c1 * fz;
                }
            }
        });
    result
}

pub fn resample_iso(vol: &Volume3D, spec: ResampleSpec) -> Result<Volume3D> {
    let spec = spec.validated()?;
    let (grid, ratio) = resampled_grid(vol.grid(), spec.spacing)?;
    let data = match spec.interpolation {
        Interpolation::Linear => sample_linear(vol, &grid, ratio),
        Interpolation::Nearest => sample_nearest(vol.grid(), vol.data(), &grid, ratio),
    };
    let dtype = match spec.interpolation {
        Interpolation::Linear if !vol.dtype().is_float() => crate::volume::DataType::Float32,
        _ => vol.dtype(),
    };
    Volume3D::new(grid, data, dtype)
}

/// Label maps only accept nearest-neighbour sampling.
pub fn resample_labels(map: &LabelMap, spec: ResampleSpec) -> Result<LabelMap> {
    let spec = spec.validated()?;
    if spec.interpolation != Interpolation::Nearest {
        return Err(Error::Contract(
            "label maps must be resampled with nearest interpolation".into(),
        ));
    }
    let (grid, ratio) = resampled_grid(map.grid(), spec.spacing)?;
    let data = sample_nearest(map.grid(), map.data(), &grid, ratio);
    LabelMap::new(grid, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{diagonal_affine, DataType};

    fn ramp(dims: [usize; 3], spacing: f64) -> Volume3D {
        let mut a = diagonal_affine([spacing; 3]);
        a[2][3] = 3.0;
        let g = Grid::new(dims, a).unwrap();
        let data = (0..g.len())
            .map(|idx| g.voxel_to_world(g.coords(idx).map(|c| c as f64))[2])
            .collect();
        Volume3D::new(g, data, DataType::Float64).unwrap()
    }

    #[test]
    fn constant_stays_constant() {
        let g = Grid::with_spacing([7, 5, 9], [0.6; 3]).unwrap();
        let v = Volume3D::filled(g, 42.5);
        for s in [0.6, 0.8, 1.0, 1.3, 2.0] {
            let out = resample_iso(&v, ResampleSpec::isotropic(s, Interpolation::Linear).unwrap()).unwrap();
            assert!(out.data().iter().all(|&x| (x - 42.5).abs() < 1e-12));
            assert_eq!(
                out.grid().spacing().map(|x| (x * 1e9).round()),
                [s * 1e9; 3].map(f64::round)
            );
        }
    }

    // Trilinear interpolation reproduces an affine function exactly away from
    // the clamped border; compare with the closed-form ramp at output centers.
    #[test]
    fn linear_ramp_matches_closed_form() {
        let v = ramp([6, 6, 20], 0.6);
        let out = resample_iso(&v, ResampleSpec::isotropic(1.0, Interpolation::Linear).unwrap()).unwrap();
        let g = out.grid();
        let in_first = v.grid().voxel_to_world([0.0; 3])[2];
        let in_last = v.grid().voxel_to_world([0.0, 0.0, 19.0])[2];
        let mut checked = 0;
        for idx in 0..g.len() {
            let z = g.voxel_to_world(g.coords(idx).map(|c| c as f64))[2];
            if z >= in_first && z <= in_last {
                assert!((out.data()[idx] - z).abs() < 1e-5, "{} vs {z}", out.data()[idx]);
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn dims_and_field_of_view() {
        let g = Grid::with_spacing([10, 10, 10], [0.6; 3]).unwrap();
        let (out, _) = resampled_grid(&g, [1.6; 3]).unwrap();
        assert_eq!(out.dims(), [4, 4, 4]);
        let (same, _) = resampled_grid(&g, [1.2; 3]).unwrap();
        assert_eq!(same.dims(), [5, 5, 5]);
        // lower edge of the field of view is preserved
        let in_edge = g.voxel_to_world([-0.5; 3]);
        let out_edge = same.voxel_to_world([-0.5; 3]);
        for k in 0..3 {
            assert!((in_edge[k] - out_edge[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_spacing_is_identity() {
        let v = ramp([4, 5, 6], 0.8);
        let out = resample_iso(&v, ResampleSpec::isotropic(0.8, Interpolation::Linear).unwrap()).unwrap();
        assert_eq!(out.grid().dims(), v.grid().dims());
        for (a, b) in out.data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn float32_spacing_treated_as_native() {
        let g = Grid::with_spacing([4, 4, 4], [f64::from(0.6f32); 3]).unwrap();
        let (out, ratio) = resampled_grid(&g, [0.6; 3]).unwrap();
        assert_eq!(ratio, [1.0; 3]);
        assert_eq!(out.affine(), g.affine());
    }

    #[test]
    fn nearest_preserves_label_set() {
        let g = Grid::with_spacing([9, 9, 9], [0.6; 3]).unwrap();
        let data = (0..g.len()).map(|i| [0u8, 2, 5][(i * 7 / 3) % 3]).collect();
        let m = LabelMap::new(g, data).unwrap();
        for s in [0.5, 0.8, 1.0, 1.4] {
            let out = resample_labels(&m, ResampleSpec::isotropic(s, Interpolation::Nearest).unwrap()).unwrap();
            assert!(out.labels().is_subset(&m.labels()));
        }
    }

    #[test]
    fn linear_labels_rejected() {
        let m = LabelMap::zeros(Grid::with_spacing([2, 2, 2], [1.0; 3]).unwrap());
        let err = resample_labels(&m, ResampleSpec::isotropic(2.0, Interpolation::Linear).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn nonpositive_spacing_rejected() {
        assert!(ResampleSpec::isotropic(0.0, Interpolation::Linear).is_err());
        assert!(ResampleSpec::isotropic(-1.0, Interpolation::Nearest).is_err());
    }
}
