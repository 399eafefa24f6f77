//! Binary dilation with ball, cube and cross footprints.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::LabelMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ElementShape {
    /// Euclidean ball: `dx² + dy² + dz² ≤ r²`.
    #[default]
    Ball,
    /// Chebyshev cube: `max(|dx|, |dy|, |dz|) ≤ r`.
    Cube,
    /// Face-connected cross iterated `r` times: `|dx| + |dy| + |dz| ≤ r`.
    Cross,
}

impl fmt::Display for ElementShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElementShape::Ball => "ball",
            ElementShape::Cube => "cube",
            ElementShape::Cross => "cross",
        })
    }
}

impl FromStr for ElementShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ball" => Ok(ElementShape::Ball),
            "cube" => Ok(ElementShape::Cube),
            "cross" => Ok(ElementShape::Cross),
            other => Err(Error::Argument(format!("unknown structuring element {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuringElement {
    pub shape: ElementShape,
    pub radius: u32,
}

impl Default for StructuringElement {
    fn default() -> Self {
        StructuringElement {
            shape: ElementShape::Ball,
            radius: 3,
        }
    }
}

impl StructuringElement {
    pub fn new(shape: ElementShape, radius: u32) -> Result<Self> {
        if radius == 0 {
            return Err(Error::Argument("structuring element radius must be ≥ 1 voxel".into()));
        }
        Ok(StructuringElement { shape, radius })
    }

    /// Radius given in mm, converted with the mean voxel spacing and rounded.
    pub fn from_mm(shape: ElementShape, radius_mm: f64, spacing: [f64; 3]) -> Result<Self> {
        if !(radius_mm.is_finite() && radius_mm > 0.0) {
            return Err(Error::Argument(format!(
                "dilation radius {radius_mm} mm must be positive"
            )));
        }
        let mean = spacing.iter().sum::<f64>() / 3.0;
        let voxels = (radius_mm / mean).round().max(1.0);
        StructuringElement::new(shape, voxels as u32)
    }

    pub fn contains(&self, d: [i32; 3]) -> bool {
        let r = self.radius as i64;
        let [x, y, z] = d.map(i64::from);
        match self.shape {
            ElementShape::Ball => x * x + y * y + z * z <= r * r,
            ElementShape::Cube => x.abs().max(y.abs()).max(z.abs()) <= r,
            ElementShape::Cross => x.abs() + y.abs() + z.abs() <= r,
        }
    }

    /// Footprint offsets, ordered by dz then dy then dx.
    pub fn offsets(&self) -> Vec<[i32; 3]> {
        let r = self.radius as i32;
        let mut out = Vec::new();
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    if self.contains([dx, dy, dz]) {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

/// A voxel is set in the output iff the footprint centred on it covers an
/// input voxel.
pub fn dilate(mask: &LabelMap, elem: &StructuringElement) -> Result<LabelMap> {
    mask.ensure_binary("dilation input")?;
    let grid = mask.grid();
    let [nx, ny, nz] = grid.dims().map(|d| d as i64);
    let plane = (nx * ny) as usize;
    let r = elem.radius as i32;

    // in-plane offsets for each dz
    let layers: Vec<(i32, Vec<(i64, i64)>)> = (-r..=r)
        .map(|dz| {
            let xy = elem
                .offsets()
                .into_iter()
                .filter(|o| o[2] == dz)
                .map(|o| (i64::from(o[0]), i64::from(o[1])))
                .collect();
            (dz, xy)
        })
        .collect();

    // set voxels per slice
    let occupied: Vec<Vec<(i64, i64)>> = mask
        .data()
        .chunks_exact(plane)
        .map(|s| {
            s.iter()
                .enumerate()
                .filter(|(_, &v)| v != 0)
                .map(|(p, _)| (p as i64 % nx, p as i64 / nx))
                .collect()
        })
        .collect();

    let mut out = vec![0u8; grid.len()];
    out.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
        for (dz, xy) in &layers {
            let src = k as i64 + i64::from(*dz);
            if src < 0 || src >= nz {
                continue;
            }
            for &(ux, uy) in &occupied[src as usize] {
                for &(dx, dy) in xy {
                    let (x, y) = (ux + dx, uy + dy);
                    if x >= 0 && x < nx && y >= 0 && y < ny {
                        slab[(x + nx * y) as usize] = 1;
                    }
                }
            }
        }
    });
    LabelMap::new(grid.clone(), out)
}
