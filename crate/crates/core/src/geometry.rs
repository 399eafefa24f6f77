//! Cord centerline extraction and curvature-aware distances along it.
//!
//! The centerline has one point per axial slice between the most inferior and
//! most superior slices that contain cord voxels. Each point is the in-plane
//! center of mass of the slice, gaps are linearly interpolated, and the
//! in-plane coordinates are smoothed with a centered moving average.

use std::io::Write;
use std::ops::RangeInclusive;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::volume::{LabelMap, PmjPoint};

pub const DEFAULT_SMOOTHING_WINDOW: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct Centerline {
    first_slice: usize,
    points: Vec<[f64; 3]>,
    cumulative: Vec<f64>,
    interpolated: Vec<bool>,
    smoothing_window: usize,
    n_slices: usize,
    superior_ascending: bool,
}

/// Distance between two slices along the centerline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArcDistance {
    pub mm: f64,
    /// A queried slice lay outside the centerline and was moved to its nearest end.
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PmjDistance {
    pub mm: f64,
    /// Centerline slice nearest to the PMJ.
    pub projection_slice: usize,
    /// Euclidean gap between the PMJ and its projection, included in `mm`.
    pub offset_mm: f64,
    pub clamped: bool,
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = values.len();
    (0..n)
        .map(|k| {
            let h = half.min(k).min(n - 1 - k);
            let span = &values[k - h..=k + h];
            span.iter().sum::<f64>() / span.len() as f64
        })
        .collect()
}

pub fn extract_centerline(cord: &LabelMap, smoothing_window: usize) -> Result<Centerline> {
    if smoothing_window == 0 || smoothing_window.is_multiple_of(2) {
        return Err(Error::Argument(format!(
            "smoothing window must be a positive odd number of slices, got {smoothing_window}"
        )));
    }
    let grid = cord.grid();
    let orientation = grid.require_axial()?;
    let nx = grid.dims()[0];
    let plane = grid.slice_len();

    let mut centroids: Vec<Option<[f64; 2]>> = cord
        .data()
        .chunks_exact(plane)
        .map(|slab| {
            let (mut si, mut sj, mut n) = (0.0, 0.0, 0usize);
            for (p, _) in slab.iter().enumerate().filter(|(_, &v)| v != 0) {
                si += (p % nx) as f64;
                sj += (p / nx) as f64;
                n += 1;
            }
            (n > 0).then(|| [si / n as f64, sj / n as f64])
        })
        .collect();

    let covered: Vec<usize> = (0..centroids.len()).filter(|&k| centroids[k].is_some()).collect();
    let (first, last) = match (covered.first(), covered.last()) {
        (None, _) | (_, None) => return Err(Error::Degenerate("cord mask is empty".into())),
        (Some(&f), Some(&l)) => (f, l),
    };
    if covered.len() < 2 {
        return Err(Error::Geometry("cord mask covers fewer than 2 axial slices".into()));
    }

    let mut interpolated = vec![false; last - first + 1];
    for pair in covered.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (ca, cb) = (centroids[a].expect("covered"), centroids[b].expect("covered"));
        for k in a + 1..b {
            let t = (k - a) as f64 / (b - a) as f64;
            centroids[k] = Some([ca[0] + t * (cb[0] - ca[0]), ca[1] + t * (cb[1] - ca[1])]);
            interpolated[k - first] = true;
        }
    }
    let raw: Vec<[f64; 2]> = centroids[first..=last].iter().map(|c| c.expect("filled")).collect();
    let xs = moving_average(&raw.iter().map(|c| c[0]).collect::<Vec<_>>(), smoothing_window);
    let ys = moving_average(&raw.iter().map(|c| c[1]).collect::<Vec<_>>(), smoothing_window);

    let points: Vec<[f64; 3]> = (0..raw.len())
        .map(|n| grid.voxel_to_world([xs[n], ys[n], (first + n) as f64]))
        .collect();
    let mut cumulative = Vec::with_capacity(points.len());
    cumulative.push(0.0);
    for w in points.windows(2) {
        let prev = *cumulative.last().expect("seeded");
        cumulative.push(prev + distance(w[0], w[1]));
    }

    Ok(Centerline {
        first_slice: first,
        points,
        cumulative,
        interpolated,
        smoothing_window,
        n_slices: grid.n_slices(),
        superior_ascending: orientation.axes()[2].is_positive(),
    })
}

impl Centerline {
    pub fn slices(&self) -> RangeInclusive<usize> {
        self.first_slice..=self.first_slice + self.points.len() - 1
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    /// Cumulative arc length in mm, starting at 0 on the first slice.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn total_length(&self) -> f64 {
        *self.cumulative.last().expect("at least two points")
    }

    pub fn smoothing_window(&self) -> usize {
        self.smoothing_window
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    /// True when increasing slice index moves superiorly (rostrally).
    pub fn superior_ascending(&self) -> bool {
        self.superior_ascending
    }

    pub fn is_interpolated(&self, slice: usize) -> bool {
        self.slices().contains(&slice) && self.interpolated[slice - self.first_slice]
    }

    pub fn point(&self, slice: usize) -> Option<[f64; 3]> {
        self.slices()
            .contains(&slice)
            .then(|| self.points[slice - self.first_slice])
    }

    /// Position in the point table for `slice`, clamped to the covered range.
    fn resolve(&self, slice: i64) -> Result<(usize, bool)> {
        if slice < 0 || slice >= self.n_slices as i64 {
            return Err(Error::Range(format!(
                "slice {slice} outside volume of {} slices",
                self.n_slices
            )));
        }
        let s = slice as usize;
        let range = self.slices();
        if s < *range.start() {
            Ok((0, true))
        } else if s > *range.end() {
            Ok((self.points.len() - 1, true))
        } else {
            Ok((s - self.first_slice, false))
        }
    }

    pub fn arc_length_between(&self, slice_a: i64, slice_b: i64) -> Result<ArcDistance> {
        let (a, ca) = self.resolve(slice_a)?;
        let (b, cb) = self.resolve(slice_b)?;
        Ok(ArcDistance {
            mm: (self.cumulative[b] - self.cumulative[a]).abs(),
            clamped: ca || cb,
        })
    }

    /// Arc length from the PMJ's nearest centerline point to `slice`, plus the
    /// straight gap between the PMJ and that point.
    pub fn pmj_distance(&self, pmj: &PmjPoint, slice: i64) -> Result<PmjDistance> {
        let (target, clamped) = self.resolve(slice)?;
        let (proj, offset) = self.points.iter().map(|&p| distance(p, pmj.point_mm)).enumerate().fold(
            (0usize, f64::INFINITY),
            |best, (i, d)| if d < best.1 { (i, d) } else { best },
        );
        Ok(PmjDistance {
            mm: (self.cumulative[target] - self.cumulative[proj]).abs() + offset,
            projection_slice: self.first_slice + proj,
            offset_mm: offset,
            clamped,
        })
    }

    /// CSV with columns `slice_index,x_mm,y_mm,z_mm,cumulative_mm`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["slice_index", "x_mm", "y_mm", "z_mm", "cumulative_mm"])?;
        for (n, (p, s)) in self.points.iter().zip(&self.cumulative).enumerate() {
            w.write_record([
                (self.first_slice + n).to_string(),
                format!("{:.6}", p[0]),
                format!("{:.6}", p[1]),
                format!("{:.6}", p[2]),
                format!("{s:.6}"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
