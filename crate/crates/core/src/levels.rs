//! Spinal levels from a multi-class rootlets mask and a cord mask.
//!
//! Each rootlet class is intersected with the dilated cord; the most rostral
//! and most caudal intersection slices bound the level, which is then measured
//! from the PMJ along the centerline and projected back onto the cord mask.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{extract_centerline, Centerline, DEFAULT_SMOOTHING_WINDOW};
use crate::preprocess::{dilate, StructuringElement};
use crate::volume::{LabelMap, PmjPoint, ROOTLET_CLASSES};

#[derive(Debug, Clone)]
pub struct ClassIntersection {
    pub class: u8,
    pub mask: LabelMap,
    pub voxels: usize,
}

impl ClassIntersection {
    pub fn is_empty(&self) -> bool {
        self.voxels == 0
    }
}

/// Rootlet ∩ dilated cord, one entry per class 2..=8.
#[derive(Debug, Clone)]
pub struct Intersections {
    pub classes: Vec<ClassIntersection>,
}

impl Intersections {
    pub fn empty_classes(&self) -> Vec<u8> {
        self.classes.iter().filter(|c| c.is_empty()).map(|c| c.class).collect()
    }

    pub fn all_empty(&self) -> bool {
        self.classes.iter().all(ClassIntersection::is_empty)
    }
}

pub fn intersect_rootlets_cord(
    rootlets: &LabelMap,
    cord: &LabelMap,
    elem: &StructuringElement,
) -> Result<Intersections> {
    rootlets.grid().ensure_matches(cord.grid(), "rootlets vs cord")?;
    rootlets.ensure_rootlet_classes("rootlets")?;
    let dilated = dilate(&cord.nonzero(), elem)?;
    let classes = ROOTLET_CLASSES
        .collect::<Vec<u8>>()
        .into_par_iter()
        .map(|c| {
            let data: Vec<u8> = rootlets
                .data()
                .iter()
                .zip(dilated.data())
                .map(|(&r, &d)| u8::from(r == c && d != 0))
                .collect();
            let voxels = data.iter().filter(|&&v| v != 0).count();
            ClassIntersection {
                class: c,
                mask: LabelMap::new(rootlets.grid().clone(), data).expect("same grid"),
                voxels,
            }
        })
        .collect();
    Ok(Intersections { classes })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelFlags {
    pub empty: bool,
    /// The level touches the first or last slice of the volume.
    pub clipped_at_volume_edge: bool,
    /// A level slice lies outside the centerline and was measured at its nearest end.
    pub clamped_to_centerline: bool,
}

impl LevelFlags {
    pub fn labels(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.empty {
            out.push("empty");
        }
        if self.clipped_at_volume_edge {
            out.push("clipped_at_volume_edge");
        }
        if self.clamped_to_centerline {
            out.push("clamped_to_centerline");
        }
        out
    }

    fn parse(text: &str) -> Result<Self> {
        let mut f = LevelFlags::default();
        for tok in text.split(';').map(str::trim).filter(|t| !t.is_empty()) {
            match tok {
                "empty" => f.empty = true,
                "clipped_at_volume_edge" => f.clipped_at_volume_edge = true,
                "clamped_to_centerline" => f.clamped_to_centerline = true,
                other => return Err(Error::Report(format!("unknown level flag {other:?}"))),
            }
        }
        Ok(f)
    }
}

/// Slice bounds and PMJ distances of one spinal level. Slice and distance
/// fields are `None` for empty levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelExtent {
    pub level: u8,
    pub rostral_slice: Option<usize>,
    pub caudal_slice: Option<usize>,
    pub mid_slice: Option<usize>,
    pub pmj_rostral_mm: Option<f64>,
    pub pmj_mid_mm: Option<f64>,
    pub pmj_caudal_mm: Option<f64>,
    pub length_mm: Option<f64>,
    pub flags: LevelFlags,
}

impl LevelExtent {
    pub fn empty(level: u8) -> Self {
        LevelExtent {
            level,
            rostral_slice: None,
            caudal_slice: None,
            mid_slice: None,
            pmj_rostral_mm: None,
            pmj_mid_mm: None,
            pmj_caudal_mm: None,
            length_mm: None,
            flags: LevelFlags {
                empty: true,
                ..LevelFlags::default()
            },
        }
    }

    pub fn is_empty(&self) -> bool {
        self.flags.empty
    }

    /// Inclusive slice range, lowest index first.
    pub fn slice_span(&self) -> Option<(usize, usize)> {
        match (self.rostral_slice, self.caudal_slice) {
            (Some(r), Some(c)) => Some((r.min(c), r.max(c))),
            _ => None,
        }
    }
}

/// Rostral and caudal slices of a set of occupied slices, and the mid slice
/// rounded toward rostral.
pub fn bounding_slices(occupied: &[usize], superior_ascending: bool) -> Option<(usize, usize, usize)> {
    let lo = *occupied.iter().min()?;
    let hi = *occupied.iter().max()?;
    Some(if superior_ascending {
        (hi, lo, (lo + hi).div_ceil(2))
    } else {
        (lo, hi, (lo + hi) / 2)
    })
}

pub fn level_extents(intersections: &Intersections, cl: &Centerline, pmj: &PmjPoint) -> Result<Vec<LevelExtent>> {
    let last_slice = cl.n_slices() - 1;
    intersections
        .classes
        .iter()
        .map(|ci| {
            let occupied = ci.mask.occupied_slices();
            let Some((rostral, caudal, mid)) = bounding_slices(&occupied, cl.superior_ascending()) else {
                return Ok(LevelExtent::empty(ci.class));
            };
            let r = cl.pmj_distance(pmj, rostral as i64)?;
            let m = cl.pmj_distance(pmj, mid as i64)?;
            let c = cl.pmj_distance(pmj, caudal as i64)?;
            let (lo, hi) = (rostral.min(caudal), rostral.max(caudal));
            Ok(LevelExtent {
                level: ci.class,
                rostral_slice: Some(rostral),
                caudal_slice: Some(caudal),
                mid_slice: Some(mid),
                pmj_rostral_mm: Some(r.mm),
                pmj_mid_mm: Some(m.mm),
                pmj_caudal_mm: Some(c.mm),
                length_mm: Some(c.mm - r.mm),
                flags: LevelFlags {
                    empty: false,
                    clipped_at_volume_edge: lo == 0 || hi == last_slice,
                    clamped_to_centerline: r.clamped || m.clamped || c.clamped,
                },
            })
        })
        .collect()
}

/// One-hot level channels over the cord, plus a flattened label export.
#[derive(Debug, Clone)]
pub struct SpinalLevelMap {
    pub channels: Vec<(u8, LabelMap)>,
    pub flattened: LabelMap,
}

/// Channel for level c holds the cord voxels whose slice lies in the level's
/// span. Where spans overlap the flattened map keeps the lower level number.
pub fn project_levels(extents: &[LevelExtent], cord: &LabelMap) -> Result<SpinalLevelMap> {
    let grid = cord.grid();
    let plane = grid.slice_len();
    let mut ordered: Vec<&LevelExtent> = extents.iter().collect();
    ordered.sort_by_key(|e| e.level);

    let mut flattened = LabelMap::zeros(grid.clone());
    let mut channels = Vec::with_capacity(ordered.len());
    for e in ordered {
        let mut ch = LabelMap::zeros(grid.clone());
        if let Some((lo, hi)) = e.slice_span() {
            if hi >= grid.n_slices() {
                return Err(Error::Range(format!(
                    "level {} extends past slice {}",
                    e.level,
                    grid.n_slices() - 1
                )));
            }
            for k in lo..=hi {
                let range = k * plane..(k + 1) * plane;
                let src = &cord.data()[range.clone()];
                let out = &mut ch.data_mut()[range.clone()];
                let flat = &mut flattened.data_mut()[range];
                for ((o, f), &s) in out.iter_mut().zip(flat.iter_mut()).zip(src) {
                    if s != 0 {
                        *o = 1;
                        if *f == 0 {
                            *f = e.level;
                        }
                    }
                }
            }
        }
        channels.push((e.level, ch));
    }
    Ok(SpinalLevelMap { channels, flattened })
}

/// Rostro-caudal length per non-empty level (caudal minus rostral PMJ distance).
pub fn level_lengths(extents: &[LevelExtent]) -> BTreeMap<u8, f64> {
    extents
        .iter()
        .filter(|e| !e.is_empty())
        .filter_map(|e| Some((e.level, e.pmj_caudal_mm? - e.pmj_rostral_mm?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelConfig {
    pub element: StructuringElement,
    pub smoothing_window: usize,
}

impl Default for LevelConfig {
    fn default() -> Self {
        LevelConfig {
            element: StructuringElement::default(),
            smoothing_window: DEFAULT_SMOOTHING_WINDOW,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LevelAnalysis {
    pub centerline: Centerline,
    pub intersections: Intersections,
    pub extents: Vec<LevelExtent>,
    pub level_map: SpinalLevelMap,
}

/// Full level pipeline: intersection, centerline, extents and projection.
pub fn analyze_levels(
    rootlets: &LabelMap,
    cord: &LabelMap,
    pmj: &PmjPoint,
    config: &LevelConfig,
) -> Result<LevelAnalysis> {
    let cord = cord.nonzero();
    let intersections = intersect_rootlets_cord(rootlets, &cord, &config.element)?;
    let centerline = extract_centerline(&cord, config.smoothing_window)?;
    let extents = level_extents(&intersections, &centerline, pmj)?;
    let level_map = project_levels(&extents, &cord)?;
    Ok(LevelAnalysis {
        centerline,
        intersections,
        extents,
        level_map,
    })
}

/// One row of the level CSV report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub subject: String,
    pub level: u8,
    pub rostral_slice: Option<usize>,
    pub caudal_slice: Option<usize>,
    pub pmj_rostral_mm: Option<f64>,
    pub pmj_mid_mm: Option<f64>,
    pub pmj_caudal_mm: Option<f64>,
    pub length_mm: Option<f64>,
    pub flags: String,
}

pub const LEVEL_CSV_HEADER: [&str; 9] = [
    "subject",
    "level",
    "rostral_slice",
    "caudal_slice",
    "pmj_rostral_mm",
    "pmj_mid_mm",
    "pmj_caudal_mm",
    "length_mm",
    "flags",
];

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_mm(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn write_levels_csv<W: Write>(subject: &str, extents: &[LevelExtent], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LEVEL_CSV_HEADER)?;
    for e in extents {
        w.write_record([
            subject.to_string(),
            e.level.to_string(),
            fmt_opt(e.rostral_slice),
            fmt_opt(e.caudal_slice),
            fmt_mm(e.pmj_rostral_mm),
            fmt_mm(e.pmj_mid_mm),
            fmt_mm(e.pmj_caudal_mm),
            fmt_mm(e.length_mm),
            e.flags.labels().join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_levels_csv<R: Read>(input: R) -> Result<Vec<LevelRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != LEVEL_CSV_HEADER {
        return Err(Error::Report(format!("unexpected level CSV header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let row: LevelRow = rec?;
        LevelFlags::parse(&row.flags)?;
        rows.push(row);
    }
    Ok(rows)
}

impl LevelRow {
    pub fn is_empty(&self) -> bool {
        self.flags.split(';').any(|f| f.trim() == "empty")
    }
}
