//! Synthetic cervical phantoms with analytically known levels.
//!
//! Volumes are RAS with the slice index increasing superiorly. The cord is an
//! axial disk per slice centred on a straight, bowed or helical curve that
//! ends at the PMJ slice. Each level gets two dorsolateral rootlets leaving the
//! cord wall on exactly the level's truth slices, tilted caudally with depth.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::{analyze_levels, bounding_slices, LevelConfig, LevelExtent, LevelFlags};
use crate::metrics::mae_levels;
use crate::preprocess::{resample_iso, resample_labels, Interpolation, ResampleSpec};
use crate::volume::{DataType, Grid, LabelMap, PmjPoint, Volume3D, ROOTLET_CLASSES};

pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9), Normal(0, noise_sd) per voxel in storage order";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Curvature {
    Straight,
    /// In-plane left-right bow, `amplitude_mm · sin(π · k / (nz − 1))`.
    Bowed {
        amplitude_mm: f64,
    },
    Helical {
        radius_mm: f64,
        pitch_mm: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootletSpec {
    pub level: u8,
    pub rostral_slice: usize,
    pub caudal_slice: usize,
    /// Caudal tilt from the axial plane; defaults to 0° at C2 rising linearly to 45° at C8.
    #[serde(default)]
    pub angulation_deg: Option<f64>,
    pub radius_mm: f64,
    pub length_mm: f64,
}

impl RootletSpec {
    pub fn angulation(&self) -> f64 {
        self.angulation_deg
            .unwrap_or(45.0 * f64::from(self.level.saturating_sub(2)) / 6.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing_mm: f64,
    pub cord_radius_mm: f64,
    pub curvature: Curvature,
    pub rootlets: Vec<RootletSpec>,
    pub pmj_slice: usize,
    pub noise_sd: f64,
    pub seed: u64,
    #[serde(default)]
    pub allow_overlap: bool,
}

impl PhantomSpec {
    /// C2–C8 on a straight cord, 10-slice levels separated by 4-slice gaps.
    pub fn cervical(dims: [usize; 3], spacing_mm: f64, seed: u64) -> Self {
        let pmj_slice = dims[2] - 1 - dims[2] / 32;
        let top = pmj_slice.saturating_sub(6);
        let rootlets = ROOTLET_CLASSES
            .enumerate()
            .map(|(i, level)| {
                let rostral = top.saturating_sub(14 * i);
                RootletSpec {
                    level,
                    rostral_slice: rostral,
                    caudal_slice: rostral.saturating_sub(9),
                    angulation_deg: Some(0.0),
                    radius_mm: 0.5,
                    length_mm: 6.0,
                }
            })
            .collect();
        PhantomSpec {
            dims,
            spacing_mm,
            cord_radius_mm: 3.5,
            curvature: Curvature::Straight,
            rootlets,
            pmj_slice,
            noise_sd: 0.0,
            seed,
            allow_overlap: false,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Spec(m));
        if self.dims.iter().any(|&d| d < 2) {
            return bad(format!("dims {:?} too small", self.dims));
        }
        if !(self.spacing_mm > 0.0 && self.cord_radius_mm > 0.0 && self.noise_sd >= 0.0) {
            return bad("spacing and cord radius must be positive, noise sd non-negative".into());
        }
        if self.pmj_slice >= self.dims[2] {
            return bad(format!("pmj slice {} outside volume", self.pmj_slice));
        }
        match self.curvature {
            Curvature::Bowed { amplitude_mm } if !amplitude_mm.is_finite() => return bad("bow amplitude".into()),
            Curvature::Helical { radius_mm, pitch_mm } if !(radius_mm >= 0.0 && pitch_mm > 0.0) => {
                return bad("helix needs radius ≥ 0 and pitch > 0".into())
            }
            _ => {}
        }
        let mut seen = [false; 9];
        for r in &self.rootlets {
            if !ROOTLET_CLASSES.contains(&r.level) {
                return bad(format!("level {} outside 2..=8", r.level));
            }
            if std::mem::replace(&mut seen[r.level as usize], true) {
                return bad(format!("level {} given twice", r.level));
            }
            if r.caudal_slice > r.rostral_slice || r.rostral_slice > self.pmj_slice {
                return bad(format!(
                    "level {}: need caudal ≤ rostral ≤ pmj slice, got {}..{}",
                    r.level, r.caudal_slice, r.rostral_slice
                ));
            }
            if !(r.radius_mm > 0.0 && r.length_mm > 0.0) || !(0.0..90.0).contains(&r.angulation()) {
                return bad(format!("level {}: bad rootlet geometry", r.level));
            }
        }
        if !self.allow_overlap {
            let mut sorted: Vec<&RootletSpec> = self.rootlets.iter().collect();
            sorted.sort_by_key(|r| r.level);
            for w in sorted.windows(2) {
                if w[1].rostral_slice + 2 > w[0].caudal_slice {
                    return bad(format!(
                        "levels {} and {} must be rostro-caudally ordered with at least one free slice between them",
                        w[0].level, w[1].level
                    ));
                }
            }
        }
        Ok(())
    }

    /// Cord center in voxel coordinates at (continuous) slice `z`.
    fn center(&self, z: f64) -> [f64; 2] {
        let cx = (self.dims[0] as f64 - 1.0) / 2.0;
        let cy = (self.dims[1] as f64 - 1.0) / 2.0;
        let s = self.spacing_mm;
        match self.curvature {
            Curvature::Straight => [cx, cy],
            Curvature::Bowed { amplitude_mm } => {
                let t = std::f64::consts::PI * z / (self.dims[2] as f64 - 1.0);
                [cx + amplitude_mm / s * t.sin(), cy]
            }
            Curvature::Helical { radius_mm, pitch_mm } => {
                let t = 2.0 * std::f64::consts::PI * z * s / pitch_mm;
                [cx + radius_mm / s * t.cos(), cy + radius_mm / s * t.sin()]
            }
        }
    }

    /// Arc length in mm of the analytic curve between slices `a` and `b`.
    pub fn arc_length(&self, a: f64, b: f64) -> f64 {
        let s = self.spacing_mm;
        let (lo, hi) = (a.min(b), a.max(b));
        match self.curvature {
            Curvature::Straight => (hi - lo) * s,
            Curvature::Helical { radius_mm, pitch_mm } => {
                let k = 2.0 * std::f64::consts::PI * radius_mm / pitch_mm;
                (hi - lo) * s * (1.0 + k * k).sqrt()
            }
            Curvature::Bowed { .. } => {
                // composite Simpson on the speed |dc/dz| in mm per slice
                let n = (((hi - lo) * 64.0).ceil() as usize).max(2) & !1;
                let h = (hi - lo) / n as f64;
                let speed = |z: f64| {
                    let eps = 1e-4;
                    let (p, q) = (self.center(z - eps), self.center(z + eps));
                    let dx = (q[0] - p[0]) / (2.0 * eps);
                    let dy = (q[1] - p[1]) / (2.0 * eps);
                    s * (1.0 + dx * dx + dy * dy).sqrt()
                };
                let mut acc = speed(lo) + speed(hi);
                for i in 1..n {
                    acc += speed(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
                }
                acc * h / 3.0
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub image: Volume3D,
    pub cord: LabelMap,
    pub rootlets: LabelMap,
    pub pmj: PmjPoint,
    pub pmj_voxel: [usize; 3],
    pub truth: Vec<LevelExtent>,
}

/// Truth manifest written next to the phantom volumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomManifest {
    pub spec: PhantomSpec,
    pub rng: String,
    pub pmj_mm: [f64; 3],
    pub pmj_voxel: [usize; 3],
    pub truth: Vec<LevelExtent>,
}

impl Phantom {
    pub fn manifest(&self, spec: &PhantomSpec) -> PhantomManifest {
        PhantomManifest {
            spec: spec.clone(),
            rng: RNG_ALGORITHM.to_string(),
            pmj_mm: self.pmj.point_mm,
            pmj_voxel: self.pmj_voxel,
            truth: self.truth.clone(),
        }
    }
}

/// True when no voxel of one nonzero class has a 26-neighbour of another class.
pub fn classes_separated(map: &LabelMap) -> bool {
    let [nx, ny, nz] = map.grid().dims();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let v = map.get(i, j, k);
                if v == 0 {
                    continue;
                }
                for dk in -1i64..=1 {
                    for dj in -1i64..=1 {
                        for di in -1i64..=1 {
                            let (x, y, z) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                            if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 || z >= nz as i64 {
                                continue;
                            }
                            let w = map.get(x as usize, y as usize, z as usize);
                            if w != 0 && w != v {
                                return false;
                            }
                        }
                    }
                }
            }
        }
    }
    true
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let s = spec.spacing_mm;
    let grid = Grid::with_spacing(spec.dims, [s; 3])?;
    let [nx, ny, nz] = spec.dims;
    let cord_r = spec.cord_radius_mm / s;

    let mut cord = LabelMap::zeros(grid.clone());
    for k in 0..=spec.pmj_slice {
        let c = spec.center(k as f64);
        if c[0] - cord_r < -0.5
            || c[1] - cord_r < -0.5
            || c[0] + cord_r > nx as f64 - 0.5
            || c[1] + cord_r > ny as f64 - 0.5
        {
            return Err(Error::Spec(format!("cord leaves the field of view at slice {k}")));
        }
        for j in 0..ny {
            for i in 0..nx {
                if (i as f64 - c[0]).powi(2) + (j as f64 - c[1]).powi(2) <= cord_r * cord_r {
                    cord.set(i, j, k, 1);
                }
            }
        }
    }

    let mut rootlets = LabelMap::zeros(grid.clone());
    let half = std::f64::consts::FRAC_1_SQRT_2;
    for r in &spec.rootlets {
        let tilt = r.angulation().to_radians().tan();
        let steps = (r.length_mm / s * 4.0).ceil() as usize;
        let radius = r.radius_mm / s;
        for side in [-1.0, 1.0] {
            // dorsolateral: posterior is −y in RAS
            let dir = [side * half, -half];
            for k0 in r.caudal_slice..=r.rostral_slice {
                let c = spec.center(k0 as f64);
                for step in 0..=steps {
                    let depth = step as f64 * r.length_mm / steps as f64 / s;
                    let k = (k0 as f64 - depth * tilt).round();
                    if k < 0.0 {
                        continue;
                    }
                    let k = k as usize;
                    let px = c[0] + (cord_r + depth) * dir[0];
                    let py = c[1] + (cord_r + depth) * dir[1];
                    stamp_disk(&mut rootlets, [px, py], radius, k, r.level);
                }
            }
        }
    }
    if !spec.allow_overlap && !classes_separated(&rootlets) {
        return Err(Error::Spec("rootlet classes touch each other".into()));
    }

    let pmj_c = spec.center(spec.pmj_slice as f64);
    let pmj = PmjPoint::from_voxel(&grid, [pmj_c[0], pmj_c[1], spec.pmj_slice as f64])?;
    let pmj_voxel = [
        (pmj_c[0].round().max(0.0) as usize).min(nx - 1),
        (pmj_c[1].round().max(0.0) as usize).min(ny - 1),
        spec.pmj_slice,
    ];

    let image = render_image(spec, &grid, &cord, &rootlets)?;

    let mut truth: Vec<LevelExtent> = ROOTLET_CLASSES
        .map(|level| match spec.rootlets.iter().find(|r| r.level == level) {
            None => LevelExtent::empty(level),
            Some(r) => {
                let (rostral, caudal, mid) =
                    bounding_slices(&[r.caudal_slice, r.rostral_slice], true).expect("two slices");
                let d = |k: usize| spec.arc_length(spec.pmj_slice as f64, k as f64);
                LevelExtent {
                    level,
                    rostral_slice: Some(rostral),
                    caudal_slice: Some(caudal),
                    mid_slice: Some(mid),
                    pmj_rostral_mm: Some(d(rostral)),
                    pmj_mid_mm: Some(d(mid)),
                    pmj_caudal_mm: Some(d(caudal)),
                    length_mm: Some(d(caudal) - d(rostral)),
                    flags: LevelFlags {
                        empty: false,
                        clipped_at_volume_edge: caudal == 0 || rostral == nz - 1,
                        clamped_to_centerline: false,
                    },
                }
            }
        })
        .collect();
    truth.sort_by_key(|e| e.level);

    Ok(Phantom {
        image,
        cord,
        rootlets,
        pmj,
        pmj_voxel,
        truth,
    })
}

/// Sets voxels within `radius` (voxels) of `center` on slice `k`, always
/// including the voxel nearest the center.
fn stamp_disk(map: &mut LabelMap, center: [f64; 2], radius: f64, k: usize, label: u8) {
    let [nx, ny, nz] = map.grid().dims();
    if k >= nz {
        return;
    }
    let reach = radius.ceil() as i64 + 1;
    let (ci, cj) = (center[0].round() as i64, center[1].round() as i64);
    for j in cj - reach..=cj + reach {
        for i in ci - reach..=ci + reach {
            if i < 0 || j < 0 || i >= nx as i64 || j >= ny as i64 {
                continue;
            }
            let d2 = (i as f64 - center[0]).powi(2) + (j as f64 - center[1]).powi(2);
            if d2 <= radius * radius || (i == ci && j == cj) {
                map.set(i as usize, j as usize, k, label);
            }
        }
    }
}

const BACKGROUND: f64 = 100.0;
const CSF: f64 = 600.0;
const TISSUE: f64 = 250.0;
const CANAL_MARGIN_MM: f64 = 2.5;

fn render_image(spec: &PhantomSpec, grid: &Grid, cord: &LabelMap, rootlets: &LabelMap) -> Result<Volume3D> {
    let [nx, ny, nz] = spec.dims;
    let canal_r = (spec.cord_radius_mm + CANAL_MARGIN_MM) / spec.spacing_mm;
    let mut data = Vec::with_capacity(grid.len());
    for k in 0..nz {
        let c = spec.center(k as f64);
        for j in 0..ny {
            for i in 0..nx {
                let idx = grid.index(i, j, k);
                let v = if cord.data()[idx] != 0 || rootlets.data()[idx] != 0 {
                    TISSUE
                } else if (i as f64 - c[0]).powi(2) + (j as f64 - c[1]).powi(2) <= canal_r * canal_r {
                    CSF
                } else {
                    BACKGROUND * (1.0 + 0.2 * k as f64 / nz as f64)
                };
                data.push(v);
            }
        }
    }
    if spec.noise_sd > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::Spec(e.to_string()))?;
        for v in &mut data {
            *v += normal.sample(&mut rng);
        }
    }
    // stored as float32
    let data = data.into_iter().map(|v| f64::from(v as f32)).collect();
    Volume3D::new(grid.clone(), data, DataType::Float32)
}

/// One resolution of a resampling study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyEntry {
    pub spacing_mm: f64,
    pub dims: [usize; 3],
    pub extents: Vec<LevelExtent>,
    /// Mean |Δ pmj_mid| against the native resolution over shared levels.
    pub mae_mm: Option<f64>,
    pub shared_levels: Vec<u8>,
    pub excluded_levels: Vec<u8>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolutionStudy {
    pub native_spacing_mm: [f64; 3],
    pub reference: Vec<LevelExtent>,
    pub entries: Vec<StudyEntry>,
}

fn mid_distances(extents: &[LevelExtent]) -> BTreeMap<u8, f64> {
    extents
        .iter()
        .filter(|e| !e.is_empty())
        .filter_map(|e| Some((e.level, e.pmj_mid_mm?)))
        .collect()
}

/// Resamples the inputs to each spacing (image linear, masks nearest), reruns
/// the level pipeline and reports MAE of the mid-level PMJ distances against
/// the native-resolution run.
pub fn resample_study(
    image: Option<&Volume3D>,
    rootlets: &LabelMap,
    cord: &LabelMap,
    pmj: &PmjPoint,
    spacings: &[f64],
    config: &LevelConfig,
) -> Result<ResolutionStudy> {
    let native = analyze_levels(rootlets, cord, pmj, config)?;
    let reference = mid_distances(&native.extents);
    let mut entries = Vec::with_capacity(spacings.len());
    for &mm in spacings {
        let nearest = ResampleSpec::isotropic(mm, Interpolation::Nearest)?;
        if let Some(img) = image {
            resample_iso(img, ResampleSpec::isotropic(mm, Interpolation::Linear)?)?;
        }
        let r = resample_labels(rootlets, nearest)?;
        let c = resample_labels(cord, nearest)?;
        let mut flags = Vec::new();
        let analysis = match analyze_levels(&r, &c, pmj, config) {
            Ok(a) => a,
            Err(e @ (Error::Degenerate(_) | Error::Geometry(_))) => {
                entries.push(StudyEntry {
                    spacing_mm: mm,
                    dims: r.grid().dims(),
                    extents: Vec::new(),
                    mae_mm: None,
                    shared_levels: Vec::new(),
                    excluded_levels: reference.keys().copied().collect(),
                    flags: vec![format!("pipeline failed at {mm} mm: {e}")],
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        for e in analysis
            .extents
            .iter()
            .filter(|e| e.is_empty() && reference.contains_key(&e.level))
        {
            flags.push(format!("level {} empty at {mm} mm; excluded", e.level));
        }
        let test = mid_distances(&analysis.extents);
        let (mae_mm, shared, excluded) = match mae_levels(&reference, &test) {
            Ok(m) => (Some(m.mae_mm), m.levels, m.excluded),
            Err(Error::Degenerate(msg)) => {
                flags.push(msg);
                (None, Vec::new(), reference.keys().chain(test.keys()).copied().collect())
            }
            Err(e) => return Err(e),
        };
        entries.push(StudyEntry {
            spacing_mm: mm,
            dims: r.grid().dims(),
            extents: analysis.extents,
            mae_mm,
            shared_levels: shared,
            excluded_levels: excluded,
            flags,
        });
    }
    Ok(ResolutionStudy {
        native_spacing_mm: cord.grid().spacing(),
        reference: native.extents,
        entries,
    })
}
