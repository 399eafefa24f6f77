//! C ABI over `rootlet-levels`.
//!
//! Every fallible call returns an [`RlStatus`]; on failure the message is
//! available from [`rl_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use rootlet_levels::levels::write_levels_csv;
use rootlet_levels::metrics::{cov, dice, SdConvention};
use rootlet_levels::preprocess::{ElementShape, StructuringElement};
use rootlet_levels::{analyze_levels, Error, Grid, LabelMap, LevelConfig, LevelExtent, PmjPoint};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlStatus {
    Ok = 0,
    Io = 1,
    Format = 2,
    Unsupported = 3,
    Geometry = 4,
    Contract = 5,
    Degenerate = 6,
    Argument = 7,
    Range = 8,
    NullPointer = 9,
    Panic = 10,
    Other = 11,
}

impl From<&Error> for RlStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } | Error::Stream(_) => RlStatus::Io,
            Error::Format(_) => RlStatus::Format,
            Error::Unsupported(_) => RlStatus::Unsupported,
            Error::Geometry(_) => RlStatus::Geometry,
            Error::Contract(_) => RlStatus::Contract,
            Error::Degenerate(_) => RlStatus::Degenerate,
            Error::Argument(_) => RlStatus::Argument,
            Error::Range(_) => RlStatus::Range,
            Error::Spec(_) | Error::Report(_) => RlStatus::Other,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlShape {
    Ball = 0,
    Cube = 1,
    Cross = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlLevelOptions {
    /// Dilation radius in voxels.
    pub dilate_radius: u32,
    pub shape: RlShape,
    /// Odd moving-average window for the centerline.
    pub smoothing_window: usize,
}

/// One level. Slices are -1 and distances NaN when `empty` is set.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlLevelExtent {
    pub level: u8,
    pub empty: bool,
    pub clipped_at_volume_edge: bool,
    pub clamped_to_centerline: bool,
    pub rostral_slice: i64,
    pub caudal_slice: i64,
    pub mid_slice: i64,
    pub pmj_rostral_mm: f64,
    pub pmj_mid_mm: f64,
    pub pmj_caudal_mm: f64,
    pub length_mm: f64,
}

/// Opaque label map.
pub struct RlLabelMap(LabelMap);

/// Opaque level analysis result.
pub struct RlLevels(Vec<LevelExtent>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard<F>(f: F) -> RlStatus
where
    F: FnOnce() -> Result<(), RlFailure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RlStatus::Ok
        }
        Ok(Err(RlFailure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RlStatus::Panic
        }
    }
}

struct RlFailure(RlStatus, String);

impl From<Error> for RlFailure {
    fn from(e: Error) -> Self {
        RlFailure(RlStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> RlFailure {
    RlFailure(RlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, RlFailure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| RlFailure(RlStatus::Argument, format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, RlFailure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn rl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn rl_level_options_default() -> RlLevelOptions {
    let d = LevelConfig::default();
    RlLevelOptions {
        dilate_radius: d.element.radius,
        shape: RlShape::Ball,
        smoothing_window: d.smoothing_window,
    }
}

/// Reads a NIfTI-1 label map (`.nii` or `.nii.gz`).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rl_labelmap_read(path: *const c_char, out: *mut *mut RlLabelMap) -> RlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let map = rootlet_levels::read_label_map(path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(RlLabelMap(map)));
        Ok(())
    })
}

/// Builds a label map from `dims[0]·dims[1]·dims[2]` bytes in x-fastest order
/// on an axis-aligned RAS grid with the given spacing.
///
/// # Safety
/// `dims` and `spacing` must point to 3 values, `data` to the full buffer.
#[no_mangle]
pub unsafe extern "C" fn rl_labelmap_from_buffer(
    dims: *const usize,
    spacing: *const f64,
    data: *const u8,
    out: *mut *mut RlLabelMap,
) -> RlStatus {
    guard(|| {
        if dims.is_null() || spacing.is_null() || data.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let d = [*dims, *dims.add(1), *dims.add(2)];
        let s = [*spacing, *spacing.add(1), *spacing.add(2)];
        let n = d
            .iter()
            .try_fold(1usize, |acc, &x| acc.checked_mul(x))
            .ok_or_else(|| RlFailure(RlStatus::Argument, "dims overflow".into()))?;
        let grid = Grid::with_spacing(d, s)?;
        let map = LabelMap::new(grid, std::slice::from_raw_parts(data, n).to_vec())?;
        *out = Box::into_raw(Box::new(RlLabelMap(map)));
        Ok(())
    })
}

/// # Safety
/// `map` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn rl_labelmap_free(map: *mut RlLabelMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// # Safety
/// `map` must be a live handle and `out_dims` point to 3 writable values.
#[no_mangle]
pub unsafe extern "C" fn rl_labelmap_dims(map: *const RlLabelMap, out_dims: *mut usize) -> RlStatus {
    guard(|| {
        let m = deref(map, "map")?;
        if out_dims.is_null() {
            return Err(null("out_dims"));
        }
        for (k, d) in m.0.grid().dims().into_iter().enumerate() {
            *out_dims.add(k) = d;
        }
        Ok(())
    })
}

/// Runs the level pipeline. `pmj_mm` is the PMJ in world coordinates (3
/// values); `options` may be NULL for defaults.
///
/// # Safety
/// Handles must be live, `pmj_mm` must point to 3 values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_levels_compute(
    rootlets: *const RlLabelMap,
    cord: *const RlLabelMap,
    pmj_mm: *const f64,
    options: *const RlLevelOptions,
    out: *mut *mut RlLevels,
) -> RlStatus {
    guard(|| {
        let r = deref(rootlets, "rootlets")?;
        let c = deref(cord, "cord")?;
        if pmj_mm.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let opts = options.as_ref().copied().unwrap_or_else(|| rl_level_options_default());
        let shape = match opts.shape {
            RlShape::Ball => ElementShape::Ball,
            RlShape::Cube => ElementShape::Cube,
            RlShape::Cross => ElementShape::Cross,
        };
        let config = LevelConfig {
            element: StructuringElement::new(shape, opts.dilate_radius)?,
            smoothing_window: opts.smoothing_window,
        };
        let pmj = PmjPoint::new([*pmj_mm, *pmj_mm.add(1), *pmj_mm.add(2)])?;
        let analysis = analyze_levels(&r.0, &c.0, &pmj, &config)?;
        *out = Box::into_raw(Box::new(RlLevels(analysis.extents)));
        Ok(())
    })
}

/// Number of levels in the result (always 7, C2–C8).
///
/// # Safety
/// `levels` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn rl_levels_count(levels: *const RlLevels) -> usize {
    levels.as_ref().map_or(0, |l| l.0.len())
}

/// # Safety
/// `levels` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rl_levels_get(levels: *const RlLevels, index: usize, out: *mut RlLevelExtent) -> RlStatus {
    guard(|| {
        let l = deref(levels, "levels")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let e = l.0.get(index).ok_or_else(|| {
            RlFailure(
                RlStatus::Range,
                format!("level index {index} out of range 0..{}", l.0.len()),
            )
        })?;
        let slice = |v: Option<usize>| v.map_or(-1, |s| s as i64);
        let mm = |v: Option<f64>| v.unwrap_or(f64::NAN);
        *out = RlLevelExtent {
            level: e.level,
            empty: e.flags.empty,
            clipped_at_volume_edge: e.flags.clipped_at_volume_edge,
            clamped_to_centerline: e.flags.clamped_to_centerline,
            rostral_slice: slice(e.rostral_slice),
            caudal_slice: slice(e.caudal_slice),
            mid_slice: slice(e.mid_slice),
            pmj_rostral_mm: mm(e.pmj_rostral_mm),
            pmj_mid_mm: mm(e.pmj_mid_mm),
            pmj_caudal_mm: mm(e.pmj_caudal_mm),
            length_mm: mm(e.length_mm),
        };
        Ok(())
    })
}

/// Writes the level CSV report.
///
/// # Safety
/// `levels` must be a live handle; `subject` and `path` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn rl_levels_write_csv(
    levels: *const RlLevels,
    subject: *const c_char,
    path: *const c_char,
) -> RlStatus {
    guard(|| {
        let l = deref(levels, "levels")?;
        let subject = path_arg(subject, "subject")?;
        let path = path_arg(path, "path")?;
        let f =
            std::fs::File::create(&path).map_err(|e| RlFailure(RlStatus::Io, format!("{}: {e}", path.display())))?;
        write_levels_csv(&subject.to_string_lossy(), &l.0, std::io::BufWriter::new(f))?;
        Ok(())
    })
}

/// # Safety
/// `levels` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn rl_levels_free(levels: *mut RlLevels) {
    if !levels.is_null() {
        drop(Box::from_raw(levels));
    }
}

/// Dice overlap of the nonzero voxels of two maps on the same grid.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rl_dice(pred: *const RlLabelMap, truth: *const RlLabelMap, out: *mut f64) -> RlStatus {
    guard(|| {
        let p = deref(pred, "pred")?;
        let t = deref(truth, "truth")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = dice(&p.0, &t.0)?.value;
        Ok(())
    })
}

/// Coefficient of variation in percent; sample sd unless `population`.
///
/// # Safety
/// `values` must point to `n` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_cov(values: *const f64, n: usize, population: bool, out: *mut f64) -> RlStatus {
    guard(|| {
        if values.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let conv = if population {
            SdConvention::Population
        } else {
            SdConvention::Sample
        };
        *out = cov(std::slice::from_raw_parts(values, n), conv)?;
        Ok(())
    })
}
