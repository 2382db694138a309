//! C ABI over the `cacbench` evaluation harness.
//!
//! Every fallible call returns a [`CacbStatus`]. On failure the message is
//! kept per thread and read back with [`cacb_last_error_message`]. Stores are
//! handed out as opaque pointers and must be released with their `_free`
//! function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use cacbench::corpus::{load_annotations, AnnotationStore, PredictionStore};
use cacbench::density::{
    partition_grid, patch_counts_from_density, points_to_density, DensityGrid, InstancePointList,
    Layout, PatchCounts,
};
use cacbench::metrics::{classic_errors, image_prf, mosaic_closed_form};
use cacbench::protocols::{
    run_classic, run_distractor_direct, run_negative_label_test, Aggregation,
};
use cacbench::Error;

/// Side length of the square canvas `cacb_points_to_density` writes.
pub const CACB_CANVAS_SIZE: usize = 384;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidInput = 5,
    MissingPredictions = 6,
    BufferSize = 7,
    Panic = 8,
}

/// Annotations loaded from a JSON file.
pub struct CacbAnnotations(AnnotationStore);

/// Predictions loaded from a manifest; payloads are read on demand.
pub struct CacbPredictions(PredictionStore);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CacbImageScore {
    pub cntp: f64,
    pub cntr: f64,
    pub cntf1: f64,
    pub game: f64,
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CacbDistractorSummary {
    pub cntp: f64,
    pub cntr: f64,
    pub cntf1: f64,
    pub game: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CacbClassicErrors {
    pub mae: f64,
    pub rmse: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CacbStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => CacbStatus::Io,
            Error::Parse { .. } => CacbStatus::Parse,
            Error::MissingPredictions(_) => CacbStatus::MissingPredictions,
            _ => CacbStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CacbStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f))
        .unwrap_or_else(|_| Err(Failure(CacbStatus::Panic, "internal panic".into())));
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            CacbStatus::Ok
        }
        Err(Failure(status, message)) => {
            set_error(message);
            status
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CacbStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CacbStatus::InvalidUtf8, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Failure> {
    if got == want {
        Ok(())
    } else {
        Err(Failure(
            CacbStatus::BufferSize,
            format!("{what} holds {got} values, expected {want}"),
        ))
    }
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next `cacb_` call on the same thread.
#[no_mangle]
pub extern "C" fn cacb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cacb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cacb_annotations_load(
    path: *const c_char,
    out: *mut *mut CacbAnnotations,
) -> CacbStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let store = load_annotations(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(CacbAnnotations(store)));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from `cacb_annotations_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cacb_annotations_free(handle: *mut CacbAnnotations) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// `handle` must be a live annotations handle or null.
#[no_mangle]
pub unsafe extern "C" fn cacb_annotations_image_count(handle: *const CacbAnnotations) -> usize {
    handle.as_ref().map_or(0, |h| h.0.len())
}

/// # Safety
/// `handle` must be a live annotations handle or null.
#[no_mangle]
pub unsafe extern "C" fn cacb_annotations_category_count(handle: *const CacbAnnotations) -> usize {
    handle.as_ref().map_or(0, |h| h.0.universe().len())
}

/// # Safety
/// `handle` must be a live annotations handle or null.
#[no_mangle]
pub unsafe extern "C" fn cacb_annotations_total_dots(handle: *const CacbAnnotations) -> usize {
    handle.as_ref().map_or(0, |h| h.0.total_dots())
}

/// Loads a prediction manifest. Payload paths resolve against the
/// manifest's directory.
///
/// # Safety
/// `manifest` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cacb_predictions_load(
    manifest: *const c_char,
    out: *mut *mut CacbPredictions,
) -> CacbStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let store = PredictionStore::load_manifest(&path_arg(manifest, "manifest")?)?;
        *out = Box::into_raw(Box::new(CacbPredictions(store)));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from `cacb_predictions_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cacb_predictions_free(handle: *mut CacbPredictions) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// `handle` must be a live predictions handle or null.
#[no_mangle]
pub unsafe extern "C" fn cacb_predictions_count(handle: *const CacbPredictions) -> usize {
    handle.as_ref().map_or(0, |h| h.0.len())
}

/// Negative-label test: writes NMN and PCCN (percent).
///
/// # Safety
/// Handles must be live; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn cacb_run_negative(
    annotations: *const CacbAnnotations,
    predictions: *const CacbPredictions,
    out_nmn: *mut f64,
    out_pccn: *mut f64,
) -> CacbStatus {
    guard(|| {
        let (ann, preds) = (
            handle(annotations, "annotations")?,
            handle(predictions, "predictions")?,
        );
        let (nmn, pccn) = (out_arg(out_nmn, "out_nmn")?, out_arg(out_pccn, "out_pccn")?);
        let report = run_negative_label_test(&ann.0, &preds.0)?;
        *nmn = report.nmn;
        *pccn = report.pccn;
        Ok(())
    })
}

/// Distractor test on the original images at grid `level`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cacb_run_distractor_direct(
    annotations: *const CacbAnnotations,
    predictions: *const CacbPredictions,
    level: u32,
    per_image: bool,
    out: *mut CacbDistractorSummary,
) -> CacbStatus {
    guard(|| {
        let (ann, preds) = (
            handle(annotations, "annotations")?,
            handle(predictions, "predictions")?,
        );
        let out = out_arg(out, "out")?;
        let aggregation = if per_image {
            Aggregation::PerImage
        } else {
            Aggregation::PerPair
        };
        let r = run_distractor_direct(&ann.0, &preds.0, level, aggregation)?;
        *out = CacbDistractorSummary {
            cntp: r.cntp,
            cntr: r.cntr,
            cntf1: r.cntf1,
            game: r.game,
        };
        Ok(())
    })
}

/// MAE and RMSE over every positive prompt.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cacb_run_classic(
    annotations: *const CacbAnnotations,
    predictions: *const CacbPredictions,
    out: *mut CacbClassicErrors,
) -> CacbStatus {
    guard(|| {
        let (ann, preds) = (
            handle(annotations, "annotations")?,
            handle(predictions, "predictions")?,
        );
        let out = out_arg(out, "out")?;
        let r = run_classic(&ann.0, &preds.0)?;
        *out = CacbClassicErrors {
            mae: r.mae,
            rmse: r.rmse,
        };
        Ok(())
    })
}

/// Patch-wise scores of one image from matching predicted and true patch
/// counts, both `len` long.
///
/// # Safety
/// `pred` and `gt` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cacb_image_prf(
    pred: *const f64,
    gt: *const f64,
    len: usize,
    out: *mut CacbImageScore,
) -> CacbStatus {
    guard(|| {
        let (pred, gt) = (slice_arg(pred, len, "pred")?, slice_arg(gt, len, "gt")?);
        let out = out_arg(out, "out")?;
        if len == 0 {
            return Err(Failure(CacbStatus::InvalidInput, "no patches".into()));
        }
        // only the pairing matters here, so both sides share one layout tag
        let layout = Layout::Grid { level: 0 };
        let s = image_prf(
            &PatchCounts::new(layout, pred.to_vec()),
            &PatchCounts::new(layout, gt.to_vec()),
        )?;
        *out = CacbImageScore {
            cntp: s.cntp,
            cntr: s.cntr,
            cntf1: s.cntf1,
            game: s.game,
            tp: s.tp,
            fp: s.fp,
            fn_: s.fn_,
        };
        Ok(())
    })
}

/// Mosaic precision and recall from the predicted top count `c1`, bottom
/// count `c2` and true top count `c1_gt`.
///
/// # Safety
/// Outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn cacb_mosaic_closed_form(
    c1: f64,
    c1_gt: f64,
    c2: f64,
    out_cntp: *mut f64,
    out_cntr: *mut f64,
) -> CacbStatus {
    guard(|| {
        let (p, r) = (
            out_arg(out_cntp, "out_cntp")?,
            out_arg(out_cntr, "out_cntr")?,
        );
        (*p, *r) = mosaic_closed_form(c1, c1_gt, c2)?;
        Ok(())
    })
}

/// MAE and RMSE over paired predicted and true counts.
///
/// # Safety
/// `pred` and `gt` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cacb_classic_errors(
    pred: *const f64,
    gt: *const f64,
    len: usize,
    out: *mut CacbClassicErrors,
) -> CacbStatus {
    guard(|| {
        let (pred, gt) = (slice_arg(pred, len, "pred")?, slice_arg(gt, len, "gt")?);
        let out = out_arg(out, "out")?;
        let pairs: Vec<(f64, f64)> = pred.iter().copied().zip(gt.iter().copied()).collect();
        let e = classic_errors(&pairs)?;
        *out = CacbClassicErrors {
            mae: e.mae,
            rmse: e.rmse,
        };
        Ok(())
    })
}

/// Rasterizes `n_points` interleaved `(x, y)` pairs given in a
/// `source_width` x `source_height` frame onto the canvas. `out` receives
/// `CACB_CANVAS_SIZE * CACB_CANVAS_SIZE` values, row-major.
///
/// # Safety
/// `xy` must point to `2 * n_points` doubles and `out` to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cacb_points_to_density(
    xy: *const f64,
    n_points: usize,
    source_width: f64,
    source_height: f64,
    out: *mut f64,
    out_len: usize,
) -> CacbStatus {
    guard(|| {
        let xy = slice_arg(xy, 2 * n_points, "xy")?;
        check_len(out_len, CACB_CANVAS_SIZE * CACB_CANVAS_SIZE, "out")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let grid = points_to_density(&InstancePointList {
            source_width,
            source_height,
            points: xy.chunks_exact(2).map(|p| [p[0], p[1]]).collect(),
        })?;
        slice::from_raw_parts_mut(out, out_len).copy_from_slice(grid.values());
        Ok(())
    })
}

/// Sums a `height` x `width` row-major density over the `4^level` grid
/// patches, written in row-major patch order.
///
/// # Safety
/// `values` must point to `height * width` doubles and `out` to `out_len`.
#[no_mangle]
pub unsafe extern "C" fn cacb_patch_counts(
    values: *const f64,
    height: usize,
    width: usize,
    level: u32,
    out: *mut f64,
    out_len: usize,
) -> CacbStatus {
    guard(|| {
        let n = height
            .checked_mul(width)
            .ok_or_else(|| Failure(CacbStatus::InvalidInput, "grid too large".into()))?;
        let values = slice_arg(values, n, "values")?;
        let grid = DensityGrid::new(height, width, values.to_vec())?;
        let partition = partition_grid(height, width, level)?;
        check_len(out_len, partition.len(), "out")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let counts = patch_counts_from_density(&grid, &partition)?;
        slice::from_raw_parts_mut(out, out_len).copy_from_slice(&counts.counts);
        Ok(())
    })
}
