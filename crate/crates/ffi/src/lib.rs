//! C ABI over trained checkpoints: load a model or bundle from disk, run
//! forecasts over flat feature buffers, and read error details from a
//! thread-local message. All handles are opaque; every entry point is
//! panic-proof and returns a status code.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use sustain_core::features::{FeatureSeries, FeatureVector, Form, FEATURE_COUNT};
use sustain_core::model::{load_checkpoint, monthly_forecast_series, predict, TrainedModel};
use sustain_core::router::{load_bundle, PipelineBundle};
use sustain_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SustainStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The file could not be read or written.
    Io = 3,
    /// The file exists but is not a compatible checkpoint.
    BadCheckpoint = 4,
    /// The input buffer or its dimensions are unusable.
    BadInput = 5,
    /// An unexpected internal failure; details via sustain_last_error.
    Internal = 6,
}

/// A loaded forecaster checkpoint.
pub struct SustainModel(TrainedModel);

/// A loaded router-plus-forecasters bundle.
pub struct SustainBundle(PipelineBundle);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = msg.into());
}

fn clear_error() {
    LAST_ERROR.with(|slot| slot.borrow_mut().clear());
}

fn status_of(err: &Error) -> SustainStatus {
    match err {
        Error::Io { .. } | Error::Stream(_) => SustainStatus::Io,
        Error::Checkpoint(_) | Error::Json(_) => SustainStatus::BadCheckpoint,
        _ => SustainStatus::BadInput,
    }
}

fn fail(status: SustainStatus, msg: impl Into<String>) -> SustainStatus {
    set_error(msg);
    status
}

/// Run a fallible body, translating panics into `Internal`.
fn guarded(body: impl FnOnce() -> SustainStatus) -> SustainStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(SustainStatus::Internal, "internal panic"),
    }
}

/// # Safety
/// `path` must be a NUL-terminated string valid for reads.
unsafe fn utf8_path<'a>(path: *const c_char) -> Result<&'a str, SustainStatus> {
    if path.is_null() {
        return Err(fail(SustainStatus::NullArgument, "path is null"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map_err(|_| fail(SustainStatus::InvalidUtf8, "path is not valid UTF-8"))
}

/// Reconstruct a monthly series from a row-major `months x 13` buffer of
/// scale-normalized features.
///
/// # Safety
/// `features` must be valid for reads of `months * 13` doubles.
unsafe fn series_from_buffer(
    features: *const f64,
    months: usize,
) -> Result<FeatureSeries, SustainStatus> {
    if features.is_null() {
        return Err(fail(SustainStatus::NullArgument, "feature buffer is null"));
    }
    if months == 0 {
        return Err(fail(SustainStatus::BadInput, "a series needs at least one month"));
    }
    let flat = std::slice::from_raw_parts(features, months * FEATURE_COUNT);
    let mut vectors = Vec::with_capacity(months);
    for row in flat.chunks_exact(FEATURE_COUNT) {
        if row.iter().any(|x| !x.is_finite()) {
            return Err(fail(SustainStatus::BadInput, "feature values must be finite"));
        }
        let mut v = FeatureVector::zero(Form::Normalized);
        v.values.copy_from_slice(row);
        vectors.push(v);
    }
    Ok(FeatureSeries {
        project_id: "ffi".into(),
        months: vectors,
        label: None,
        foundation: None,
    })
}

/// Number of feature columns a buffer row must hold.
#[no_mangle]
pub extern "C" fn sustain_feature_count() -> usize {
    FEATURE_COUNT
}

/// Copy the current thread's last error message into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length in bytes, so a cap
/// of 0 or a null buffer queries the needed size.
///
/// # Safety
/// `buf`, when non-null, must be valid for writes of `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn sustain_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Load a forecaster checkpoint from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sustain_model_load(
    path: *const c_char,
    out: *mut *mut SustainModel,
) -> SustainStatus {
    guarded(|| {
        if out.is_null() {
            return fail(SustainStatus::NullArgument, "output handle is null");
        }
        let path = match utf8_path(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match load_checkpoint(Path::new(path)) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(SustainModel(model)));
                clear_error();
                SustainStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Release a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be a handle from `sustain_model_load`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sustain_model_free(model: *mut SustainModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Forecast the probability that the project graduates, from its full
/// feature history.
///
/// # Safety
/// `features` must hold `months * 13` doubles; `p_graduate` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn sustain_model_predict(
    model: *const SustainModel,
    features: *const f64,
    months: usize,
    p_graduate: *mut f64,
) -> SustainStatus {
    guarded(|| {
        if model.is_null() || p_graduate.is_null() {
            return fail(SustainStatus::NullArgument, "model or output pointer is null");
        }
        let series = match series_from_buffer(features, months) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match predict(&(*model).0, &series) {
            Ok(p) => {
                *p_graduate = p;
                clear_error();
                SustainStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Month-by-month graduation forecasts: entry t uses months 0..=t. The
/// output buffer must hold `months` doubles.
///
/// # Safety
/// `features` must hold `months * 13` doubles; `out` must be valid for
/// writes of `months` doubles.
#[no_mangle]
pub unsafe extern "C" fn sustain_model_forecast_series(
    model: *const SustainModel,
    features: *const f64,
    months: usize,
    out: *mut f64,
) -> SustainStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            return fail(SustainStatus::NullArgument, "model or output pointer is null");
        }
        let series = match series_from_buffer(features, months) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match monthly_forecast_series(&(*model).0, &series) {
            Ok(forecast) => {
                std::ptr::copy_nonoverlapping(forecast.as_ptr(), out, forecast.len());
                clear_error();
                SustainStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Load a router-plus-forecasters bundle from a JSON file, verifying its
/// embedded digests.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sustain_bundle_load(
    path: *const c_char,
    out: *mut *mut SustainBundle,
) -> SustainStatus {
    guarded(|| {
        if out.is_null() {
            return fail(SustainStatus::NullArgument, "output handle is null");
        }
        let path = match utf8_path(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match load_bundle(Path::new(path)) {
            Ok(bundle) => {
                *out = Box::into_raw(Box::new(SustainBundle(bundle)));
                clear_error();
                SustainStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Release a bundle handle. Null is a no-op.
///
/// # Safety
/// `bundle` must be a handle from `sustain_bundle_load`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sustain_bundle_free(bundle: *mut SustainBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Route a series to its foundation and forecast with that foundation's
/// model. The foundation's name lands in `foundation_out` (NUL-terminated;
/// 8 bytes always suffice).
///
/// # Safety
/// `features` must hold `months * 13` doubles; `foundation_out` must be
/// valid for writes of `foundation_cap` bytes; `p_graduate` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn sustain_bundle_route(
    bundle: *const SustainBundle,
    features: *const f64,
    months: usize,
    foundation_out: *mut c_char,
    foundation_cap: usize,
    p_graduate: *mut f64,
) -> SustainStatus {
    guarded(|| {
        if bundle.is_null() || foundation_out.is_null() || p_graduate.is_null() {
            return fail(SustainStatus::NullArgument, "bundle or output pointer is null");
        }
        let series = match series_from_buffer(features, months) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match (*bundle).0.route_and_predict(&series) {
            Ok((foundation, p)) => {
                let name = foundation.to_string();
                if foundation_cap < name.len() + 1 {
                    return fail(
                        SustainStatus::BadInput,
                        format!("foundation buffer needs {} bytes", name.len() + 1),
                    );
                }
                std::ptr::copy_nonoverlapping(name.as_ptr(), foundation_out.cast(), name.len());
                *foundation_out.add(name.len()) = 0;
                *p_graduate = p;
                clear_error();
                SustainStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}
