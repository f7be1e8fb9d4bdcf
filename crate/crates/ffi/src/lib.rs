//! C ABI over `sotl-core`.
//!
//! Problems and fits are opaque heap handles owned by the caller and released
//! with the matching `*_free` function. Every entry point returns a
//! [`SotlStatus`]; on failure a human-readable message is available from
//! [`sotl_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sotl::select::{fit_method, hbic_from_parts, FitSettings, Method};
use sotl::{build_stacked, Error, FitResult, GroupData, MultiSourceProblem};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SotlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    SolverFailure = 4,
    Panic = 5,
}

/// Groups collected for one fit; the target defaults to the first group.
pub struct SotlProblem {
    groups: Vec<GroupData>,
    target: usize,
}

pub struct SotlFit {
    result: FitResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    let c = CString::new(text).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_of(err: &Error) -> SotlStatus {
    match err {
        Error::DimensionMismatch { .. } => SotlStatus::DimensionMismatch,
        Error::InvalidProblem(_)
        | Error::InvalidArgument(_)
        | Error::GammaOutOfRange { .. }
        | Error::SearchTooLarge { .. } => SotlStatus::InvalidArgument,
        Error::Tagged { source, .. } => status_of(source),
        _ => SotlStatus::SolverFailure,
    }
}

fn fail(status: SotlStatus, msg: impl Into<String>) -> SotlStatus {
    set_last_error(msg);
    status
}

fn from_error(err: Error) -> SotlStatus {
    fail(status_of(&err), err.to_string())
}

/// Runs `f`, turning panics into [`SotlStatus::Panic`].
fn guarded(f: impl FnOnce() -> SotlStatus) -> SotlStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(SotlStatus::Panic, format!("panic: {msg}"))
        }
    }
}

/// Message describing the most recent failure on this thread, or null.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn sotl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| match slot.borrow().as_ref() {
        Some(c) => c.as_ptr(),
        None => ptr::null(),
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sotl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an empty problem. Never returns null.
#[no_mangle]
pub extern "C" fn sotl_problem_new() -> *mut SotlProblem {
    Box::into_raw(Box::new(SotlProblem {
        groups: Vec::new(),
        target: 0,
    }))
}

/// # Safety
/// `problem` must be null or a handle from [`sotl_problem_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sotl_problem_free(problem: *mut SotlProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Appends a group with an `n × p` row-major design and `n` responses.
///
/// # Safety
/// `x` must point to `n * p` readable doubles and `y` to `n`.
#[no_mangle]
pub unsafe extern "C" fn sotl_problem_add_group(
    problem: *mut SotlProblem,
    n: usize,
    p: usize,
    x: *const f64,
    y: *const f64,
) -> SotlStatus {
    guarded(|| {
        let Some(problem) = problem.as_mut() else {
            return fail(SotlStatus::NullPointer, "problem is null");
        };
        if x.is_null() || y.is_null() {
            return fail(SotlStatus::NullPointer, "design or response is null");
        }
        let Some(len) = n.checked_mul(p) else {
            return fail(SotlStatus::InvalidArgument, "n * p overflows");
        };
        if let Some(first) = problem.groups.first() {
            if first.p() != p {
                return fail(
                    SotlStatus::DimensionMismatch,
                    format!("group has {p} features, earlier groups have {}", first.p()),
                );
            }
        }
        let xs = std::slice::from_raw_parts(x, len);
        let ys = std::slice::from_raw_parts(y, n);
        match GroupData::from_row_major(n, p, xs, ys) {
            Ok(g) => {
                problem.groups.push(g);
                SotlStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Marks group `index` (in insertion order) as the target.
///
/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sotl_problem_set_target(problem: *mut SotlProblem, index: usize) -> SotlStatus {
    guarded(|| {
        let Some(problem) = problem.as_mut() else {
            return fail(SotlStatus::NullPointer, "problem is null");
        };
        if index >= problem.groups.len() {
            return fail(
                SotlStatus::InvalidArgument,
                format!("target {index} out of range for {} groups", problem.groups.len()),
            );
        }
        problem.target = index;
        SotlStatus::Ok
    })
}

/// Number of groups added so far.
///
/// # Safety
/// `problem` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sotl_problem_group_count(problem: *const SotlProblem, out: *mut usize) -> SotlStatus {
    guarded(|| match (problem.as_ref(), out.as_mut()) {
        (Some(p), Some(o)) => {
            *o = p.groups.len();
            SotlStatus::Ok
        }
        _ => fail(SotlStatus::NullPointer, "null argument"),
    })
}

unsafe fn run_fit(
    problem: *const SotlProblem,
    out: *mut *mut SotlFit,
    method: Method,
    settings: FitSettings,
    seed: u64,
) -> SotlStatus {
    guarded(|| {
        let (Some(problem), false) = (problem.as_ref(), out.is_null()) else {
            return fail(SotlStatus::NullPointer, "problem or output slot is null");
        };
        *out = ptr::null_mut();
        let fitted = MultiSourceProblem::new(problem.groups.clone(), problem.target)
            .and_then(|mp| build_stacked(&mp))
            .and_then(|system| fit_method(&system, method, &settings, seed));
        match fitted {
            Ok(result) => {
                *out = Box::into_raw(Box::new(SotlFit { result }));
                SotlStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Fits the L0 estimator, sweeping support sizes `1..=gamma_max`
/// (`gamma_max = 0` applies the default rule).
///
/// # Safety
/// `problem` must be a live handle and `out` writable; on success `*out`
/// receives a fit handle to release with [`sotl_fit_free`].
#[no_mangle]
pub unsafe extern "C" fn sotl_fit_sotl(
    problem: *const SotlProblem,
    gamma_max: usize,
    out: *mut *mut SotlFit,
) -> SotlStatus {
    let settings = FitSettings {
        gamma_max: (gamma_max > 0).then_some(gamma_max),
        ..FitSettings::default()
    };
    run_fit(problem, out, Method::Sotl, settings, 0)
}

/// Fits the cross-validated lasso baseline; `seed` fixes the fold assignment.
///
/// # Safety
/// Same contract as [`sotl_fit_sotl`].
#[no_mangle]
pub unsafe extern "C" fn sotl_fit_sjets(
    problem: *const SotlProblem,
    seed: u64,
    out: *mut *mut SotlFit,
) -> SotlStatus {
    run_fit(problem, out, Method::Sjets, FitSettings::default(), seed)
}

/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn sotl_fit_free(fit: *mut SotlFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Length of the target coefficient vector.
///
/// # Safety
/// `fit` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sotl_fit_beta_len(fit: *const SotlFit, out: *mut usize) -> SotlStatus {
    guarded(|| match (fit.as_ref(), out.as_mut()) {
        (Some(f), Some(o)) => {
            *o = f.result.beta_target.len();
            SotlStatus::Ok
        }
        _ => fail(SotlStatus::NullPointer, "null argument"),
    })
}

/// Copies the target coefficients into `buf`, which holds `len` doubles.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sotl_fit_copy_beta(fit: *const SotlFit, buf: *mut f64, len: usize) -> SotlStatus {
    guarded(|| {
        let Some(f) = fit.as_ref() else {
            return fail(SotlStatus::NullPointer, "fit is null");
        };
        if buf.is_null() {
            return fail(SotlStatus::NullPointer, "buffer is null");
        }
        let beta = &f.result.beta_target;
        if len < beta.len() {
            return fail(
                SotlStatus::DimensionMismatch,
                format!("buffer holds {len} values, need {}", beta.len()),
            );
        }
        std::slice::from_raw_parts_mut(buf, beta.len()).copy_from_slice(beta);
        SotlStatus::Ok
    })
}

/// Selected support size (for lasso fits, the number of nonzeros).
///
/// # Safety
/// `fit` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sotl_fit_gamma_opt(fit: *const SotlFit, out: *mut usize) -> SotlStatus {
    guarded(|| match (fit.as_ref(), out.as_mut()) {
        (Some(f), Some(o)) => {
            *o = f.result.gamma_opt;
            SotlStatus::Ok
        }
        _ => fail(SotlStatus::NullPointer, "null argument"),
    })
}

/// Serializes the full fit result as JSON. The string must be released with
/// [`sotl_string_free`].
///
/// # Safety
/// `fit` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sotl_fit_to_json(fit: *const SotlFit, out: *mut *mut c_char) -> SotlStatus {
    guarded(|| {
        let (Some(f), false) = (fit.as_ref(), out.is_null()) else {
            return fail(SotlStatus::NullPointer, "null argument");
        };
        *out = ptr::null_mut();
        match serde_json::to_string(&f.result) {
            Ok(text) => match CString::new(text) {
                Ok(c) => {
                    *out = c.into_raw();
                    SotlStatus::Ok
                }
                Err(e) => fail(SotlStatus::SolverFailure, e.to_string()),
            },
            Err(e) => fail(SotlStatus::SolverFailure, e.to_string()),
        }
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn sotl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// HBIC of a fit with `gamma` nonzeros and residual sum of squares `rss` on a
/// stacked system with `n` rows and `n_cols` columns.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sotl_hbic(n: usize, n_cols: usize, gamma: usize, rss: f64, out: *mut f64) -> SotlStatus {
    guarded(|| {
        let Some(o) = out.as_mut() else {
            return fail(SotlStatus::NullPointer, "output is null");
        };
        match hbic_from_parts(n, n_cols, gamma, rss) {
            Ok(h) => {
                *o = h.total;
                SotlStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Copies the last error message, if any, into an owned Rust string.
pub fn last_error() -> Option<String> {
    let p = sotl_last_error_message();
    if p.is_null() {
        None
    } else {
        // SAFETY: the pointer refers to the thread-local CString just read.
        Some(unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
    }
}
