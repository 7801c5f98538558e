//! C ABI for the wavelab finite element laboratory.
//!
//! Conventions:
//! - Handles (`WlConfig`, `WlTrace`) are opaque pointers created and freed by
//!   this library; passing them to any other `free` is undefined behaviour.
//! - Every fallible function returns a `WlStatus` code; on failure the
//!   thread-local message retrieved through [`wl_last_error_message`]
//!   describes the problem.
//! - Out-parameters are written only on `WL_OK`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use wavelab::cli::{compare_from_config, prepare_run};
use wavelab::config::{parse_config, RunConfig};
use wavelab::formulation::Trace;
use wavelab::solver::power_iteration_genevp;
use wavelab::verification::energy_audit;

/// Status codes mirroring the CLI exit contract.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WlStatus {
    WlOk = 0,
    /// Internal error (I/O, panic).
    WlErrInternal = 1,
    /// Invalid configuration or arguments.
    WlErrValidation = 2,
    /// A check ran but did not meet its tolerance.
    WlErrAssertion = 3,
    /// A linear solver failed to converge.
    WlErrSolver = 4,
    /// A required pointer argument was null.
    WlErrNullArgument = 5,
    /// Input text was not valid UTF-8.
    WlErrUtf8 = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_of(err: &wavelab::Error) -> WlStatus {
    match err.exit_code() {
        2 => WlStatus::WlErrValidation,
        4 => WlStatus::WlErrSolver,
        _ => WlStatus::WlErrInternal,
    }
}

/// Opaque parsed-and-validated run configuration.
pub struct WlConfig {
    inner: RunConfig,
}

/// Opaque completed simulation trace.
pub struct WlTrace {
    inner: Trace,
}

/// Library version as a static NUL-terminated string; do not free.
#[no_mangle]
pub extern "C" fn wl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copy the last error message of this thread into `buf` (up to `cap` bytes
/// including the NUL terminator) and return the full message length.
///
/// # Safety
/// `buf` must point to at least `cap` writable bytes, or be null (then only
/// the length is returned).
#[no_mangle]
pub unsafe extern "C" fn wl_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            // always terminate
            *buf.add(n - 1) = 0;
        }
        bytes.len() - 1
    })
}

/// Parse a configuration in the sectioned key-value format.
///
/// On success writes a fresh handle to `out`; free it with [`wl_config_free`].
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wl_config_parse(
    text: *const c_char,
    out: *mut *mut WlConfig,
) -> WlStatus {
    if text.is_null() || out.is_null() {
        set_error("null argument");
        return WlStatus::WlErrNullArgument;
    }
    let Ok(text) = CStr::from_ptr(text).to_str() else {
        set_error("configuration text is not valid UTF-8");
        return WlStatus::WlErrUtf8;
    };
    match parse_config(text) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(WlConfig { inner }));
            WlStatus::WlOk
        }
        Err(errors) => {
            let joined: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
            set_error(&joined.join("; "));
            WlStatus::WlErrValidation
        }
    }
}

/// # Safety
/// `cfg` must be a handle returned by [`wl_config_parse`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wl_config_free(cfg: *mut WlConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

unsafe fn config_ref<'a>(cfg: *const WlConfig) -> Option<&'a RunConfig> {
    cfg.as_ref().map(|c| &c.inner)
}

fn guarded<F: FnOnce() -> WlStatus>(f: F) -> WlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            WlStatus::WlErrInternal
        }
    }
}

/// Run the configured simulation and hand back a trace handle.
///
/// # Safety
/// `cfg` must come from [`wl_config_parse`]; `out` must be a valid pointer.
/// Free the trace with [`wl_trace_free`].
#[no_mangle]
pub unsafe extern "C" fn wl_run(cfg: *const WlConfig, out: *mut *mut WlTrace) -> WlStatus {
    let (Some(cfg), false) = (config_ref(cfg), out.is_null()) else {
        set_error("null argument");
        return WlStatus::WlErrNullArgument;
    };
    guarded(|| match prepare_run(cfg).and_then(|p| p.system.run(cfg.profile, &p.integrator)) {
        Ok(trace) => {
            unsafe { *out = Box::into_raw(Box::new(WlTrace { inner: trace })) };
            WlStatus::WlOk
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    })
}

/// Number of recorded states (steps + 1 for a stable run).
///
/// # Safety
/// `trace` must come from [`wl_run`].
#[no_mangle]
pub unsafe extern "C" fn wl_trace_len(trace: *const WlTrace) -> usize {
    trace.as_ref().map(|t| t.inner.len()).unwrap_or(0)
}

/// Time step of the trace.
///
/// # Safety
/// Pointers must be valid; `trace` from [`wl_run`].
#[no_mangle]
pub unsafe extern "C" fn wl_trace_dt(trace: *const WlTrace, out: *mut f64) -> WlStatus {
    let (Some(t), false) = (trace.as_ref(), out.is_null()) else {
        set_error("null argument");
        return WlStatus::WlErrNullArgument;
    };
    *out = t.inner.dt;
    WlStatus::WlOk
}

/// Conserved-form energy at step `index`.
///
/// # Safety
/// Pointers must be valid; `trace` from [`wl_run`].
#[no_mangle]
pub unsafe extern "C" fn wl_trace_energy(
    trace: *const WlTrace,
    index: usize,
    out: *mut f64,
) -> WlStatus {
    let (Some(t), false) = (trace.as_ref(), out.is_null()) else {
        set_error("null argument");
        return WlStatus::WlErrNullArgument;
    };
    match t.inner.energies.get(index) {
        Some(e) => {
            *out = *e;
            WlStatus::WlOk
        }
        None => {
            set_error("energy index out of range");
            WlStatus::WlErrValidation
        }
    }
}

/// Whether the run stayed stable (1) or was truncated by energy growth (0).
///
/// # Safety
/// Pointers must be valid; `trace` from [`wl_run`].
#[no_mangle]
pub unsafe extern "C" fn wl_trace_stable(trace: *const WlTrace, out: *mut i32) -> WlStatus {
    let (Some(t), false) = (trace.as_ref(), out.is_null()) else {
        set_error("null argument");
        return WlStatus::WlErrNullArgument;
    };
    *out = i32::from(t.inner.instability.is_none());
    WlStatus::WlOk
}

/// # Safety
/// `trace` must come from [`wl_run`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wl_trace_free(trace: *mut WlTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Run the equivalence check described by the config's [compare] section.
/// Writes the max normalized discrepancy and whether it met the tolerance;
/// returns `WL_ERR_ASSERTION` when the check ran but failed.
///
/// # Safety
/// Pointers must be valid; `cfg` from [`wl_config_parse`].
#[no_mangle]
pub unsafe extern "C" fn wl_compare(
    cfg: *const WlConfig,
    out_max_discrepancy: *mut f64,
    out_pass: *mut i32,
) -> WlStatus {
    let (Some(cfg), false, false) = (
        config_ref(cfg),
        out_max_discrepancy.is_null(),
        out_pass.is_null(),
    ) else {
        set_error("null argument");
        return WlStatus::WlErrNullArgument;
    };
    guarded(|| match compare_from_config(cfg, None) {
        Ok(report) => {
            unsafe {
                *out_max_discrepancy = report.max_discrepancy;
                *out_pass = i32::from(report.pass);
            }
            if report.pass {
                WlStatus::WlOk
            } else {
                set_error("equivalence check exceeded its tolerance");
                WlStatus::WlErrAssertion
            }
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    })
}

/// Audit discrete energy conservation; writes the relative drift of the
/// conserved form, the instantaneous-energy oscillation amplitude, and the
/// stability flag.
///
/// # Safety
/// Pointers must be valid; `cfg` from [`wl_config_parse`].
#[no_mangle]
pub unsafe extern "C" fn wl_energy_audit(
    cfg: *const WlConfig,
    out_relative_drift: *mut f64,
    out_oscillation: *mut f64,
    out_stable: *mut i32,
) -> WlStatus {
    let (Some(cfg), false, false, false) = (
        config_ref(cfg),
        out_relative_drift.is_null(),
        out_oscillation.is_null(),
        out_stable.is_null(),
    ) else {
        set_error("null argument");
        return WlStatus::WlErrNullArgument;
    };
    guarded(|| {
        let run = prepare_run(cfg).and_then(|p| energy_audit(&p.system, &p.integrator, cfg.profile));
        match run {
            Ok(audit) => {
                unsafe {
                    *out_relative_drift = audit.relative_drift;
                    *out_oscillation = audit.oscillation_amplitude;
                    *out_stable = i32::from(audit.instability.is_none());
                }
                WlStatus::WlOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Largest generalized eigenvalue of the formulation's stability pencil and
/// the explicit step limit 2 / sqrt(lambda_max).
///
/// # Safety
/// Pointers must be valid; `cfg` from [`wl_config_parse`].
#[no_mangle]
pub unsafe extern "C" fn wl_spectrum(
    cfg: *const WlConfig,
    out_lambda_max: *mut f64,
    out_dt_max: *mut f64,
) -> WlStatus {
    let (Some(cfg), false, false) = (
        config_ref(cfg),
        out_lambda_max.is_null(),
        out_dt_max.is_null(),
    ) else {
        set_error("null argument");
        return WlStatus::WlErrNullArgument;
    };
    guarded(|| {
        let lambda = prepare_run(cfg).and_then(|p| {
            let (k, m) = p.system.stability_pencil();
            power_iteration_genevp(&k, &m, 1e-10)
        });
        match lambda {
            Ok(lambda) => {
                unsafe {
                    *out_lambda_max = lambda;
                    *out_dt_max = 2.0 / lambda.sqrt();
                }
                WlStatus::WlOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}
