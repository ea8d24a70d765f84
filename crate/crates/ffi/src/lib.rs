//! C ABI over the workbench: experiment runs through opaque config/report
//! handles, plus direct access to the one-dimensional scattering solver.
//!
//! Every fallible call returns an [`ScStatus`]; the message for the most recent
//! failure on the calling thread is available from [`sc_last_error`].
//! Objects returned through out-pointers are owned by the caller and must be
//! released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use scatcalc::report::{Format, RunReport};
use scatcalc::runner::{parse_config, run_experiment, ConfigError, Experiment, ExperimentConfig};
use scatcalc::scatter1d::{self, Potential1D};
use scatcalc::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    InvalidParameter = 4,
    NotElliptic = 5,
    Degenerate = 6,
    Threshold = 7,
    Obstruction = 8,
    /// Quadrature, integrator, chart or budget failure inside a computation.
    Numerical = 9,
    Io = 10,
    /// Output buffer too small; the required size was reported.
    BufferTooSmall = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScFormat {
    Json = 0,
    Csv = 1,
}

/// Reflection and transmission coefficients at one energy.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScCoefficients {
    pub lambda: f64,
    pub r_re: f64,
    pub r_im: f64,
    pub t_re: f64,
    pub t_im: f64,
    pub unitarity_defect: f64,
}

/// Parsed experiment configuration.
pub struct ScConfig(ExperimentConfig);

/// Result of one experiment run.
pub struct ScReport(RunReport);

/// Compactly supported real potential on the line.
pub struct ScPotential(Potential1D);

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn fail(status: ScStatus, msg: impl Into<String>) -> ScStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into().into_bytes());
    status
}

fn from_error(e: &Error) -> ScStatus {
    let status = match e {
        Error::InvalidParameter { .. } | Error::GridMismatch(_) => ScStatus::InvalidParameter,
        Error::NotElliptic(_) => ScStatus::NotElliptic,
        Error::Degenerate(_) => ScStatus::Degenerate,
        Error::Threshold(_) => ScStatus::Threshold,
        Error::Obstruction(_) => ScStatus::Obstruction,
        _ => ScStatus::Numerical,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning panics into `ScStatus::Panic`.
fn guard(f: impl FnOnce() -> ScStatus) -> ScStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(ScStatus::Panic, "internal panic"))
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, ScStatus> {
    if p.is_null() {
        return Err(fail(ScStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(ScStatus::InvalidUtf8, "string argument is not UTF-8"))
}

/// Copies `bytes` plus a NUL into `buf`; `needed` always receives the full size.
unsafe fn copy_out(bytes: &[u8], buf: *mut c_char, cap: usize, needed: *mut usize) -> ScStatus {
    if !needed.is_null() {
        *needed = bytes.len() + 1;
    }
    if buf.is_null() || cap < bytes.len() + 1 {
        return fail(ScStatus::BufferTooSmall, format!("need {} bytes", bytes.len() + 1));
    }
    ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, bytes.len());
    *buf.add(bytes.len()) = 0;
    ScStatus::Ok
}

fn coefficients(c: &scatter1d::ScatterCoeffs) -> ScCoefficients {
    ScCoefficients {
        lambda: c.lambda,
        r_re: c.r.re,
        r_im: c.r.im,
        t_re: c.t.re,
        t_im: c.t.im,
        unitarity_defect: c.unitarity_defect,
    }
}

/// Copies the last error message of this thread into `buf` (NUL-terminated).
///
/// # Safety
/// `buf` must point to `cap` writable bytes or be null; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn sc_last_error(buf: *mut c_char, cap: usize, needed: *mut usize) -> ScStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    copy_out(&msg, buf, cap, needed)
}

/// Parses a strict JSON configuration for the named experiment.
///
/// # Safety
/// `experiment` and `json` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_config_parse(experiment: *const c_char, json: *const c_char, out: *mut *mut ScConfig) -> ScStatus {
    guard(|| {
        if out.is_null() {
            return fail(ScStatus::NullPointer, "null out-pointer");
        }
        let (name, body) = match (text(experiment), text(json)) {
            (Ok(n), Ok(b)) => (n, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let exp: Experiment = match name.parse() {
            Ok(e) => e,
            Err(msg) => return fail(ScStatus::Config, msg),
        };
        match parse_config(body, exp) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(ScConfig(cfg)));
                ScStatus::Ok
            }
            Err(ConfigError::Io(m)) => fail(ScStatus::Io, m),
            Err(e) => fail(ScStatus::Config, e.to_string()),
        }
    })
}

/// Replaces the seed of a parsed configuration.
///
/// # Safety
/// `cfg` must come from `sc_config_parse`.
#[no_mangle]
pub unsafe extern "C" fn sc_config_set_seed(cfg: *mut ScConfig, seed: u64) -> ScStatus {
    match cfg.as_mut() {
        Some(c) => {
            c.0.seed = seed;
            ScStatus::Ok
        }
        None => fail(ScStatus::NullPointer, "null config"),
    }
}

/// # Safety
/// `cfg` must come from `sc_config_parse` or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn sc_config_free(cfg: *mut ScConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the configured experiment. A report is produced even when checks fail.
///
/// # Safety
/// `cfg` must come from `sc_config_parse`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_run(cfg: *const ScConfig, out: *mut *mut ScReport) -> ScStatus {
    guard(|| {
        let Some(c) = cfg.as_ref() else { return fail(ScStatus::NullPointer, "null config") };
        if out.is_null() {
            return fail(ScStatus::NullPointer, "null out-pointer");
        }
        match run_experiment(&c.0) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(ScReport(r)));
                ScStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// 1 when no check failed, 0 otherwise, -1 for a null report.
///
/// # Safety
/// `report` must come from `sc_run` or be null.
#[no_mangle]
pub unsafe extern "C" fn sc_report_all_pass(report: *const ScReport) -> i32 {
    report.as_ref().map_or(-1, |r| r.0.all_pass() as i32)
}

/// Looks up a named metric.
///
/// # Safety
/// `report` must come from `sc_run`; `name` NUL-terminated; `value` writable.
#[no_mangle]
pub unsafe extern "C" fn sc_report_metric(report: *const ScReport, name: *const c_char, value: *mut f64) -> ScStatus {
    let Some(r) = report.as_ref() else { return fail(ScStatus::NullPointer, "null report") };
    let name = match text(name) {
        Ok(n) => n,
        Err(s) => return s,
    };
    if value.is_null() {
        return fail(ScStatus::NullPointer, "null out-pointer");
    }
    match r.0.get(name) {
        Some(v) => {
            *value = v;
            ScStatus::Ok
        }
        None => fail(ScStatus::InvalidParameter, format!("no metric `{name}`")),
    }
}

/// Writes the summary JSON into `buf`. Call with a null `buf` to learn the size.
///
/// # Safety
/// `report` must come from `sc_run`; `buf` must hold `cap` bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn sc_report_summary(
    report: *const ScReport,
    format: ScFormat,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> ScStatus {
    let Some(r) = report.as_ref() else { return fail(ScStatus::NullPointer, "null report") };
    let fmt = match format {
        ScFormat::Json => Format::Json,
        ScFormat::Csv => Format::Csv,
    };
    copy_out(r.0.summary_json(fmt).as_bytes(), buf, cap, needed)
}

/// Writes summary.json (and CSV tables for the csv format) under `dir`.
///
/// # Safety
/// `report` must come from `sc_run`; `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sc_report_write(report: *const ScReport, dir: *const c_char, format: ScFormat) -> ScStatus {
    let Some(r) = report.as_ref() else { return fail(ScStatus::NullPointer, "null report") };
    let dir = match text(dir) {
        Ok(d) => d,
        Err(s) => return s,
    };
    let fmt = if format == ScFormat::Json { Format::Json } else { Format::Csv };
    match r.0.emit(Path::new(dir), fmt) {
        Ok(_) => ScStatus::Ok,
        Err(e) => fail(ScStatus::Io, format!("{dir}: {e}")),
    }
}

/// # Safety
/// `report` must come from `sc_run` or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn sc_report_free(report: *mut ScReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

fn new_potential(made: scatcalc::Result<Potential1D>, out: *mut *mut ScPotential) -> ScStatus {
    if out.is_null() {
        return fail(ScStatus::NullPointer, "null out-pointer");
    }
    match made {
        Ok(v) => {
            // SAFETY: checked non-null above; the caller guarantees it is writable.
            unsafe { *out = Box::into_raw(Box::new(ScPotential(v))) };
            ScStatus::Ok
        }
        Err(e) => from_error(&e),
    }
}

/// Square barrier of the given height on [-width/2, width/2].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_potential_square_barrier(height: f64, width: f64, out: *mut *mut ScPotential) -> ScStatus {
    guard(|| new_potential(Potential1D::square_barrier(height, width), out))
}

/// Smooth compactly supported bump.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_potential_smooth_bump(height: f64, centre: f64, width: f64, out: *mut *mut ScPotential) -> ScStatus {
    guard(|| new_potential(Potential1D::smooth_bump(height, centre, width), out))
}

/// # Safety
/// `v` must come from an `sc_potential_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn sc_potential_free(v: *mut ScPotential) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

/// Reflection and transmission for a wave incident from the left at frequency `lambda`.
///
/// # Safety
/// `v` must come from an `sc_potential_*` constructor; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_scatter_solve(v: *const ScPotential, lambda: f64, out: *mut ScCoefficients) -> ScStatus {
    guard(|| {
        let Some(v) = v.as_ref() else { return fail(ScStatus::NullPointer, "null potential") };
        let Some(out) = out.as_mut() else { return fail(ScStatus::NullPointer, "null out-pointer") };
        match scatter1d::solve_scatter(&v.0, lambda) {
            Ok(c) => {
                *out = coefficients(&c);
                ScStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Closed-form coefficients of the square barrier, for cross-checking.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_square_barrier_exact(height: f64, width: f64, lambda: f64, out: *mut ScCoefficients) -> ScStatus {
    let Some(out) = out.as_mut() else { return fail(ScStatus::NullPointer, "null out-pointer") };
    match scatter1d::square_barrier_coefficients(height, width, lambda) {
        Ok(c) => {
            *out = coefficients(&c);
            ScStatus::Ok
        }
        Err(e) => from_error(&e),
    }
}
