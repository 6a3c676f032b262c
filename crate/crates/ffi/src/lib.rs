//! C ABI over `georecover`.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `*_new`/`*_load` function and released by the matching `*_free`. Functions
//! return a [`GrStatus`]; on failure the message is kept per thread and can be
//! read with [`gr_last_error_message`]. Outputs are written only on success.
//! Panics are caught at the boundary and reported as [`GrStatus::Panic`].

use georecover::harness::{self, ErrorReport, ExperimentConfig};
use georecover::recovery::{recover_all, Comparator, RecoveredMetric};
use georecover::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Config = 3,
    ClusterDegenerate = 4,
    ClusterUnderfull = 5,
    MidpointNotFound = 6,
    RatioUnavailable = 7,
    TauNotFound = 8,
    Io = 9,
    InvalidUtf8 = 10,
    OutOfRange = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

impl From<&Error> for GrStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) => GrStatus::InvalidInput,
            Error::ClusterDegenerate { .. } => GrStatus::ClusterDegenerate,
            Error::ClusterUnderfull { .. } => GrStatus::ClusterUnderfull,
            Error::MidpointNotFound { .. } => GrStatus::MidpointNotFound,
            Error::RatioUnavailable { .. } => GrStatus::RatioUnavailable,
            Error::TauNotFound { .. } => GrStatus::TauNotFound,
            Error::Config(_) => GrStatus::Config,
            Error::Io(_) => GrStatus::Io,
        }
    }
}

/// Experiment configuration.
pub struct GrConfig {
    inner: ExperimentConfig,
}

/// Report of one experiment run.
pub struct GrReport {
    inner: ErrorReport,
}

/// Comparator table over `n` points.
pub struct GrComparator {
    inner: Comparator,
}

/// Recovered `n × n` distance matrix.
pub struct GrMetric {
    inner: RecoveredMetric,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(text).expect("interior NUL removed")));
}

fn fail(status: GrStatus, msg: impl Into<String>) -> GrStatus {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> GrStatus {
    fail(e.into(), e.to_string())
}

/// Runs `f`, mapping panics to [`GrStatus::Panic`].
fn guard(f: impl FnOnce() -> GrStatus) -> GrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(GrStatus::Panic, msg)
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(GrStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// # Safety
/// `s` must be null or a NUL-terminated string.
unsafe fn read_str(s: *const c_char) -> Result<String, GrStatus> {
    if s.is_null() {
        return Err(fail(GrStatus::NullPointer, "string argument is null"));
    }
    // SAFETY: non-null and NUL-terminated per the caller contract.
    unsafe { CStr::from_ptr(s) }
        .to_str()
        .map(str::to_owned)
        .map_err(|e| fail(GrStatus::InvalidUtf8, e.to_string()))
}

fn boxed<T>(out: *mut *mut T, value: T) -> GrStatus {
    // SAFETY: callers check `out` for null before constructing the value.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    GrStatus::Ok
}

/// # Safety
/// `p` must be null or a pointer returned by the matching constructor and not yet freed.
unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        // SAFETY: ownership returns to Rust exactly once per the caller contract.
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Copies `text` plus a NUL into `buf` when it fits; `needed` receives the
/// required size including the NUL either way. Leaves the stored error untouched.
///
/// # Safety
/// `buf` must be valid for `cap` bytes; `needed` must be null or writable.
unsafe fn write_text(text: &str, buf: *mut c_char, cap: usize, needed: *mut usize) -> GrStatus {
    let size = text.len() + 1;
    if !needed.is_null() {
        // SAFETY: non-null and writable per the caller contract.
        unsafe { *needed = size };
    }
    if buf.is_null() || cap < size {
        return GrStatus::BufferTooSmall;
    }
    // SAFETY: `buf` holds at least `size` bytes.
    unsafe {
        std::ptr::copy_nonoverlapping(text.as_ptr(), buf as *mut u8, text.len());
        *buf.add(text.len()) = 0;
    }
    GrStatus::Ok
}

/// Static NUL-terminated library version.
#[no_mangle]
pub extern "C" fn gr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the calling thread's last error message into `buf`.
///
/// Returns [`GrStatus::BufferTooSmall`] when `cap` is short; `needed` then
/// holds the size to allocate. An empty string is written when no error occurred.
///
/// # Safety
/// `buf` must be valid for `cap` bytes; `needed` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn gr_last_error_message(buf: *mut c_char, cap: usize, needed: *mut usize) -> GrStatus {
    let text = LAST_ERROR.with(|e| e.borrow().as_ref().map(|c| c.to_string_lossy().into_owned()).unwrap_or_default());
    // SAFETY: forwarded caller contract.
    unsafe { write_text(&text, buf, cap, needed) }
}

/// Parses and validates a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gr_config_from_toml(toml: *const c_char, out: *mut *mut GrConfig) -> GrStatus {
    guard(|| {
        non_null!(out);
        // SAFETY: forwarded caller contract.
        let text = match unsafe { read_str(toml) } {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ExperimentConfig::from_toml_str(&text) {
            Ok(inner) => boxed(out, GrConfig { inner }),
            Err(e) => from_error(&e),
        }
    })
}

/// Loads a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gr_config_load(path: *const c_char, out: *mut *mut GrConfig) -> GrStatus {
    guard(|| {
        non_null!(out);
        // SAFETY: forwarded caller contract.
        let path = match unsafe { read_str(path) } {
            Ok(p) => PathBuf::from(p),
            Err(s) => return s,
        };
        match ExperimentConfig::load(&path) {
            Ok(inner) => boxed(out, GrConfig { inner }),
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `config` must be null or a live handle from a config constructor.
#[no_mangle]
pub unsafe extern "C" fn gr_config_free(config: *mut GrConfig) {
    // SAFETY: forwarded caller contract.
    unsafe { release(config) }
}

/// Replaces the master seed.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gr_config_set_seed(config: *mut GrConfig, seed: u64) -> GrStatus {
    guard(|| {
        non_null!(config);
        // SAFETY: live handle per the caller contract.
        unsafe { (*config).inner.master_seed = seed };
        GrStatus::Ok
    })
}

/// Sets the artifact directory; a null `dir` disables artifacts.
///
/// # Safety
/// `config` must be a live handle; `dir` must be null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gr_config_set_output_dir(config: *mut GrConfig, dir: *const c_char) -> GrStatus {
    guard(|| {
        non_null!(config);
        let dir = if dir.is_null() {
            None
        } else {
            // SAFETY: non-null and NUL-terminated per the caller contract.
            match unsafe { read_str(dir) } {
                Ok(d) => Some(PathBuf::from(d)),
                Err(s) => return s,
            }
        };
        // SAFETY: live handle per the caller contract.
        unsafe { (*config).inner.output.dir = dir };
        GrStatus::Ok
    })
}

/// Runs the configured experiment.
///
/// Pipeline failures do not fail the call: they are folded into the report,
/// whose [`gr_report_exit_code`] is then non-zero.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gr_run_experiment(config: *const GrConfig, out: *mut *mut GrReport) -> GrStatus {
    guard(|| {
        non_null!(config, out);
        // SAFETY: live handle per the caller contract.
        let cfg = unsafe { &(*config).inner };
        boxed(out, GrReport { inner: harness::run_experiment(cfg) })
    })
}

/// # Safety
/// `report` must be null or a live handle from [`gr_run_experiment`].
#[no_mangle]
pub unsafe extern "C" fn gr_report_free(report: *mut GrReport) {
    // SAFETY: forwarded caller contract.
    unsafe { release(report) }
}

/// Process exit code of the run: `0` ok, `1` failure, `2` contract violation.
///
/// # Safety
/// `report` must be a live handle; `code` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gr_report_exit_code(report: *const GrReport, code: *mut i32) -> GrStatus {
    guard(|| {
        non_null!(report, code);
        // SAFETY: live handle and writable output per the caller contract.
        unsafe { *code = (*report).inner.status.exit_code() };
        GrStatus::Ok
    })
}

/// Maximum and mean additive error of the run.
///
/// # Safety
/// `report` must be a live handle; `max_error` and `mean_error` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gr_report_errors(report: *const GrReport, max_error: *mut f64, mean_error: *mut f64) -> GrStatus {
    guard(|| {
        non_null!(report, max_error, mean_error);
        // SAFETY: live handle and writable outputs per the caller contract.
        unsafe {
            *max_error = (*report).inner.max_additive_error;
            *mean_error = (*report).inner.mean_additive_error;
        }
        GrStatus::Ok
    })
}

/// The report as pretty-printed JSON; see [`gr_last_error_message`] for the buffer protocol.
///
/// # Safety
/// `report` must be a live handle; `buf` valid for `cap` bytes; `needed` null or writable.
#[no_mangle]
pub unsafe extern "C" fn gr_report_json(report: *const GrReport, buf: *mut c_char, cap: usize, needed: *mut usize) -> GrStatus {
    guard(|| {
        non_null!(report);
        // SAFETY: live handle per the caller contract.
        let json = unsafe { (*report).inner.to_json() };
        // SAFETY: forwarded caller contract.
        match unsafe { write_text(&json, buf, cap, needed) } {
            GrStatus::BufferTooSmall => fail(GrStatus::BufferTooSmall, format!("buffer of {cap} bytes, {} needed", json.len() + 1)),
            s => s,
        }
    })
}

/// Comparator over `n` points from a row-major `n × n` table (copied).
///
/// # Safety
/// `values` must be valid for `n * n` reads; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gr_comparator_new(n: usize, values: *const f64, epsilon: f64, out: *mut *mut GrComparator) -> GrStatus {
    guard(|| {
        non_null!(values, out);
        let Some(len) = n.checked_mul(n) else {
            return fail(GrStatus::OutOfRange, "n * n overflows");
        };
        // SAFETY: `values` holds `n * n` elements per the caller contract.
        let table = unsafe { std::slice::from_raw_parts(values, len) }.to_vec();
        match Comparator::new(n, table, epsilon) {
            Ok(inner) => boxed(out, GrComparator { inner }),
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `comparator` must be null or a live handle from [`gr_comparator_new`].
#[no_mangle]
pub unsafe extern "C" fn gr_comparator_free(comparator: *mut GrComparator) {
    // SAFETY: forwarded caller contract.
    unsafe { release(comparator) }
}

/// Recovers all pairwise distances from a finite comparator.
///
/// # Safety
/// `comparator` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gr_recover_all(comparator: *const GrComparator, out: *mut *mut GrMetric) -> GrStatus {
    guard(|| {
        non_null!(comparator, out);
        // SAFETY: live handle per the caller contract.
        match recover_all(unsafe { &(*comparator).inner }) {
            Ok(inner) => boxed(out, GrMetric { inner }),
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `metric` must be null or a live handle from [`gr_recover_all`].
#[no_mangle]
pub unsafe extern "C" fn gr_metric_free(metric: *mut GrMetric) {
    // SAFETY: forwarded caller contract.
    unsafe { release(metric) }
}

/// Number of points of a recovered metric.
///
/// # Safety
/// `metric` must be a live handle; `n` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gr_metric_size(metric: *const GrMetric, n: *mut usize) -> GrStatus {
    guard(|| {
        non_null!(metric, n);
        // SAFETY: live handle and writable output per the caller contract.
        unsafe { *n = (*metric).inner.n };
        GrStatus::Ok
    })
}

/// Recovered distance between points `i` and `j`.
///
/// # Safety
/// `metric` must be a live handle; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gr_metric_get(metric: *const GrMetric, i: usize, j: usize, value: *mut f64) -> GrStatus {
    guard(|| {
        non_null!(metric, value);
        // SAFETY: live handle per the caller contract.
        let m = unsafe { &(*metric).inner };
        if i >= m.n || j >= m.n {
            return fail(GrStatus::OutOfRange, format!("({i}, {j}) outside {} points", m.n));
        }
        // SAFETY: writable output per the caller contract.
        unsafe { *value = m.get(i, j) };
        GrStatus::Ok
    })
}

/// Copies the row-major `n × n` matrix into `buf` of `len` elements.
///
/// # Safety
/// `metric` must be a live handle; `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn gr_metric_copy(metric: *const GrMetric, buf: *mut f64, len: usize) -> GrStatus {
    guard(|| {
        non_null!(metric, buf);
        // SAFETY: live handle per the caller contract.
        let d = unsafe { &(*metric).inner.distances };
        if len < d.len() {
            return fail(GrStatus::BufferTooSmall, format!("buffer of {len} elements, {} needed", d.len()));
        }
        // SAFETY: `buf` holds at least `d.len()` elements.
        unsafe { std::ptr::copy_nonoverlapping(d.as_ptr(), buf, d.len()) };
        GrStatus::Ok
    })
}
