//! C ABI over the simulated cluster.
//!
//! Handles are opaque and owned by the caller: every `*_new` or `*_submit`
//! result must be released with the matching `*_free`. Functions return an
//! [`SmStatus`]; on failure [`sm_last_error`] describes the cause for the
//! calling thread. Strings returned through `char **` are freed with
//! [`sm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use shardmatch::graph::{parse_graph, MatchMapping, QueryGraph};
use shardmatch::sim::{to_jsonl, Cluster, SimConfig, SimError};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    InvalidQuery = 4,
    SimulationFailed = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// A running cluster.
pub struct SmCluster {
    inner: Cluster,
}

/// The matches of one query, sorted.
pub struct SmResult {
    width: usize,
    rows: Vec<MatchMapping>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).expect("nul bytes removed"));
}

fn fail(status: SmStatus, msg: impl Into<String>) -> SmStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> SmStatus) -> SmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(SmStatus::Panic, msg)
        }
    }
}

/// # Safety
/// `s` is null or a valid nul-terminated string.
unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, SmStatus> {
    if s.is_null() {
        return Err(fail(SmStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| fail(SmStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn sim_status(e: &SimError) -> SmStatus {
    match e {
        SimError::Config(_) => SmStatus::InvalidConfig,
        _ => SmStatus::SimulationFailed,
    }
}

/// Library version, e.g. `0.1.0`. Static; do not free.
#[no_mangle]
pub extern "C" fn sm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always nul-terminated when `len > 0`) and returns its full length.
///
/// # Safety
/// `buf` is null or points to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sm_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let bytes = bytes.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Builds a cluster from a TOML config; null selects the defaults.
///
/// # Safety
/// `config_toml` is null or a valid C string; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sm_cluster_new(config_toml: *const c_char, out: *mut *mut SmCluster) -> SmStatus {
    guard(|| {
        if out.is_null() {
            return fail(SmStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let config = if config_toml.is_null() {
            SimConfig::default()
        } else {
            let t = match text(config_toml, "config") {
                Ok(t) => t,
                Err(s) => return s,
            };
            match SimConfig::from_toml(t) {
                Ok(c) => c,
                Err(e) => return fail(SmStatus::InvalidConfig, e.to_string()),
            }
        };
        match Cluster::from_config(&config) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(SmCluster { inner: c }));
                SmStatus::Ok
            }
            Err(e) => fail(sim_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `cluster` is null or came from [`sm_cluster_new`] and is not used again.
#[no_mangle]
pub unsafe extern "C" fn sm_cluster_free(cluster: *mut SmCluster) {
    if !cluster.is_null() {
        drop(Box::from_raw(cluster));
    }
}

/// Moves simulated time forward, firing due load reports and migrations.
///
/// # Safety
/// `cluster` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_cluster_advance(cluster: *mut SmCluster, micros: u64) -> SmStatus {
    guard(|| {
        let Some(c) = cluster.as_mut() else {
            return fail(SmStatus::NullArgument, "cluster is null");
        };
        let t = c.inner.now_us().saturating_add(micros);
        c.inner.advance_to(t);
        SmStatus::Ok
    })
}

/// Current simulated time in microseconds; 0 for a null handle.
///
/// # Safety
/// `cluster` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_cluster_now_us(cluster: *const SmCluster) -> u64 {
    cluster.as_ref().map_or(0, |c| c.inner.now_us())
}

/// Answers a query written in the graph text format (`n labels` header,
/// `v id label` and `e u v` lines).
///
/// # Safety
/// `cluster` is a live handle, `query` a valid C string, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sm_cluster_submit(
    cluster: *mut SmCluster,
    query: *const c_char,
    out: *mut *mut SmResult,
) -> SmStatus {
    guard(|| {
        if out.is_null() {
            return fail(SmStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let Some(c) = cluster.as_mut() else {
            return fail(SmStatus::NullArgument, "cluster is null");
        };
        let t = match text(query, "query") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let q = match parse_graph(t).and_then(QueryGraph::new) {
            Ok(q) => q,
            Err(e) => return fail(SmStatus::InvalidQuery, e.to_string()),
        };
        let width = q.vertex_count();
        let rows = c.inner.submit_query(&q).into_iter().collect();
        *out = Box::into_raw(Box::new(SmResult { width, rows }));
        SmStatus::Ok
    })
}

/// Number of matches; 0 for a null handle.
///
/// # Safety
/// `result` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_result_count(result: *const SmResult) -> usize {
    result.as_ref().map_or(0, |r| r.rows.len())
}

/// Query vertices per match.
///
/// # Safety
/// `result` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_result_width(result: *const SmResult) -> usize {
    result.as_ref().map_or(0, |r| r.width)
}

/// Copies match `index` into `buf`: entry `i` is the data vertex bound to
/// query vertex `i`. `len` must be at least [`sm_result_width`].
///
/// # Safety
/// `result` is a live handle; `buf` points to `len` writable `u32`s.
#[no_mangle]
pub unsafe extern "C" fn sm_result_get(result: *const SmResult, index: usize, buf: *mut u32, len: usize) -> SmStatus {
    guard(|| {
        let Some(r) = result.as_ref() else {
            return fail(SmStatus::NullArgument, "result is null");
        };
        if buf.is_null() {
            return fail(SmStatus::NullArgument, "buf is null");
        }
        let Some(row) = r.rows.get(index) else {
            return fail(SmStatus::OutOfRange, format!("index {index} of {}", r.rows.len()));
        };
        if len < row.0.len() {
            return fail(SmStatus::OutOfRange, format!("buffer holds {len}, need {}", row.0.len()));
        }
        ptr::copy_nonoverlapping(row.0.as_ptr(), buf, row.0.len());
        SmStatus::Ok
    })
}

/// # Safety
/// `result` is null or came from [`sm_cluster_submit`] and is not used again.
#[no_mangle]
pub unsafe extern "C" fn sm_result_free(result: *mut SmResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

fn export(out: *mut *mut c_char, s: String) -> SmStatus {
    match CString::new(s) {
        Ok(c) => {
            // SAFETY: callers check `out` first.
            unsafe { *out = c.into_raw() };
            SmStatus::Ok
        }
        Err(e) => fail(SmStatus::SimulationFailed, e.to_string()),
    }
}

/// Metrics recorded so far, one JSON object per line.
///
/// # Safety
/// `cluster` is a live handle; `out` is valid. Free the string with
/// [`sm_string_free`].
#[no_mangle]
pub unsafe extern "C" fn sm_cluster_metrics(cluster: *const SmCluster, out: *mut *mut c_char) -> SmStatus {
    guard(|| {
        if out.is_null() {
            return fail(SmStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let Some(c) = cluster.as_ref() else {
            return fail(SmStatus::NullArgument, "cluster is null");
        };
        export(out, to_jsonl(c.inner.metrics()))
    })
}

/// Drains pending timers, appends the summary record and returns the full
/// metrics stream as [`sm_cluster_metrics`] does.
///
/// # Safety
/// As for [`sm_cluster_metrics`].
#[no_mangle]
pub unsafe extern "C" fn sm_cluster_finish(cluster: *mut SmCluster, out: *mut *mut c_char) -> SmStatus {
    guard(|| {
        if out.is_null() {
            return fail(SmStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let Some(c) = cluster.as_mut() else {
            return fail(SmStatus::NullArgument, "cluster is null");
        };
        export(out, to_jsonl(c.inner.finish()))
    })
}

/// # Safety
/// `s` is null or a string returned by this library, not used again.
#[no_mangle]
pub unsafe extern "C" fn sm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
