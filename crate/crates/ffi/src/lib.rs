//! C interface to the hs2pd simulator.
//!
//! Scenarios and results are opaque handles. Every fallible call returns an
//! [`Hs2pdStatus`]; on failure [`hs2pd_last_error_message`] describes what
//! went wrong on the calling thread. Strings handed out by this library must
//! be released with [`hs2pd_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use hs2pd::domain::Scenario;
use hs2pd::engine::{run, EngineError, RunResult, RunStatus};
use hs2pd::scenario::{load_scenario, parse_scenario, ScenarioError};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hs2pdStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidScenario = 5,
    RunFailed = 6,
    Panic = 7,
}

/// Final state of a finished simulation.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hs2pdRunStatus {
    Completed = 0,
    Incomplete = 1,
    Timeout = 2,
}

/// A parsed scenario.
pub struct Hs2pdScenario(Scenario);

/// The outcome of one simulation.
pub struct Hs2pdResult(RunResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: Hs2pdStatus, msg: impl Into<String>) -> Hs2pdStatus {
    set_error(msg);
    status
}

fn scenario_status(e: &ScenarioError) -> Hs2pdStatus {
    match e {
        ScenarioError::Io { .. } => Hs2pdStatus::Io,
        ScenarioError::Toml(_) | ScenarioError::Override(_) => Hs2pdStatus::Parse,
        ScenarioError::World(_) | ScenarioError::Field(_) => Hs2pdStatus::InvalidScenario,
    }
}

fn guarded(f: impl FnOnce() -> Hs2pdStatus) -> Hs2pdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(Hs2pdStatus::Panic, "internal error: the simulator panicked"),
    }
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, Hs2pdStatus> {
    if s.is_null() {
        return Err(fail(Hs2pdStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        fail(
            Hs2pdStatus::InvalidUtf8,
            "string argument is not valid UTF-8",
        )
    })
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

fn store_scenario(
    loaded: Result<Scenario, ScenarioError>,
    out: *mut *mut Hs2pdScenario,
) -> Hs2pdStatus {
    match loaded {
        Ok(s) => {
            // SAFETY: checked non-null by the caller of this helper
            unsafe { *out = Box::into_raw(Box::new(Hs2pdScenario(s))) };
            Hs2pdStatus::Ok
        }
        Err(e) => fail(scenario_status(&e), e.to_string()),
    }
}

/// Load a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hs2pd_scenario_load(
    path: *const c_char,
    out: *mut *mut Hs2pdScenario,
) -> Hs2pdStatus {
    guarded(|| {
        if out.is_null() {
            return fail(Hs2pdStatus::NullArgument, "null output pointer");
        }
        *out = ptr::null_mut();
        let path = match read_str(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        store_scenario(load_scenario(Path::new(path), &[]), out)
    })
}

/// Parse a scenario from its text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hs2pd_scenario_from_str(
    text: *const c_char,
    out: *mut *mut Hs2pdScenario,
) -> Hs2pdStatus {
    guarded(|| {
        if out.is_null() {
            return fail(Hs2pdStatus::NullArgument, "null output pointer");
        }
        *out = ptr::null_mut();
        let text = match read_str(text) {
            Ok(t) => t,
            Err(status) => return status,
        };
        store_scenario(parse_scenario(text, &[]), out)
    })
}

/// # Safety
/// `scenario` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn hs2pd_scenario_free(scenario: *mut Hs2pdScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Simulate a scenario to the end. The scenario handle stays valid.
///
/// # Safety
/// `scenario` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hs2pd_run(
    scenario: *const Hs2pdScenario,
    out: *mut *mut Hs2pdResult,
) -> Hs2pdStatus {
    guarded(|| {
        if out.is_null() || scenario.is_null() {
            return fail(Hs2pdStatus::NullArgument, "null scenario or output pointer");
        }
        *out = ptr::null_mut();
        match run(&(*scenario).0) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(Hs2pdResult(r)));
                Hs2pdStatus::Ok
            }
            Err(e @ EngineError::InvalidScenario(_)) => {
                fail(Hs2pdStatus::InvalidScenario, e.to_string())
            }
            Err(e) => fail(Hs2pdStatus::RunFailed, e.to_string()),
        }
    })
}

/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs2pd_result_status(result: *const Hs2pdResult) -> Hs2pdRunStatus {
    match (*result).0.metrics.status {
        RunStatus::Completed => Hs2pdRunStatus::Completed,
        RunStatus::Incomplete => Hs2pdRunStatus::Incomplete,
        RunStatus::Timeout => Hs2pdRunStatus::Timeout,
    }
}

/// Update step by which every task was completed.
///
/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs2pd_result_completion_step(result: *const Hs2pdResult) -> u32 {
    (*result).0.metrics.completion_step
}

/// Metrics as a JSON document, or null if `result` is null. Free with
/// [`hs2pd_string_free`].
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs2pd_result_metrics_json(result: *const Hs2pdResult) -> *mut c_char {
    if result.is_null() {
        set_error("null result");
        return ptr::null_mut();
    }
    match serde_json::to_string_pretty(&(*result).0.metrics) {
        Ok(json) => into_c_string(json),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// The per-step trace as CSV, or null if `result` is null. Free with
/// [`hs2pd_string_free`].
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs2pd_result_trace_csv(result: *const Hs2pdResult) -> *mut c_char {
    if result.is_null() {
        set_error("null result");
        return ptr::null_mut();
    }
    into_c_string((*result).0.trace.to_csv())
}

/// # Safety
/// `result` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn hs2pd_result_free(result: *mut Hs2pdResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Copy of the last error raised on this thread, or null if there was none.
/// Free with [`hs2pd_string_free`].
#[no_mangle]
pub extern "C" fn hs2pd_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |s| s.clone().into_raw())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn hs2pd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
