//! C ABI over the ghostlock checker.
//!
//! Runs are opaque `GhlRun` handles. Every fallible call returns a
//! `GhlStatus`; on failure `ghl_last_error` describes the cause on the
//! calling thread. Strings returned through `char **` out-parameters are
//! owned by the caller and released with `ghl_string_free`. No panic
//! crosses the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::fs;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ghostlock::harness::example::run_example;
use ghostlock::harness::memcached::run_memcached;
use ghostlock::harness::{ConfigError, Mode, Mutant, RunOptions, RunOutcome, SchedulerConfig};
use ghostlock::ltl::{holds_in_state, Verdict};
use ghostlock::model::{ExampleModel, ExampleVariant, MemcachedModel, Model, OracleBounds, ToyModel};
use ghostlock::oracle::{
    build_graph_with_cap, check_example_lemma, check_invariant, check_ltl_bounded, fairness_preset, LemmaFailure,
    LtlOutcome, DEFAULT_STATE_CAP,
};
use ghostlock::trace::{read_log, replay, write_log, ReplayError};

/// Result code of every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GhlStatus {
    Ok = 0,
    /// A run finished with violations, or a check found a counterexample.
    CheckFailed = 1,
    InvalidArgument = 2,
    NullPointer = 3,
    Io = 4,
    /// The trace failed replay; see the reported index.
    InvalidTrace = 5,
    /// The model has no such facility (e.g. the toy model has no TLA+ module).
    Unsupported = 6,
    /// The oracle exceeded its state budget.
    BudgetExceeded = 7,
    Panic = 8,
}

/// Scheduler settings for `ghl_run`. Negative per-channel losses mean
/// "use `loss`".
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct GhlRunConfig {
    pub seed: u64,
    pub steps: u64,
    pub loss: f64,
    pub loss_a_to_b: f64,
    pub loss_b_to_a: f64,
    pub fairness_window: u32,
    /// Non-zero runs with all ghost bookkeeping erased.
    pub erased: c_int,
    /// Non-zero enables every liveness property of the model.
    pub liveness: c_int,
    /// Memcached client count.
    pub clients: u64,
}

enum RunInner {
    Example(RunOutcome<ExampleModel>),
    Memcached(RunOutcome<MemcachedModel>),
}

/// Outcome of one run.
pub struct GhlRun {
    inner: RunInner,
}

macro_rules! with_run {
    ($run:expr, $r:ident => $body:expr) => {
        match &$run.inner {
            RunInner::Example($r) => $body,
            RunInner::Memcached($r) => $body,
        }
    };
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: GhlStatus, msg: impl Into<String>) -> GhlStatus {
    set_error(msg);
    status
}

/// Runs `f` with panics turned into `GhlStatus::Panic`.
fn guarded(f: impl FnOnce() -> GhlStatus) -> GhlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(GhlStatus::Panic, msg)
        }
    }
}

/// Borrows a required C string.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, GhlStatus> {
    if p.is_null() {
        return Err(fail(GhlStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(GhlStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn give_string(s: String, out: *mut *mut c_char) -> GhlStatus {
    if out.is_null() {
        return fail(GhlStatus::NullPointer, "output pointer is null");
    }
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            GhlStatus::Ok
        }
        Err(_) => fail(GhlStatus::InvalidArgument, "string contains a NUL byte"),
    }
}

fn config_error(e: ConfigError) -> GhlStatus {
    fail(GhlStatus::InvalidArgument, e.to_string())
}

/// Message of the last failure on this thread, or NULL. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn ghl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ghl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ghl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Defaults matching the command-line `run`.
#[no_mangle]
pub extern "C" fn ghl_run_config_default() -> GhlRunConfig {
    let d = SchedulerConfig::default();
    GhlRunConfig {
        seed: d.seed,
        steps: d.max_steps,
        loss: d.loss,
        loss_a_to_b: -1.0,
        loss_b_to_a: -1.0,
        fairness_window: d.fairness_window,
        erased: 0,
        liveness: 0,
        clients: RunOptions::default().clients,
    }
}

/// Runs `model` ("example" or "memcached") under `cfg`, optionally with a
/// named mutant (NULL for none). On `Ok` or `CheckFailed` a handle is
/// stored in `*out`; `CheckFailed` means the run recorded violations.
///
/// # Safety
/// String arguments must be NUL-terminated; `cfg` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ghl_run(
    model: *const c_char,
    mutant: *const c_char,
    cfg: *const GhlRunConfig,
    out: *mut *mut GhlRun,
) -> GhlStatus {
    guarded(|| {
        let model = match text(model, "model") {
            Ok(m) => m,
            Err(s) => return s,
        };
        if cfg.is_null() || out.is_null() {
            return fail(GhlStatus::NullPointer, "cfg or out is null");
        }
        let c = *cfg;
        let mutant = if mutant.is_null() {
            None
        } else {
            match text(mutant, "mutant").map(str::parse::<Mutant>) {
                Ok(Ok(m)) => Some(m),
                Ok(Err(e)) => return fail(GhlStatus::InvalidArgument, e),
                Err(s) => return s,
            }
        };
        let sched = SchedulerConfig {
            seed: c.seed,
            max_steps: c.steps,
            loss: c.loss,
            loss_a_to_b: (c.loss_a_to_b >= 0.0).then_some(c.loss_a_to_b),
            loss_b_to_a: (c.loss_b_to_a >= 0.0).then_some(c.loss_b_to_a),
            fairness_window: c.fairness_window,
            mode: if c.erased != 0 { Mode::Erased } else { Mode::Checked },
        };
        let opts = RunOptions {
            liveness: if c.liveness != 0 { None } else { Some(Vec::new()) },
            mutant,
            clients: c.clients,
            ..RunOptions::default()
        };
        let inner = match model {
            "example" => run_example(&sched, &opts).map(RunInner::Example),
            "memcached" => run_memcached(&sched, &opts).map(RunInner::Memcached),
            other => return fail(GhlStatus::InvalidArgument, format!("unknown model `{other}`")),
        };
        let run = match inner {
            Ok(r) => GhlRun { inner: r },
            Err(e) => return config_error(e),
        };
        let passed = with_run!(run, r => r.passed());
        *out = Box::into_raw(Box::new(run));
        if passed {
            GhlStatus::Ok
        } else {
            GhlStatus::CheckFailed
        }
    })
}

/// Releases a run handle. NULL is ignored.
///
/// # Safety
/// `run` must come from `ghl_run` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ghl_run_free(run: *mut GhlRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// 1 if the run is free of violations, 0 if not, -1 for NULL.
///
/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ghl_run_passed(run: *const GhlRun) -> c_int {
    match run.as_ref() {
        Some(run) => c_int::from(with_run!(run, r => r.passed())),
        None => -1,
    }
}

/// Number of recorded violations; 0 for NULL.
///
/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ghl_run_violation_count(run: *const GhlRun) -> usize {
    run.as_ref().map_or(0, |run| with_run!(run, r => r.violations.len()))
}

/// Number of trace records; 0 for NULL and for erased runs.
///
/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ghl_run_trace_len(run: *const GhlRun) -> usize {
    run.as_ref().map_or(0, |run| with_run!(run, r => r.trace.len()))
}

/// Category name of violation `index`, e.g. "RefinementViolation".
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ghl_run_violation_kind(run: *const GhlRun, index: usize, out: *mut *mut c_char) -> GhlStatus {
    guarded(|| {
        let Some(run) = run.as_ref() else {
            return fail(GhlStatus::NullPointer, "run is null");
        };
        match with_run!(run, r => r.violations.get(index).map(|v| v.kind())) {
            Some(k) => give_string(k.to_string(), out),
            None => fail(GhlStatus::InvalidArgument, format!("no violation {index}")),
        }
    })
}

/// The run report as pretty-printed JSON.
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ghl_run_report_json(run: *const GhlRun, out: *mut *mut c_char) -> GhlStatus {
    guarded(|| {
        let Some(run) = run.as_ref() else {
            return fail(GhlStatus::NullPointer, "run is null");
        };
        let report = with_run!(run, r => serde_json::to_string_pretty(&r.report(None)));
        match report {
            Ok(s) => give_string(s, out),
            Err(e) => fail(GhlStatus::Io, e.to_string()),
        }
    })
}

/// The observable channel log, one JSON object per line.
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ghl_run_observable(run: *const GhlRun, out: *mut *mut c_char) -> GhlStatus {
    guarded(|| {
        let Some(run) = run.as_ref() else {
            return fail(GhlStatus::NullPointer, "run is null");
        };
        give_string(with_run!(run, r => r.observable.to_text()), out)
    })
}

/// Writes the trace log (records and guard events) to `path`.
///
/// # Safety
/// `run` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ghl_run_write_trace(run: *const GhlRun, path: *const c_char) -> GhlStatus {
    guarded(|| {
        let Some(run) = run.as_ref() else {
            return fail(GhlStatus::NullPointer, "run is null");
        };
        let path = match text(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let mut buf = Vec::new();
        let written = with_run!(run, r => write_log(&r.trace.records, &r.aux, &mut buf));
        match written.and_then(|_| fs::write(path, buf)) {
            Ok(()) => GhlStatus::Ok,
            Err(e) => fail(GhlStatus::Io, format!("{path}: {e}")),
        }
    })
}

fn replay_status<M: Model>(model: &M, log: Result<ghostlock::trace::TraceLog<M>, ReplayError>, bad: *mut u64) -> GhlStatus {
    let err = match log.and_then(|l| replay(model, &l)) {
        Ok(_) => return GhlStatus::Ok,
        Err(e) => e,
    };
    if !bad.is_null() {
        // SAFETY: checked non-null; the caller guarantees it is writable
        unsafe { *bad = err.index().unwrap_or(u64::MAX) };
    }
    fail(GhlStatus::InvalidTrace, err.to_string())
}

/// Re-validates a trace log file offline. On `InvalidTrace`, `*bad_index`
/// (if non-NULL) receives the first failing record, or `UINT64_MAX` for a
/// malformed line.
///
/// # Safety
/// String arguments must be NUL-terminated; `bad_index` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn ghl_replay(model: *const c_char, path: *const c_char, bad_index: *mut u64) -> GhlStatus {
    guarded(|| {
        let (model, path) = match (text(model, "model"), text(path, "path")) {
            (Ok(m), Ok(p)) => (m, p),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let file = match fs::File::open(path) {
            Ok(f) => BufReader::new(f),
            Err(e) => return fail(GhlStatus::Io, format!("{path}: {e}")),
        };
        match model {
            "example" => replay_status(&ExampleModel::default(), read_log(file), bad_index),
            "memcached" => {
                let log = read_log::<MemcachedModel, _>(file);
                let n = log.as_ref().ok().and_then(|l| l.records.first()).map_or(1, |r| r.pre.con_state.len() as u64);
                replay_status(&MemcachedModel::new(n), log, bad_index)
            }
            "toy" => replay_status(&ToyModel, read_log(file), bad_index),
            other => fail(GhlStatus::InvalidArgument, format!("unknown model `{other}`")),
        }
    })
}

/// Renders `model` ("example", "example-asend-plus-one" or "memcached") as
/// a TLA+ module.
///
/// # Safety
/// `model` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ghl_export_tla(model: *const c_char, connections: u64, out: *mut *mut c_char) -> GhlStatus {
    guarded(|| {
        let module = match text(model, "model") {
            Ok("example") => ExampleModel::new(ExampleVariant::Faithful).tla_module(),
            Ok("example-asend-plus-one") => ExampleModel::new(ExampleVariant::AsendPlusOne).tla_module(),
            Ok("memcached") => MemcachedModel::new(connections).tla_module(),
            Ok("toy") => None,
            Ok(other) => return fail(GhlStatus::InvalidArgument, format!("unknown model `{other}`")),
            Err(s) => return s,
        };
        match module {
            Some(m) => give_string(m.render(), out),
            None => fail(GhlStatus::Unsupported, "model has no TLA+ rendering"),
        }
    })
}

enum Checked {
    Holds,
    Fails(usize),
}

fn check_state_formula<M: Model>(model: M, bounds: &OracleBounds, text: &str) -> Result<Checked, GhlStatus> {
    let f = model.parse_formula(text).map_err(|e| fail(GhlStatus::InvalidArgument, e.to_string()))?;
    let g = build_graph_with_cap(&model, bounds, DEFAULT_STATE_CAP)
        .map_err(|e| fail(GhlStatus::BudgetExceeded, e.to_string()))?;
    Ok(match check_invariant(&g, |s| holds_in_state(&model, &f, s) == Ok(Verdict::True)) {
        Ok(()) => Checked::Holds,
        Err(cx) => Checked::Fails(cx.len()),
    })
}

fn check_ltl<M: Model>(model: M, bounds: &OracleBounds, text: &str, fair: &str) -> Result<Checked, GhlStatus> {
    let f = model.parse_formula(text).map_err(|e| fail(GhlStatus::InvalidArgument, e.to_string()))?;
    let fairness = fairness_preset(&model, fair).map_err(|e| fail(GhlStatus::InvalidArgument, e.to_string()))?;
    let g = build_graph_with_cap(&model, bounds, DEFAULT_STATE_CAP)
        .map_err(|e| fail(GhlStatus::BudgetExceeded, e.to_string()))?;
    match check_ltl_bounded(&model, &g, &f, &fairness) {
        Ok(LtlOutcome::Holds) => Ok(Checked::Holds),
        Ok(LtlOutcome::Violated(l)) => Ok(Checked::Fails(l.len())),
        Err(e) => Err(fail(GhlStatus::InvalidArgument, e.to_string())),
    }
}

unsafe fn finish_check(r: Result<Checked, GhlStatus>, cx_len: *mut usize) -> GhlStatus {
    match r {
        Ok(Checked::Holds) => GhlStatus::Ok,
        Ok(Checked::Fails(n)) => {
            if !cx_len.is_null() {
                *cx_len = n;
            }
            set_error(format!("counterexample of {n} steps"));
            GhlStatus::CheckFailed
        }
        Err(s) => s,
    }
}

fn parse_bounds(bounds: &str) -> Result<OracleBounds, GhlStatus> {
    bounds.parse::<OracleBounds>().map_err(|e| fail(GhlStatus::InvalidArgument, e.to_string()))
}

/// Checks an invariant on the bounded reachable graph. `what` is a lemma
/// name (`step1`..`step5`, example models only) or a closed state formula.
/// On `CheckFailed`, `*cx_len` (if non-NULL) receives the counterexample
/// length.
///
/// # Safety
/// String arguments must be NUL-terminated; `cx_len` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn ghl_check_invariant(
    model: *const c_char,
    bounds: *const c_char,
    what: *const c_char,
    cx_len: *mut usize,
) -> GhlStatus {
    guarded(|| {
        let (model, bounds, what) = match (text(model, "model"), text(bounds, "bounds"), text(what, "what")) {
            (Ok(m), Ok(b), Ok(w)) => (m, b, w),
            (Err(s), _, _) | (_, Err(s), _) | (_, _, Err(s)) => return s,
        };
        let bounds = match parse_bounds(bounds) {
            Ok(b) => b,
            Err(s) => return s,
        };
        let example = match model {
            "example" => Some(ExampleVariant::Faithful),
            "example-asend-plus-one" => Some(ExampleVariant::AsendPlusOne),
            _ => None,
        };
        let r = match (example, model) {
            (Some(v), _) if what.starts_with("step") => match check_example_lemma(&ExampleModel::new(v), &bounds, what) {
                Ok(_) => Ok(Checked::Holds),
                Err(LemmaFailure::Reachable(cx)) => Ok(Checked::Fails(cx.len())),
                Err(LemmaFailure::Transition(t)) => Ok(Checked::Fails(t.to_counterexample().len())),
                Err(LemmaFailure::Inductive(_)) => Ok(Checked::Fails(0)),
                Err(e) => Err(fail(GhlStatus::InvalidArgument, format!("{e:?}"))),
            },
            (Some(v), _) => check_state_formula(ExampleModel::new(v), &bounds, what),
            (None, "memcached") => check_state_formula(MemcachedModel::new(bounds.connections), &bounds, what),
            (None, "toy") => check_state_formula(ToyModel, &bounds, what),
            (None, other) => Err(fail(GhlStatus::InvalidArgument, format!("unknown model `{other}`"))),
        };
        finish_check(r, cx_len)
    })
}

/// Bounded LTL check under a fairness preset ("none", "model",
/// "example-channels"). On `CheckFailed`, `*cx_len` receives the lasso
/// length.
///
/// # Safety
/// String arguments must be NUL-terminated; `cx_len` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn ghl_check_ltl(
    model: *const c_char,
    bounds: *const c_char,
    formula: *const c_char,
    fairness: *const c_char,
    cx_len: *mut usize,
) -> GhlStatus {
    guarded(|| {
        let args = (text(model, "model"), text(bounds, "bounds"), text(formula, "formula"), text(fairness, "fairness"));
        let (model, bounds, formula, fair) = match args {
            (Ok(m), Ok(b), Ok(f), Ok(p)) => (m, b, f, p),
            (Err(s), ..) | (_, Err(s), ..) | (_, _, Err(s), _) | (.., Err(s)) => return s,
        };
        let bounds = match parse_bounds(bounds) {
            Ok(b) => b,
            Err(s) => return s,
        };
        let r = match model {
            "example" => check_ltl(ExampleModel::new(ExampleVariant::Faithful), &bounds, formula, fair),
            "example-asend-plus-one" => check_ltl(ExampleModel::new(ExampleVariant::AsendPlusOne), &bounds, formula, fair),
            "memcached" => check_ltl(MemcachedModel::new(bounds.connections), &bounds, formula, fair),
            "toy" => check_ltl(ToyModel, &bounds, formula, fair),
            other => Err(fail(GhlStatus::InvalidArgument, format!("unknown model `{other}`"))),
        };
        finish_check(r, cx_len)
    })
}
