use std::ffi::{CStr, CString};
use std::ptr;

use ghostlock_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = ghl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    let out = CStr::from_ptr(s).to_string_lossy().into_owned();
    ghl_string_free(s);
    out
}

#[test]
fn clean_run_round_trips_through_replay() {
    let dir = tempfile::tempdir().unwrap();
    let path = c(dir.path().join("t.jsonl").to_str().unwrap());
    let cfg = GhlRunConfig { seed: 7, steps: 400, liveness: 1, ..ghl_run_config_default() };
    let mut run = ptr::null_mut();
    unsafe {
        assert_eq!(ghl_run(c("example").as_ptr(), ptr::null(), &cfg, &mut run), GhlStatus::Ok);
        assert_eq!(ghl_run_passed(run), 1);
        assert_eq!(ghl_run_violation_count(run), 0);
        let n = ghl_run_trace_len(run);
        assert!(n > 0);
        let mut report = ptr::null_mut();
        assert_eq!(ghl_run_report_json(run, &mut report), GhlStatus::Ok);
        let report: serde_json::Value = serde_json::from_str(&take(report)).unwrap();
        assert_eq!(report["sections"], n);
        assert!(report["liveness_report"]["discharged"].is_object());
        assert_eq!(ghl_run_write_trace(run, path.as_ptr()), GhlStatus::Ok);
        ghl_run_free(run);
        let mut bad = 0;
        assert_eq!(ghl_replay(c("example").as_ptr(), path.as_ptr(), &mut bad), GhlStatus::Ok);
    }
}

#[test]
fn corrupted_trace_reports_the_index() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("t.jsonl");
    let cfg = GhlRunConfig { seed: 2, steps: 100, ..ghl_run_config_default() };
    let mut run = ptr::null_mut();
    unsafe {
        assert_eq!(ghl_run(c("example").as_ptr(), ptr::null(), &cfg, &mut run), GhlStatus::Ok);
        assert_eq!(ghl_run_write_trace(run, c(file.to_str().unwrap()).as_ptr()), GhlStatus::Ok);
        ghl_run_free(run);
    }
    let text = std::fs::read_to_string(&file).unwrap();
    // drop record 3, keeping guard events
    let cut: String = text
        .lines()
        .filter(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.get("event").is_some() || v["i"] != 3
        })
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(&file, cut).unwrap();
    let mut bad = 0;
    let status = unsafe { ghl_replay(c("example").as_ptr(), c(file.to_str().unwrap()).as_ptr(), &mut bad) };
    assert_eq!(status, GhlStatus::InvalidTrace);
    assert_eq!(bad, 3);
    assert!(last_error().contains("record 3"));
}

#[test]
fn mutants_and_memcached() {
    let cfg = ghl_run_config_default();
    let mut run = ptr::null_mut();
    unsafe {
        let m = c("memcached-skips-constate");
        assert_eq!(ghl_run(c("memcached").as_ptr(), m.as_ptr(), &cfg, &mut run), GhlStatus::CheckFailed);
        let mut kind = ptr::null_mut();
        assert_eq!(ghl_run_violation_kind(run, 0, &mut kind), GhlStatus::Ok);
        assert_eq!(take(kind), "RefinementViolation");
        assert_eq!(ghl_run_violation_kind(run, 10_000, &mut kind), GhlStatus::InvalidArgument);
        ghl_run_free(run);

        run = ptr::null_mut();
        assert_eq!(ghl_run(c("memcached").as_ptr(), ptr::null(), &cfg, &mut run), GhlStatus::Ok);
        let mut obs = ptr::null_mut();
        assert_eq!(ghl_run_observable(run, &mut obs), GhlStatus::Ok);
        assert!(take(obs).lines().count() > 10);
        ghl_run_free(run);
    }
}

#[test]
fn erased_runs_match_checked_runs_observably() {
    let checked = GhlRunConfig { seed: 5, steps: 300, ..ghl_run_config_default() };
    let erased = GhlRunConfig { erased: 1, ..checked };
    let mut logs = Vec::new();
    for cfg in [checked, erased] {
        let mut run = ptr::null_mut();
        unsafe {
            assert_eq!(ghl_run(c("example").as_ptr(), ptr::null(), &cfg, &mut run), GhlStatus::Ok);
            let mut obs = ptr::null_mut();
            assert_eq!(ghl_run_observable(run, &mut obs), GhlStatus::Ok);
            logs.push((take(obs), ghl_run_trace_len(run)));
            ghl_run_free(run);
        }
    }
    assert_eq!(logs[0].0, logs[1].0);
    assert_eq!(logs[1].1, 0);
}

#[test]
fn argument_errors() {
    let cfg = ghl_run_config_default();
    let mut run = ptr::null_mut();
    unsafe {
        assert_eq!(ghl_run(ptr::null(), ptr::null(), &cfg, &mut run), GhlStatus::NullPointer);
        assert_eq!(ghl_run(c("example").as_ptr(), ptr::null(), ptr::null(), &mut run), GhlStatus::NullPointer);
        assert_eq!(ghl_run(c("nope").as_ptr(), ptr::null(), &cfg, &mut run), GhlStatus::InvalidArgument);
        assert!(last_error().contains("nope"));
        assert_eq!(ghl_run(c("example").as_ptr(), c("nope").as_ptr(), &cfg, &mut run), GhlStatus::InvalidArgument);
        let bad = GhlRunConfig { fairness_window: 0, ..cfg };
        assert_eq!(ghl_run(c("example").as_ptr(), ptr::null(), &bad, &mut run), GhlStatus::InvalidArgument);
        assert!(run.is_null());
        assert_eq!(ghl_run_passed(ptr::null()), -1);
        assert_eq!(ghl_run_violation_count(ptr::null()), 0);
        ghl_run_free(ptr::null_mut());
        ghl_string_free(ptr::null_mut());
        let mut bad_index = 0;
        let missing = c("/nonexistent/trace.jsonl");
        assert_eq!(ghl_replay(c("example").as_ptr(), missing.as_ptr(), &mut bad_index), GhlStatus::Io);
    }
}

#[test]
fn oracle_checks() {
    let b = c("max_value=3,max_channel=2");
    let mut len = 0usize;
    unsafe {
        for step in ["step1", "step2", "step3", "step4"] {
            assert_eq!(ghl_check_invariant(c("example").as_ptr(), b.as_ptr(), c(step).as_ptr(), &mut len), GhlStatus::Ok, "{step}");
        }
        assert_eq!(
            ghl_check_invariant(c("example-asend-plus-one").as_ptr(), b.as_ptr(), c("step2").as_ptr(), &mut len),
            GhlStatus::CheckFailed
        );
        assert_eq!(len, 1);
        assert_eq!(
            ghl_check_invariant(c("example").as_ptr(), b.as_ptr(), c("(state b_work_none)").as_ptr(), &mut len),
            GhlStatus::CheckFailed
        );
        assert_eq!(ghl_check_invariant(c("example").as_ptr(), c("max_value=x").as_ptr(), c("step1").as_ptr(), &mut len), GhlStatus::InvalidArgument);
        let f = c("(always (eventually (action ARecv)))");
        let small = c("max_value=1,max_channel=1");
        assert_eq!(ghl_check_ltl(c("example").as_ptr(), small.as_ptr(), f.as_ptr(), c("example-channels").as_ptr(), &mut len), GhlStatus::Ok);
        assert_eq!(ghl_check_ltl(c("example").as_ptr(), small.as_ptr(), f.as_ptr(), c("none").as_ptr(), &mut len), GhlStatus::CheckFailed);
        assert!(len > 0);
        assert_eq!(ghl_check_ltl(c("example").as_ptr(), small.as_ptr(), f.as_ptr(), c("bogus").as_ptr(), &mut len), GhlStatus::InvalidArgument);
    }
}

#[test]
fn tla_export_matches_core() {
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(ghl_export_tla(c("memcached").as_ptr(), 2, &mut out), GhlStatus::Ok);
        assert_eq!(take(out), ghostlock::harness::memcached::model_definition(2));
        assert_eq!(ghl_export_tla(c("toy").as_ptr(), 0, &mut out), GhlStatus::Unsupported);
    }
    let v = unsafe { CStr::from_ptr(ghl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
