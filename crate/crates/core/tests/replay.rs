use std::io::Cursor;

use ghostlock::harness::example::run_example;
use ghostlock::harness::memcached::run_memcached;
use ghostlock::harness::{RunOptions, SchedulerConfig};
use ghostlock::model::{ExampleModel, MemcachedModel};
use ghostlock::trace::{read_log, replay, write_log, ReplayError, TraceLog};
use serde_json::Value;

fn example_log(seed: u64, steps: u64) -> String {
    let cfg = SchedulerConfig { seed, max_steps: steps, loss: 0.2, ..SchedulerConfig::default() };
    let out = run_example(&cfg, &RunOptions::default()).unwrap();
    assert!(out.passed());
    let mut buf = Vec::new();
    write_log(&out.trace.records, &out.aux, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

fn parse(text: &str) -> Result<TraceLog<ExampleModel>, ReplayError> {
    read_log(Cursor::new(text.as_bytes()))
}

/// Applies `edit` to the JSON of the record line with index `k`.
fn edit_record(text: &str, k: u64, edit: impl FnOnce(&mut Value)) -> String {
    let mut edit = Some(edit);
    let mut done = false;
    let mut out = String::new();
    for line in text.lines() {
        let mut v: Value = serde_json::from_str(line).unwrap();
        if !done && v.get("event").is_none() && v["i"] == k {
            edit.take().unwrap()(&mut v);
            done = true;
        }
        out.push_str(&v.to_string());
        out.push('\n');
    }
    assert!(done, "record {k} not found");
    out
}

#[test]
fn round_trip_is_byte_identical() {
    let text = example_log(6, 400);
    let log = parse(&text).unwrap();
    let mut again = Vec::new();
    write_log(&log.records, &log.aux, &mut again).unwrap();
    assert_eq!(text.as_bytes(), again.as_slice());
    let s = replay(&ExampleModel::default(), &log).unwrap();
    assert_eq!(s.records, s.actions + s.stutters);
    assert_eq!(s.records, log.records.len());
}

#[test]
fn empty_trace_is_valid() {
    let log = parse("").unwrap();
    assert_eq!(replay(&ExampleModel::default(), &log).unwrap().records, 0);
}

#[test]
fn altered_post_state_is_reported_at_its_index() {
    let text = example_log(6, 400);
    let log = parse(&text).unwrap();
    let k = log.records.iter().position(|r| r.kind.action().is_some()).unwrap() as u64 + 10;
    let bad = edit_record(&text, k, |v| {
        let c = v["post"]["a_ctr"].as_u64().unwrap();
        v["post"]["a_ctr"] = Value::from(c + 7);
    });
    let err = replay(&ExampleModel::default(), &parse(&bad).unwrap()).unwrap_err();
    assert_eq!(err.index(), Some(k), "{err}");
}

#[test]
fn relabelled_action_is_rejected() {
    let text = example_log(8, 300);
    let log = parse(&text).unwrap();
    let k = log.records.iter().position(|r| r.kind.action().is_some_and(|a| format!("{a:?}") == "ASend")).unwrap();
    let bad = edit_record(&text, k as u64, |v| v["action"] = Value::from("BLoss"));
    let err = replay(&ExampleModel::default(), &parse(&bad).unwrap()).unwrap_err();
    assert_eq!(err.index(), Some(k as u64));
}

#[test]
fn missing_guard_is_rejected() {
    let text = example_log(8, 300);
    let log = parse(&text).unwrap();
    let k = log.records.iter().position(|r| r.kind.action().is_some() && !r.guards.is_empty()).unwrap();
    let bad = edit_record(&text, k as u64, |v| v["guards"] = Value::Array(vec![]));
    let err = replay(&ExampleModel::default(), &parse(&bad).unwrap()).unwrap_err();
    assert_eq!(err.index(), Some(k as u64));
    assert!(err.to_string().contains("not opened"), "{err}");
}

#[test]
fn dropped_record_breaks_numbering() {
    let text = example_log(9, 200);
    let dropped: String = text
        .lines()
        .filter(|l| !l.contains("\"i\":5,") || l.contains("\"event\""))
        .map(|l| format!("{l}\n"))
        .collect();
    let err = replay(&ExampleModel::default(), &parse(&dropped).unwrap()).unwrap_err();
    assert_eq!(err.index(), Some(5));
}

#[test]
fn garbage_line_is_malformed() {
    let mut text = example_log(2, 50);
    text.push_str("{not json\n");
    match parse(&text) {
        Err(ReplayError::Malformed { line, .. }) => assert_eq!(line, text.lines().count()),
        other => panic!("{:?}", other.err()),
    }
}

#[test]
fn memcached_logs_round_trip_and_replay() {
    let cfg = SchedulerConfig { seed: 4, max_steps: 500, ..SchedulerConfig::default() };
    let out = run_memcached(&cfg, &RunOptions::default()).unwrap();
    let mut buf = Vec::new();
    write_log(&out.trace.records, &out.aux, &mut buf).unwrap();
    let log: TraceLog<MemcachedModel> = read_log(Cursor::new(&buf)).unwrap();
    let s = replay(&out.model, &log).unwrap();
    assert_eq!(s.records, 500);
    assert!(s.guard_events > 0);
}
