//! Acceptance criteria 1-9, run in order. Each prints one PASS/FAIL line
//! to the real stdout (bypassing test capture) and the test fails if any
//! criterion does.

use std::collections::BTreeSet;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ghostlock::harness::example::run_example;
use ghostlock::harness::memcached::{model_definition, run_memcached, run_script};
use ghostlock::harness::{Mode, Mutant, RunOptions, SchedulerConfig};
use ghostlock::ltl::PendingClass;
use ghostlock::model::{
    AbsCmd, AbsRes, Bytes, ExampleAction, ExampleGuardKind, ExampleModel, ExampleState, ExampleVariant, Model,
    OracleBounds,
};
use ghostlock::oracle::{
    check_example_lemma, check_guard_stability, check_rule_soundness, check_rule_soundness_with,
    truncated_always_unfold, LemmaFailure, RULE_NAMES,
};

const BIN: &str = env!("CARGO_BIN_EXE_ghostlock");

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ghostlock(args: &[&str]) -> (i32, String) {
    let out = Command::new(BIN).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn example_cfg(seed: u64, steps: u64, loss: f64) -> SchedulerConfig {
    SchedulerConfig { seed, max_steps: steps, loss, ..SchedulerConfig::default() }
}

fn bounds(text: &str) -> OracleBounds {
    text.parse().expect("bounds parse")
}

fn criterion_1(dir: &Path) -> Outcome {
    let mut slowest = Duration::ZERO;
    for s in 1..=20u64 {
        let out = dir.join(format!("c1-{s}"));
        let seed = s.to_string();
        let t = Instant::now();
        let (code, stdout) =
            ghostlock(&["run", "--model", "example", "--seed", &seed, "--steps", "1000", "--loss", "0.2", "--out", out.to_str().unwrap()]);
        slowest = slowest.max(t.elapsed());
        ensure(code == 0, || format!("seed {s}: exit {code}: {stdout}"))?;
        let violations = std::fs::read_to_string(out.join("violations.jsonl")).map_err(|e| e.to_string())?;
        ensure(violations.is_empty(), || format!("seed {s}: {violations}"))?;
        let trace = out.join("trace.jsonl");
        let (code, stdout) = ghostlock(&["replay", "--model", "example", "--trace", trace.to_str().unwrap()]);
        ensure(code == 0, || format!("seed {s}: replay exit {code}: {stdout}"))?;
    }
    ensure(slowest < Duration::from_secs(5), || format!("slowest run took {slowest:?}"))?;
    Ok(format!("20 seeds clean and replayed, slowest run {:.2}s", slowest.as_secs_f64()))
}

fn criterion_2(dir: &Path) -> Outcome {
    ensure(Mutant::ALL.len() >= 8, || "fewer than 8 mutants".into())?;
    let mut lines = Vec::new();
    for m in Mutant::ALL {
        let mut detected = 0;
        for s in 1..=20u64 {
            let cfg = example_cfg(s, 1000, 0.2);
            let opts = RunOptions::with_mutant(m);
            let out = match m.model() {
                "memcached" => run_memcached(&cfg, &opts).map(|o| (o.passed(), o.violation_kinds().first().map(|k| k.to_string()))),
                _ => run_example(&cfg, &opts).map(|o| (o.passed(), o.violation_kinds().first().map(|k| k.to_string()))),
            }
            .map_err(|e| e.to_string())?;
            if !out.0 && out.1.as_deref() == Some(m.expected()) {
                detected += 1;
            }
        }
        ensure(detected >= 19, || format!("{m}: detected as {} on only {detected}/20 seeds", m.expected()))?;
        // the binary reports the same thing through its exit code
        let out = dir.join(format!("c2-{m}"));
        let (code, _) = ghostlock(&["run", "--model", m.model(), "--seed", "1", "--steps", "1000", "--mutant", m.name(), "--out", out.to_str().unwrap()]);
        ensure(code == 1, || format!("{m}: binary exit {code}"))?;
        let first = std::fs::read_to_string(out.join("violations.jsonl")).map_err(|e| e.to_string())?;
        let kind = serde_json::from_str::<serde_json::Value>(first.lines().next().unwrap_or("{}"))
            .ok()
            .and_then(|v| v["type"].as_str().map(str::to_string));
        ensure(kind.as_deref() == Some(m.expected()), || format!("{m}: binary reported {kind:?}"))?;
        lines.push(format!("{m} {detected}/20"));
    }
    Ok(lines.join(", "))
}

fn criterion_3() -> Outcome {
    let b = bounds("max_value=3,max_channel=2");
    let faithful = ExampleModel::new(ExampleVariant::Faithful);
    let t = Instant::now();
    for name in ["step1", "step2", "step3", "step4"] {
        check_example_lemma(&faithful, &b, name).map_err(|e| format!("{name}: {e:?}"))?;
    }
    let took = t.elapsed();
    ensure(took < Duration::from_secs(60), || format!("lemmas took {took:?}"))?;
    let mutated = ExampleModel::new(ExampleVariant::AsendPlusOne);
    let mut shortest = None;
    for name in ["step1", "step2", "step3", "step4"] {
        let len = match check_example_lemma(&mutated, &b, name) {
            Ok(_) => continue,
            Err(LemmaFailure::Reachable(cx)) => cx.len(),
            Err(LemmaFailure::Transition(t)) => t.to_counterexample().len(),
            Err(e) => return Err(format!("mutated {name}: {e:?}")),
        };
        shortest = Some(shortest.map_or(len, |s: usize| s.min(len)));
    }
    let len = shortest.ok_or("mutated model passes every lemma")?;
    ensure(len <= 3, || format!("shortest counterexample has {len} steps"))?;
    Ok(format!("steps 1-4 hold in {:.2}s; mutated model fails with a {len}-step counterexample", took.as_secs_f64()))
}

fn criterion_4() -> Outcome {
    let m = ExampleModel::new(ExampleVariant::Faithful);
    let b = bounds("max_value=3,max_channel=2");
    let held = |k| BTreeSet::from([k]);
    for c in 0..=3u64 {
        check_guard_stability(&m, &b, &held(ExampleGuardKind::NodeA), |s: &ExampleState| s.a_ctr == c)
            .map_err(|t| format!("a_ctr == {c} broken by {:?}", t.action))?;
    }
    let broken = check_guard_stability(&m, &b, &held(ExampleGuardKind::NodeA), |s: &ExampleState| s.b_work.is_none());
    match broken {
        Err(t) if t.action == ExampleAction::BRecv => {}
        other => return Err(format!("b_work == None under NodeA: expected a BRecv counterexample, got {other:?}")),
    }
    // the predicates node B opens with are stable under its own guard
    check_guard_stability(&m, &b, &held(ExampleGuardKind::NodeB), |s: &ExampleState| s.b_work.is_none())
        .map_err(|t| format!("b_work == None under NodeB broken by {:?}", t.action))?;
    for n in 0..=3u64 {
        check_guard_stability(&m, &b, &held(ExampleGuardKind::NodeB), |s: &ExampleState| s.b_work == Some(n))
            .map_err(|t| format!("b_work == Some({n}) under NodeB broken by {:?}", t.action))?;
    }
    let mut opens = 0;
    for s in 1..=20u64 {
        let out = run_example(&example_cfg(s, 1000, 0.2), &RunOptions::default()).map_err(|e| e.to_string())?;
        ensure(!out.violation_kinds().contains(&"StabilityViolation"), || format!("seed {s}: {:?}", out.violations))?;
        ensure(out.passed(), || format!("seed {s}: {:?}", out.violations))?;
        opens += out.aux.len();
    }
    Ok(format!("oracle verdicts as expected; 20 runs, {opens} guard events, no StabilityViolation"))
}

fn criterion_5() -> Outcome {
    let cfg = SchedulerConfig { fairness_window: 10, ..example_cfg(1, 2000, 0.2) };
    let opts = RunOptions { liveness: Some(vec!["1".into(), "2".into(), "3".into()]), ..RunOptions::default() };
    let out = run_example(&cfg, &opts).map_err(|e| e.to_string())?;
    let kinds = out.violation_kinds();
    ensure(!kinds.contains(&"DischargeUnjustified") && !kinds.contains(&"MeasureNotDecreasing"), || {
        format!("{kinds:?}")
    })?;
    ensure(out.passed(), || format!("{:?}", out.violations))?;
    let a = out.stat("a_discharged");
    let sent = out.stat("b_sent");
    ensure(a >= 50, || format!("A discharged only {a}"))?;
    ensure(sent >= 10, || format!("B's lower bound reached only {sent}"))?;
    let l = out.liveness.as_ref().ok_or("no liveness report")?;
    ensure(l.violated.is_empty(), || format!("{:?}", l.violated))?;
    ensure(l.pending.iter().all(|p| p.class == PendingClass::ProgressPending), || format!("{:?}", l.pending))?;
    ensure(l.balanced(), || "ledger does not balance".into())?;

    let blocked_cfg = SchedulerConfig { loss_a_to_b: Some(1.0), ..cfg };
    let blocked = run_example(&blocked_cfg, &opts).map_err(|e| e.to_string())?;
    let l = blocked.liveness.as_ref().ok_or("no liveness report")?;
    let b: Vec<_> = l.pending.iter().filter(|p| p.owner == "B").collect();
    ensure(!b.is_empty(), || "B's obligations vanished under total loss".into())?;
    ensure(b.iter().all(|p| p.class == PendingClass::AssumptionBlocked), || format!("{b:?}"))?;
    ensure(l.balanced(), || "ledger does not balance under total loss".into())?;
    Ok(format!(
        "A discharged {a}, B's bound reached {sent}, residue {} progress-pending; total loss leaves {} B obligations assumption-blocked",
        out.liveness.as_ref().map_or(0, |l| l.pending.len()),
        b.len()
    ))
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let mut justified = 0;
    for rule in RULE_NAMES {
        let r = check_rule_soundness(rule, 6).map_err(|e| e.to_string())?;
        ensure(r.justified > 0, || format!("{rule}: no application was exercised"))?;
        justified += r.justified;
    }
    let broken = check_rule_soundness_with(truncated_always_unfold, "AlwaysUnfold", 6);
    ensure(broken.is_err(), || "broken AlwaysUnfold passed".into())?;
    let took = t.elapsed();
    ensure(took < Duration::from_secs(120), || format!("took {took:?}"))?;
    Ok(format!(
        "{} rules sound ({justified} justified applications), broken rule caught, {:.1}s",
        RULE_NAMES.len(),
        took.as_secs_f64()
    ))
}

fn criterion_7() -> Outcome {
    let mut events = 0;
    for s in 1..=10u64 {
        let checked = run_example(&example_cfg(s, 1000, 0.2), &RunOptions::default()).map_err(|e| e.to_string())?;
        let erased = run_example(&SchedulerConfig { mode: Mode::Erased, ..example_cfg(s, 1000, 0.2) }, &RunOptions::default())
            .map_err(|e| e.to_string())?;
        ensure(checked.observable.to_text() == erased.observable.to_text(), || format!("seed {s}: logs differ"))?;
        ensure(erased.trace.is_empty() && erased.aux.is_empty(), || format!("seed {s}: erased run recorded a trace"))?;
        events += checked.observable.len();
    }
    Ok(format!("10 seeds byte-identical ({events} observable events), erased traces empty"))
}

fn criterion_8(dir: &Path) -> Outcome {
    let mut opens = 0;
    for s in 1..=10u64 {
        let out = dir.join(format!("c8-{s}"));
        let seed = s.to_string();
        let (code, stdout) =
            ghostlock(&["run", "--model", "memcached", "--seed", &seed, "--steps", "2000", "--clients", "4", "--out", out.to_str().unwrap()]);
        ensure(code == 0, || format!("seed {s}: exit {code}: {stdout}"))?;
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
        let stat = |k: &str| report["stats"][k].as_u64().unwrap_or(0);
        // every processed command opened Storage once, with the coupling checked at the open
        ensure(stat("storage_opens") > 0 && stat("storage_opens") == stat("processed"), || {
            format!("seed {s}: {} opens for {} commands", stat("storage_opens"), stat("processed"))
        })?;
        opens += stat("storage_opens");
    }

    let k = |s: &str| Bytes::from(s);
    let table: Vec<(Vec<AbsCmd>, Vec<AbsRes>)> = vec![
        (
            vec![AbsCmd::Get(k("a")), AbsCmd::Set(k("a"), k("1")), AbsCmd::Get(k("a"))],
            vec![AbsRes::NotFound, AbsRes::Stored, AbsRes::Value(k("1"))],
        ),
        (
            vec![AbsCmd::Set(k("a"), k("1")), AbsCmd::Set(k("a"), k("2")), AbsCmd::Get(k("a"))],
            vec![AbsRes::Stored, AbsRes::Stored, AbsRes::Value(k("2"))],
        ),
        (
            vec![AbsCmd::Set(k("a"), k("1")), AbsCmd::Delete(k("a")), AbsCmd::Get(k("a")), AbsCmd::Delete(k("a"))],
            vec![AbsRes::Stored, AbsRes::Deleted, AbsRes::NotFound, AbsRes::NotFound],
        ),
        (
            vec![AbsCmd::Set(k("a"), k("1")), AbsCmd::Set(k("b"), k("2")), AbsCmd::Delete(k("a")), AbsCmd::Get(k("b"))],
            vec![AbsRes::Stored, AbsRes::Stored, AbsRes::Deleted, AbsRes::Value(k("2"))],
        ),
    ];
    for (script, expected) in &table {
        let (answers, out) = run_script(script, &RunOptions::default()).map_err(|e| e.to_string())?;
        ensure(out.passed(), || format!("{script:?}: {:?}", out.violations))?;
        ensure(&answers == expected, || format!("{script:?}: got {answers:?}"))?;
    }

    let cfg = SchedulerConfig { seed: 1, max_steps: 800, ..SchedulerConfig::default() };
    let single = run_memcached(&cfg, &RunOptions::default()).map_err(|e| e.to_string())?;
    let multi = run_memcached(&cfg, &RunOptions { threaded: true, ..RunOptions::default() }).map_err(|e| e.to_string())?;
    ensure(multi.passed(), || format!("threaded: {:?}", multi.violations))?;
    let render = |m: &ghostlock::model::MemcachedModel| m.tla_module().map(|t| t.render()).unwrap_or_default();
    ensure(render(&single.model) == render(&multi.model) && render(&single.model) == model_definition(4), || {
        "model definitions differ between handler configurations".into()
    })?;
    Ok(format!(
        "10 seeds clean ({opens} coupled Storage opens), {} scripts match, model definition unchanged",
        table.len()
    ))
}

fn criterion_9() -> Outcome {
    let f = "(always (eventually (action ARecv)))";
    let (code, stdout) = ghostlock(&["check", "--model", "example", "--bounds", "max_value=1,max_channel=1", "--ltl", f, "--fair", "example-channels"]);
    ensure(code == 0, || format!("fair check exit {code}: {stdout}"))?;

    use ghostlock::oracle::{build_graph, check_ltl_bounded, fairness_preset, LtlOutcome};
    let m = ExampleModel::new(ExampleVariant::Faithful);
    let b = bounds("max_value=1,max_channel=1");
    let graph = build_graph(&m, &b).map_err(|e| e.to_string())?;
    let formula = m.parse_formula(f).map_err(|e| e.to_string())?;
    let none = fairness_preset(&m, "none").map_err(|e| e.to_string())?;
    let lasso = match check_ltl_bounded(&m, &graph, &formula, &none).map_err(|e| e.to_string())? {
        LtlOutcome::Violated(l) => l,
        LtlOutcome::Holds => return Err("holds without fairness".into()),
    };
    let start = lasso.cycle_start.ok_or("counterexample is not a lasso")?;
    let cycle: Vec<_> = lasso.steps[start..].iter().filter_map(|(a, _)| a.clone()).collect();
    ensure(!cycle.contains(&ExampleAction::ARecv), || format!("cycle has ARecv: {cycle:?}"))?;
    ensure(cycle.iter().any(|a| matches!(a, ExampleAction::ALoss | ExampleAction::BLoss)), || {
        format!("cycle has no loss: {cycle:?}")
    })?;
    let (code, stdout) = ghostlock(&["check", "--model", "example", "--bounds", "max_value=1,max_channel=1", "--ltl", f, "--fair", "none"]);
    ensure(code == 1 && stdout.contains("cycle-start"), || format!("unfair check exit {code}: {stdout}"))?;
    Ok(format!("holds under example-channels; lasso cycle of {} steps with a loss and no ARecv", cycle.len()))
}

#[test]
fn acceptance_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let criteria: Vec<Criterion> = vec![
        ("1 correct-run safety", Box::new(|| criterion_1(dir.path()))),
        ("2 mutation kill rate", Box::new(|| criterion_2(dir.path()))),
        ("3 model invariants", Box::new(criterion_3)),
        ("4 guard stability", Box::new(criterion_4)),
        ("5 liveness bookkeeping", Box::new(criterion_5)),
        ("6 rule soundness", Box::new(criterion_6)),
        ("7 erasure", Box::new(criterion_7)),
        ("8 memcached-lite", Box::new(|| criterion_8(dir.path()))),
        ("9 bounded LTL oracle", Box::new(criterion_9)),
    ];
    let mut failed = Vec::new();
    let mut stdout = std::io::stdout();
    for (name, run) in &criteria {
        let t = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        let line = match &r {
            Ok(detail) => format!("criterion {name}: PASS ({secs:.1}s) {detail}"),
            Err(why) => format!("criterion {name}: FAIL ({secs:.1}s) {why}"),
        };
        writeln!(stdout, "{line}").unwrap();
        if r.is_err() {
            failed.push(line);
        }
    }
    assert!(failed.is_empty(), "{failed:#?}");
}
