use std::collections::BTreeMap;
use std::io::Cursor;

use proptest::prelude::*;

use ghostlock::harness::example::run_example;
use ghostlock::harness::memcached::{execute, run_memcached, run_script};
use ghostlock::harness::{Mode, RunOptions, SchedulerConfig};
use ghostlock::ltl::PendingClass;
use ghostlock::model::{AbsCmd, AbsRes, Bytes, ExampleModel, Model, OracleBounds};
use ghostlock::trace::{read_log, replay, write_log, TraceLog};

fn example_cfg(seed: u64, steps: u64, loss: f64) -> SchedulerConfig {
    SchedulerConfig { seed, max_steps: steps, loss, ..SchedulerConfig::default() }
}

fn formula_text() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("(state b_work_none)".to_string()),
        (0u64..4).prop_map(|n| format!("(state a_ctr_ge {n})")),
        Just("(action ASend)".to_string()),
        Just("(action ARecv)".to_string()),
        (0u64..4).prop_map(|n| format!("(action BSend {n})")),
        (0u64..3, 0u64..3).prop_map(|(i, r)| format!("(pred b_to_a_appends {i} {r})")),
        Just("true".to_string()),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("(and {a} {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("(or {a} {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("(implies {a} {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("(entails {a} {b})")),
            inner.clone().prop_map(|a| format!("(always {a})")),
            inner.clone().prop_map(|a| format!("(eventually {a})")),
            (0u64..3, inner.clone()).prop_map(|(n, a)| format!("(exists x (nat {n}) (and (action BSend x) {a}))")),
            (0u64..3, inner).prop_map(|(n, a)| format!("(forall x (set 0 {n}) (where (ne 1)) (or (state a_ctr_ge x) {a}))")),
        ]
    })
}

fn command() -> impl Strategy<Value = AbsCmd> {
    let key = prop_oneof![Just("a"), Just("b"), Just("c")].prop_map(Bytes::from);
    let val = prop::collection::vec(any::<u8>(), 0..4).prop_map(Bytes);
    prop_oneof![
        (key.clone(), val).prop_map(|(k, v)| AbsCmd::Set(k, v)),
        key.clone().prop_map(AbsCmd::Get),
        key.prop_map(AbsCmd::Delete),
    ]
}

/// Key-value semantics written independently of the harness.
fn table_oracle(script: &[AbsCmd]) -> Vec<AbsRes> {
    let mut m: BTreeMap<Bytes, Bytes> = BTreeMap::new();
    script
        .iter()
        .map(|c| match c {
            AbsCmd::Set(k, v) => {
                m.insert(k.clone(), v.clone());
                AbsRes::Stored
            }
            AbsCmd::Get(k) => m.get(k).cloned().map_or(AbsRes::NotFound, AbsRes::Value),
            AbsCmd::Delete(k) => m.remove(k).map_or(AbsRes::NotFound, |_| AbsRes::Deleted),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn correct_runs_are_clean_and_replay(seed in any::<u64>(), loss in 0.0f64..0.7, steps in 1u64..400) {
        let out = run_example(&example_cfg(seed, steps, loss), &RunOptions::default()).unwrap();
        prop_assert!(out.passed(), "{:?}", out.violations);
        let mut buf = Vec::new();
        write_log(&out.trace.records, &out.aux, &mut buf).unwrap();
        let log: TraceLog<ExampleModel> = read_log(Cursor::new(&buf)).unwrap();
        let s = replay(&out.model, &log).unwrap();
        prop_assert_eq!(s.records, out.trace.len());
        let mut again = Vec::new();
        write_log(&log.records, &log.aux, &mut again).unwrap();
        prop_assert_eq!(buf, again);
    }

    #[test]
    fn erasure_preserves_observable_behaviour(seed in any::<u64>(), loss in 0.0f64..0.7) {
        let checked = run_example(&example_cfg(seed, 300, loss), &RunOptions::default()).unwrap();
        let erased = run_example(&SchedulerConfig { mode: Mode::Erased, ..example_cfg(seed, 300, loss) }, &RunOptions::default()).unwrap();
        prop_assert_eq!(checked.observable.to_text(), erased.observable.to_text());
        prop_assert!(erased.trace.is_empty());
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>(), loss in 0.0f64..0.7) {
        let one = run_example(&example_cfg(seed, 200, loss), &RunOptions::default()).unwrap();
        let two = run_example(&example_cfg(seed, 200, loss), &RunOptions::default()).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        one.trace.write_jsonl(&mut x).unwrap();
        two.trace.write_jsonl(&mut y).unwrap();
        prop_assert_eq!(x, y);
        prop_assert_eq!(one.observable, two.observable);
    }

    #[test]
    fn obligation_ledger_balances(seed in any::<u64>(), loss in 0.0f64..0.6, window in 1u32..20) {
        let cfg = SchedulerConfig { fairness_window: window, ..example_cfg(seed, 500, loss) };
        let opts = RunOptions { liveness: Some(vec!["1".into(), "2".into(), "3".into()]), ..RunOptions::default() };
        let out = run_example(&cfg, &opts).unwrap();
        prop_assert!(out.passed(), "{:?}", out.violations);
        let l = out.liveness.unwrap();
        prop_assert!(l.balanced());
        prop_assert!(l.violated.is_empty());
        prop_assert!(l.pending.iter().all(|p| p.class == PendingClass::ProgressPending));
    }

    #[test]
    fn formulas_print_and_reparse(text in formula_text()) {
        let m = ExampleModel::default();
        let f = m.parse_formula(&text).unwrap();
        let printed = f.to_string();
        let g = m.parse_formula(&printed).unwrap();
        prop_assert_eq!(&f, &g);
        prop_assert_eq!(printed, g.to_string());
        prop_assert!(f.free_vars().is_empty());
    }

    #[test]
    fn bounds_round_trip(v in 0u64..9, c in 0usize..5, n in 1u64..5, k in 1u64..4, w in 1u64..4) {
        let b = OracleBounds { max_value: v, max_channel: c, connections: n, keys: k, values: w };
        prop_assert_eq!(b.to_string().parse::<OracleBounds>().unwrap(), b);
    }

    #[test]
    fn bytes_escape_round_trip(raw in prop::collection::vec(any::<u8>(), 0..16)) {
        let b = Bytes(raw);
        prop_assert_eq!(Bytes::unescape(&b.escaped()).unwrap(), b);
    }

    #[test]
    fn store_semantics_match_table(script in prop::collection::vec(command(), 0..30)) {
        let mut store = BTreeMap::new();
        let got: Vec<AbsRes> = script.iter().map(|c| execute(&mut store, c)).collect();
        prop_assert_eq!(got, table_oracle(&script));
    }

    #[test]
    fn scripted_handler_matches_table(script in prop::collection::vec(command(), 1..12)) {
        let (answers, out) = run_script(&script, &RunOptions::default()).unwrap();
        prop_assert!(out.passed(), "{:?}", out.violations);
        prop_assert_eq!(answers, table_oracle(&script));
    }

    #[test]
    fn memcached_runs_are_clean(seed in any::<u64>(), clients in 1u64..5) {
        let cfg = SchedulerConfig { seed, max_steps: 400, ..SchedulerConfig::default() };
        let out = run_memcached(&cfg, &RunOptions { clients, ..RunOptions::default() }).unwrap();
        prop_assert!(out.passed(), "{:?}", out.violations);
        prop_assert_eq!(out.stat("processed"), out.stat("storage_opens"));
    }
}
