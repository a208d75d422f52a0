//! Reachable-graph sizes and counterexample lengths of the example model,
//! computed by a self-contained enumerator written against the model's
//! transition rules and then frozen.

use std::collections::{BTreeSet, HashMap, VecDeque};

use ghostlock::model::{ExampleModel, ExampleVariant, OracleBounds};
use ghostlock::oracle::{build_graph, check_invariant};

/// (a_ctr, b_work, a_to_b, b_to_a)
type S = (u64, Option<u64>, Vec<u64>, Vec<(u64, u64)>);

struct Enumerated {
    states: usize,
    /// Distinct (from, label, to) triples; BSend is labelled by its response.
    edges: usize,
    /// BFS depth of every state.
    depth: HashMap<S, usize>,
}

fn enumerate(max_value: u64, max_channel: usize, plus_one: bool) -> Enumerated {
    let ok = |s: &S| {
        s.0 <= max_value
            && s.1.is_none_or(|n| n <= max_value)
            && s.2.len() <= max_channel
            && s.3.len() <= max_channel
            && s.2.iter().all(|n| *n <= max_value)
            && s.3.iter().all(|(n, r)| *n <= max_value && *r <= max_value)
    };
    let succ = |s: &S| -> Vec<(String, S)> {
        let (ctr, work, ab, ba) = s.clone();
        let mut out = Vec::new();
        let mut ab2 = ab.clone();
        ab2.push(if plus_one { ctr + 1 } else { ctr });
        out.push(("ASend".to_string(), (ctr, work, ab2, ba.clone())));
        if let Some(((n, _), rest)) = ba.split_first() {
            out.push(("ARecv".into(), (ctr.max(n + 1), work, ab.clone(), rest.to_vec())));
            out.push(("ALoss".into(), (ctr, work, ab.clone(), rest.to_vec())));
        }
        if let Some(req) = work {
            for r in 0..=max_value {
                let mut ba2 = ba.clone();
                ba2.push((req, r));
                out.push((format!("BSend{r}"), (ctr, None, ab.clone(), ba2)));
            }
        }
        if let Some((n, rest)) = ab.split_first() {
            if work.is_none() {
                out.push(("BRecv".into(), (ctr, Some(*n), rest.to_vec(), ba.clone())));
            }
            out.push(("BLoss".into(), (ctr, work, rest.to_vec(), ba.clone())));
        }
        out.into_iter().filter(|(_, t)| ok(t)).collect()
    };
    let init: S = (0, None, vec![], vec![]);
    let mut depth = HashMap::from([(init.clone(), 0)]);
    let mut edges = BTreeSet::new();
    let mut queue = VecDeque::from([init]);
    while let Some(s) = queue.pop_front() {
        let d = depth[&s];
        for (label, t) in succ(&s) {
            edges.insert((s.clone(), label, t.clone()));
            if !depth.contains_key(&t) {
                depth.insert(t.clone(), d + 1);
                queue.push_back(t);
            }
        }
    }
    Enumerated { states: depth.len(), edges: edges.len(), depth }
}

fn library_counts(max_value: u64, max_channel: usize, variant: ExampleVariant) -> (usize, usize) {
    let g = build_graph(&ExampleModel::new(variant), &OracleBounds::new(max_value, max_channel)).unwrap();
    (g.len(), g.edges.iter().filter(|e| e.action.is_some()).count())
}

/// (max_value, max_channel, reachable states, labelled edges)
const FROZEN: [(u64, usize, usize, usize); 4] = [(1, 1, 42, 119), (2, 1, 98, 304), (2, 2, 702, 2748), (3, 2, 1671, 6681)];

#[test]
fn reachable_graph_sizes() {
    for (v, c, states, edges) in FROZEN {
        let e = enumerate(v, c, false);
        assert_eq!((e.states, e.edges), (states, edges), "independent enumeration at {{{v},{c}}}");
        assert_eq!(library_counts(v, c, ExampleVariant::Faithful), (states, edges), "library graph at {{{v},{c}}}");
    }
}

#[test]
fn mutated_model_graph_matches() {
    let e = enumerate(3, 2, true);
    assert_eq!(library_counts(3, 2, ExampleVariant::AsendPlusOne), (e.states, e.edges));
    assert_eq!(e.states, 641);
}

#[test]
fn shortest_step2_violation_in_mutated_model() {
    let e = enumerate(3, 2, true);
    let shortest = e.depth.iter().filter(|(s, _)| s.2.iter().any(|n| *n > s.0)).map(|(_, d)| *d).min().unwrap();
    assert_eq!(shortest, 1);
    let g = build_graph(&ExampleModel::new(ExampleVariant::AsendPlusOne), &OracleBounds::new(3, 2)).unwrap();
    let cx = check_invariant(&g, |s| s.a_to_b.iter().all(|n| *n <= s.a_ctr)).unwrap_err();
    assert_eq!(cx.len(), shortest);
}

#[test]
fn faithful_model_satisfies_lemmas_on_every_enumerated_state() {
    let e = enumerate(3, 2, false);
    for s in e.depth.keys() {
        assert!(s.2.iter().all(|n| *n <= s.0), "{s:?}");
        assert!(s.1.is_none_or(|n| n <= s.0), "{s:?}");
        assert!(s.3.iter().all(|(n, _)| *n <= s.0), "{s:?}");
    }
}
