//! Breadth-first state graph of a bounded model instance.

use std::collections::{HashMap, VecDeque};

use super::OracleError;
use crate::model::{Model, OracleBounds};
use crate::trace::{AuxRecord, Trace};

pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// A labelled edge. `action` is `None` only for the stutter self-loop
/// added to states without successors, so every path extends forever.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge<A> {
    pub from: usize,
    pub to: usize,
    pub action: Option<A>,
}

pub struct StateGraph<M: Model> {
    pub bounds: OracleBounds,
    /// States in discovery order; initial states first, sorted.
    pub states: Vec<M::State>,
    pub index: HashMap<M::State, usize>,
    pub initial: Vec<usize>,
    pub edges: Vec<Edge<M::Action>>,
    /// Outgoing edge ids per state.
    pub out: Vec<Vec<usize>>,
    /// BFS tree edge leading to each state.
    pub parent: Vec<Option<usize>>,
}

impl<M: Model> StateGraph<M> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edge ids of a shortest path from an initial state to `target`.
    pub fn path_to(&self, target: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut at = target;
        while let Some(e) = self.parent[at] {
            path.push(e);
            at = self.edges[e].from;
        }
        path.reverse();
        path
    }

    /// Counterexample following the given edge ids from their first source.
    pub fn counterexample(&self, start: usize, edges: &[usize]) -> Counterexample<M> {
        Counterexample {
            initial: self.states[start].clone(),
            steps: edges.iter().map(|&e| (self.edges[e].action.clone(), self.states[self.edges[e].to].clone())).collect(),
            cycle_start: None,
        }
    }
}

/// A replayable path; for liveness, `cycle_start` marks where the repeating
/// part begins.
pub struct Counterexample<M: Model> {
    pub initial: M::State,
    pub steps: Vec<(Option<M::Action>, M::State)>,
    pub cycle_start: Option<usize>,
}

impl<M: Model> std::fmt::Debug for Counterexample<M> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Counterexample")
            .field("initial", &self.initial)
            .field("steps", &self.steps)
            .field("cycle_start", &self.cycle_start)
            .finish()
    }
}

impl<M: Model> Counterexample<M> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn actions(&self) -> impl Iterator<Item = Option<&M::Action>> {
        self.steps.iter().map(|(a, _)| a.as_ref())
    }

    /// The repeating part of a lasso (empty for finite counterexamples).
    pub fn cycle(&self) -> &[(Option<M::Action>, M::State)] {
        match self.cycle_start {
            Some(k) => &self.steps[k..],
            None => &[],
        }
    }

    /// The path as a trace attributed to node `"oracle"`.
    pub fn to_trace(&self) -> Trace<M> {
        let mut t = Trace::new(self.initial.clone());
        for (a, s) in &self.steps {
            t.push_step("oracle", a.clone(), s.clone(), Vec::new());
        }
        t
    }

    /// Auxiliary marker for the cycle start, for the JSON-lines form.
    pub fn markers(&self) -> Vec<AuxRecord> {
        self.cycle_start
            .map(|k| AuxRecord { i: k as u64, guard: serde_json::Value::Null, event: "cycle-start".into() })
            .into_iter()
            .collect()
    }

    /// Every step satisfies `next` (stutter steps repeat the state).
    pub fn replays(&self, model: &M) -> bool {
        let mut prev = &self.initial;
        for (a, s) in &self.steps {
            let ok = match a {
                Some(a) => model.next(prev, s, a),
                None => prev == s,
            };
            if !ok {
                return false;
            }
            prev = s;
        }
        model.init(&self.initial)
    }
}

pub fn build_graph<M: Model>(model: &M, bounds: &OracleBounds) -> Result<StateGraph<M>, OracleError> {
    build_graph_with_cap(model, bounds, DEFAULT_STATE_CAP)
}

/// Breadth-first closure of `successors` from the in-bounds initial states.
pub fn build_graph_with_cap<M: Model>(
    model: &M,
    bounds: &OracleBounds,
    cap: usize,
) -> Result<StateGraph<M>, OracleError> {
    let mut g = StateGraph {
        bounds: bounds.clone(),
        states: Vec::new(),
        index: HashMap::new(),
        initial: Vec::new(),
        edges: Vec::new(),
        out: Vec::new(),
        parent: Vec::new(),
    };
    let mut inits: Vec<M::State> =
        model.init_states(bounds).into_iter().filter(|s| model.init(s) && model.in_bounds(s, bounds)).collect();
    inits.sort();
    inits.dedup();
    let mut queue = VecDeque::new();
    for s in inits {
        let id = g.states.len();
        g.index.insert(s.clone(), id);
        g.states.push(s);
        g.out.push(Vec::new());
        g.parent.push(None);
        g.initial.push(id);
        queue.push_back(id);
    }
    if g.states.len() > cap {
        return Err(OracleError::StateSpaceBudgetExceeded { cap });
    }
    while let Some(p) = queue.pop_front() {
        let succ = model.successors(&g.states[p], bounds);
        if succ.is_empty() {
            let e = g.edges.len();
            g.edges.push(Edge { from: p, to: p, action: None });
            g.out[p].push(e);
            continue;
        }
        for (a, s) in succ {
            let to = match g.index.get(&s) {
                Some(&id) => id,
                None => {
                    let id = g.states.len();
                    if id >= cap {
                        return Err(OracleError::StateSpaceBudgetExceeded { cap });
                    }
                    g.index.insert(s.clone(), id);
                    g.states.push(s);
                    g.out.push(Vec::new());
                    g.parent.push(Some(g.edges.len()));
                    queue.push_back(id);
                    id
                }
            };
            let e = g.edges.len();
            g.edges.push(Edge { from: p, to, action: Some(a) });
            g.out[p].push(e);
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExampleAction, ExampleModel};

    #[test]
    fn zero_bounds_block_every_send() {
        let g = build_graph(&ExampleModel::default(), &OracleBounds::new(0, 0)).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.edges[0].action, None);
    }

    #[test]
    fn edges_satisfy_next_and_paths_replay() {
        let m = ExampleModel::default();
        let g = build_graph(&m, &OracleBounds::new(1, 1)).unwrap();
        for e in &g.edges {
            if let Some(a) = &e.action {
                assert!(m.next(&g.states[e.from], &g.states[e.to], a));
            }
        }
        let last = g.len() - 1;
        let cx = g.counterexample(g.initial[0], &g.path_to(last));
        assert!(cx.replays(&m));
        assert_eq!(cx.steps.last().unwrap().1, g.states[last]);
        assert_eq!(g.edges[g.out[0][0]].action, Some(ExampleAction::ASend));
    }

    #[test]
    fn cap_is_enforced() {
        let err = build_graph_with_cap(&ExampleModel::default(), &OracleBounds::new(1, 1), 5).err().unwrap();
        assert_eq!(err, OracleError::StateSpaceBudgetExceeded { cap: 5 });
    }

    #[test]
    fn construction_is_deterministic() {
        let m = ExampleModel::default();
        let a = build_graph(&m, &OracleBounds::new(1, 1)).unwrap();
        let b = build_graph(&m, &OracleBounds::new(1, 1)).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.edges, b.edges);
    }
}
