//! Bounded LTL over the state graph under fairness.
//!
//! A fair infinite path of a finite graph eventually stays inside one
//! strongly connected component and visits every state of some sub-component
//! infinitely often, so each supported property shape reduces to a search
//! for a fair component under an edge mask. Components are refined the
//! Streett way: an untaken strong or response constraint removes the states
//! or edges it forbids and the search recurses.

use std::collections::{HashMap, VecDeque};

use super::graph::{Counterexample, StateGraph};
use super::OracleError;
use crate::ltl::{holds_at_with, EvalOptions, Formula, Verdict};
use crate::model::Model;
use crate::trace::Trace;

/// A fairness constraint over edge formulas.
pub enum Fairness<M: Model> {
    /// If `f` is eventually enabled forever, it is taken infinitely often.
    Weak(Formula<M>),
    /// If `f` is enabled infinitely often, it is taken infinitely often.
    Strong(Formula<M>),
    /// `◇□quiet ∨ □◇progress`.
    Response { quiet: Formula<M>, progress: Formula<M> },
}

impl<M: Model> Clone for Fairness<M> {
    fn clone(&self) -> Self {
        match self {
            Fairness::Weak(f) => Fairness::Weak(f.clone()),
            Fairness::Strong(f) => Fairness::Strong(f.clone()),
            Fairness::Response { quiet, progress } => {
                Fairness::Response { quiet: quiet.clone(), progress: progress.clone() }
            }
        }
    }
}

impl<M: Model> std::fmt::Debug for Fairness<M> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Fairness::Weak(g) => write!(f, "WF({g})"),
            Fairness::Strong(g) => write!(f, "SF({g})"),
            Fairness::Response { quiet, progress } => write!(f, "(<>[]{quiet} \\/ []<>{progress})"),
        }
    }
}

impl<M: Model> Fairness<M> {
    /// Reads an assumption of the form `◇□q ∨ □◇p` (either order) or
    /// `□◇p`.
    pub fn from_formula(f: &Formula<M>) -> Option<Self> {
        fn eventually_always<M: Model>(f: &Formula<M>) -> Option<&Formula<M>> {
            match f {
                Formula::Eventually(g) => match &**g {
                    Formula::Always(q) => Some(q),
                    _ => None,
                },
                _ => None,
            }
        }
        fn always_eventually<M: Model>(f: &Formula<M>) -> Option<&Formula<M>> {
            match f {
                Formula::Always(g) => match &**g {
                    Formula::Eventually(p) => Some(p),
                    _ => None,
                },
                _ => None,
            }
        }
        match f {
            Formula::Or(a, b) => {
                let (q, p) = match (eventually_always(a), always_eventually(b)) {
                    (Some(q), Some(p)) => (q, p),
                    _ => (eventually_always(b)?, always_eventually(a)?),
                };
                Some(Fairness::Response { quiet: q.clone(), progress: p.clone() })
            }
            _ => Some(Fairness::Response { quiet: Formula::Bottom, progress: always_eventually(f)?.clone() }),
        }
    }
}

/// Named fairness presets. `example-channels` pairs strong fairness of
/// `ASend` and weak fairness of `BSend` with the model's channel-delivery
/// assumptions; `model` is the model's assumptions alone; `none` is empty.
pub fn fairness_preset<M: Model>(model: &M, name: &str) -> Result<Vec<Fairness<M>>, OracleError> {
    let unknown = || OracleError::UnknownPreset(name.to_string());
    let assumptions = || -> Result<Vec<Fairness<M>>, OracleError> {
        model
            .fairness_assumptions()
            .iter()
            .map(|a| Fairness::from_formula(&a.formula).ok_or_else(unknown))
            .collect()
    };
    match name {
        "none" => Ok(Vec::new()),
        "model" => assumptions(),
        "example-channels" if model.name() == "example" => {
            let parse = |t: &str| model.parse_formula(t).map_err(|_| unknown());
            let mut out = vec![Fairness::Strong(parse("(action ASend)")?), Fairness::Weak(parse("(action BSend)")?)];
            out.extend(assumptions()?);
            Ok(out)
        }
        _ => Err(unknown()),
    }
}

/// A counterexample whose `cycle_start` is set.
pub type Lasso<M> = Counterexample<M>;

pub enum LtlOutcome<M: Model> {
    Holds,
    Violated(Lasso<M>),
}

impl<M: Model> std::fmt::Debug for LtlOutcome<M> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LtlOutcome::Holds => f.write_str("Holds"),
            LtlOutcome::Violated(l) => write!(f, "Violated({l:?})"),
        }
    }
}

impl<M: Model> LtlOutcome<M> {
    pub fn holds(&self) -> bool {
        matches!(self, LtlOutcome::Holds)
    }
}

/// Decides `f` over every fair infinite path of `graph`.
///
/// Supported shapes: non-temporal formulas, `□ψ`, `◇ψ`, `□◇ψ` and `◇□ψ`
/// with non-temporal `ψ`, conjunctions of those and universal quantifiers
/// over finite domains. Unbounded value domains are truncated at the
/// graph's `max_value`.
pub fn check_ltl_bounded<M: Model>(
    model: &M,
    graph: &StateGraph<M>,
    f: &Formula<M>,
    fairness: &[Fairness<M>],
) -> Result<LtlOutcome<M>, OracleError> {
    let mut cx = Checker::new(model, graph, fairness)?;
    cx.check(&f.normalize())
}

fn unsupported<M: Model>(f: &Formula<M>, reason: &str) -> OracleError {
    OracleError::UnsupportedShape { formula: f.to_string(), reason: reason.to_string() }
}

fn is_temporal<M: Model>(f: &Formula<M>) -> bool {
    match f {
        Formula::Always(_) | Formula::Eventually(_) | Formula::Entails(..) => true,
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => is_temporal(a) || is_temporal(b),
        Formula::Forall(q) | Formula::Exists(q) => is_temporal(&q.body),
        _ => false,
    }
}

/// Fairness compiled to per-edge truth tables.
enum Constraint {
    Weak(Vec<bool>),
    Strong(Vec<bool>),
    Response { quiet: Vec<bool>, progress: Vec<bool> },
    /// Extra demand of the property itself: some masked edge is taken
    /// infinitely often.
    Visit(Vec<bool>),
}

/// A fair component: its states and the edge mask it was found under.
struct FairScc {
    states: Vec<usize>,
    mask: Vec<bool>,
    /// Edges the cycle has to take so every constraint is met.
    required: Vec<usize>,
}

struct Checker<'a, M: Model> {
    model: &'a M,
    graph: &'a StateGraph<M>,
    constraints: Vec<Constraint>,
}

impl<'a, M: Model> Checker<'a, M> {
    fn new(model: &'a M, graph: &'a StateGraph<M>, fairness: &[Fairness<M>]) -> Result<Self, OracleError> {
        let mut cx = Checker { model, graph, constraints: Vec::new() };
        for fc in fairness {
            let c = match fc {
                Fairness::Weak(f) => Constraint::Weak(cx.table(f)?),
                Fairness::Strong(f) => Constraint::Strong(cx.table(f)?),
                Fairness::Response { quiet, progress } => {
                    Constraint::Response { quiet: cx.table(quiet)?, progress: cx.table(progress)? }
                }
            };
            cx.constraints.push(c);
        }
        Ok(cx)
    }

    /// Truth of a non-temporal formula on every edge, evaluated on the
    /// one-step trace the edge denotes.
    fn table(&self, f: &Formula<M>) -> Result<Vec<bool>, OracleError> {
        if is_temporal(f) {
            return Err(unsupported(f, "expected a non-temporal formula"));
        }
        let opts = EvalOptions { cap: Some(self.graph.bounds.max_value) };
        self.graph
            .edges
            .iter()
            .map(|e| {
                let mut t = Trace::<M>::new(self.graph.states[e.from].clone());
                t.push_step("oracle", e.action.clone(), self.graph.states[e.to].clone(), Vec::new());
                match holds_at_with(self.model, f, &t, 0, opts) {
                    Ok(Verdict::True) => Ok(true),
                    Ok(Verdict::False) => Ok(false),
                    Ok(Verdict::Pending) => Err(unsupported(f, "undecided on a single step")),
                    Err(e) => Err(unsupported(f, &e.to_string())),
                }
            })
            .collect()
    }

    fn check(&mut self, f: &Formula<M>) -> Result<LtlOutcome<M>, OracleError> {
        let n_edges = self.graph.edges.len();
        match f {
            Formula::Top => Ok(LtlOutcome::Holds),
            Formula::And(a, b) => match self.check(a)? {
                LtlOutcome::Holds => self.check(b),
                v => Ok(v),
            },
            Formula::Forall(q) if is_temporal(&q.body) => {
                let members = q.finite_members().ok_or_else(|| unsupported(f, "infinite quantifier domain"))?;
                for v in members {
                    if let v @ LtlOutcome::Violated(_) = self.check(&q.body.subst(&q.var, v))? {
                        return Ok(v);
                    }
                }
                Ok(LtlOutcome::Holds)
            }
            Formula::Always(body) => match &**body {
                Formula::Eventually(psi) if !is_temporal(psi) => {
                    // violated by a fair path that eventually never takes psi
                    let not_psi = negate(&self.table(psi)?);
                    let fair = self.fair_sccs(&not_psi, None);
                    Ok(self.lasso_into(&vec![true; n_edges], fair))
                }
                psi if !is_temporal(psi) => {
                    // violated by a reachable non-psi edge leading to a fair component
                    let bad = negate(&self.table(psi)?);
                    let fair = self.fair_sccs(&vec![true; n_edges], None);
                    Ok(self.lasso_through(&bad, fair))
                }
                _ => Err(unsupported(f, "nested temporal operators under always")),
            },
            Formula::Eventually(body) => match &**body {
                Formula::Always(psi) if !is_temporal(psi) => {
                    let not_psi = negate(&self.table(psi)?);
                    let fair = self.fair_sccs(&vec![true; n_edges], Some(not_psi));
                    Ok(self.lasso_into(&vec![true; n_edges], fair))
                }
                psi if !is_temporal(psi) => {
                    // violated by a fair path that never takes psi
                    let not_psi = negate(&self.table(psi)?);
                    let fair = self.fair_sccs(&not_psi, None);
                    Ok(self.lasso_into(&not_psi, fair))
                }
                _ => Err(unsupported(f, "nested temporal operators under eventually")),
            },
            psi if !is_temporal(psi) => {
                let t = self.table(psi)?;
                let bad: Vec<bool> = (0..n_edges)
                    .map(|e| !t[e] && self.graph.initial.contains(&self.graph.edges[e].from))
                    .collect();
                let fair = self.fair_sccs(&vec![true; n_edges], None);
                Ok(self.lasso_through(&bad, fair))
            }
            _ => Err(unsupported(f, "outside the decidable shapes")),
        }
    }

    /// Fair components of the subgraph induced by `mask`.
    fn fair_sccs(&self, mask: &[bool], visit: Option<Vec<bool>>) -> Vec<FairScc> {
        let all: Vec<usize> = (0..self.graph.len()).collect();
        let mut out = Vec::new();
        let visit = visit.map(Constraint::Visit);
        self.refine(&all, mask.to_vec(), visit.as_ref(), &mut out);
        out
    }

    fn refine(&self, states: &[usize], mask: Vec<bool>, visit: Option<&Constraint>, out: &mut Vec<FairScc>) {
        for comp in sccs(self.graph, states, &mask) {
            let member: HashMap<usize, ()> = comp.iter().map(|&s| (s, ())).collect();
            let internal: Vec<usize> = comp
                .iter()
                .flat_map(|&s| self.graph.out[s].iter().copied())
                .filter(|&e| mask[e] && member.contains_key(&self.graph.edges[e].to))
                .collect();
            if internal.is_empty() {
                continue;
            }
            let taken = |t: &[bool]| internal.iter().copied().find(|&e| t[e]);
            let enabled = |t: &[bool], s: usize| self.graph.out[s].iter().any(|&e| t[e]);
            let mut required = Vec::new();
            let mut verdict = Ok(());
            for c in self.constraints.iter().chain(visit) {
                match c {
                    Constraint::Weak(t) => match taken(t) {
                        Some(e) => required.push(e),
                        None if comp.iter().all(|&s| enabled(t, s)) => {
                            verdict = Err(None);
                            break;
                        }
                        None => {}
                    },
                    Constraint::Strong(t) => match taken(t) {
                        Some(e) => required.push(e),
                        None if comp.iter().any(|&s| enabled(t, s)) => {
                            let keep: Vec<usize> = comp.iter().copied().filter(|&s| !enabled(t, s)).collect();
                            verdict = Err(Some(keep));
                            break;
                        }
                        None => {}
                    },
                    Constraint::Response { quiet, progress } => match taken(progress) {
                        Some(e) => required.push(e),
                        None if internal.iter().any(|&e| !quiet[e]) => {
                            let mut m = mask.clone();
                            for &e in &internal {
                                m[e] = quiet[e];
                            }
                            self.refine(&comp, m, visit, out);
                            verdict = Err(None);
                            break;
                        }
                        None => {}
                    },
                    Constraint::Visit(t) => match taken(t) {
                        Some(e) => required.push(e),
                        None => {
                            verdict = Err(None);
                            break;
                        }
                    },
                }
            }
            match verdict {
                Ok(()) => out.push(FairScc { states: comp, mask: mask.clone(), required }),
                Err(Some(keep)) => self.refine(&keep, mask.clone(), visit, out),
                Err(None) => {}
            }
        }
    }

    /// A lasso whose stem uses `stem_mask` edges from an initial state into
    /// a fair component; `Holds` when none is reachable.
    fn lasso_into(&self, stem_mask: &[bool], fair: Vec<FairScc>) -> LtlOutcome<M> {
        let mut targets = vec![None; self.graph.len()];
        for (k, c) in fair.iter().enumerate() {
            for &s in &c.states {
                targets[s].get_or_insert(k);
            }
        }
        match self.bfs(&self.graph.initial, stem_mask, |s| targets[s].is_some()) {
            None => LtlOutcome::Holds,
            Some((start, stem)) => {
                let end = stem.last().map_or(start, |&e| self.graph.edges[e].to);
                let scc = &fair[targets[end].expect("target reached")];
                LtlOutcome::Violated(self.assemble(start, stem, end, scc))
            }
        }
    }

    /// A lasso that takes some `bad` edge and then enters a fair component.
    fn lasso_through(&self, bad: &[bool], fair: Vec<FairScc>) -> LtlOutcome<M> {
        let all = vec![true; self.graph.edges.len()];
        let mut targets = vec![None; self.graph.len()];
        for (k, c) in fair.iter().enumerate() {
            for &s in &c.states {
                targets[s].get_or_insert(k);
            }
        }
        // edges are tried in BFS order of their sources for a short stem
        let mut order: Vec<usize> = (0..bad.len()).filter(|&e| bad[e]).collect();
        order.sort_by_key(|&e| self.graph.path_to(self.graph.edges[e].from).len());
        for e in order {
            let edge = &self.graph.edges[e];
            if let Some((_, tail)) = self.bfs(&[edge.to], &all, |s| targets[s].is_some()) {
                let mut stem = self.graph.path_to(edge.from);
                let start = stem.first().map_or(edge.from, |&x| self.graph.edges[x].from);
                stem.push(e);
                stem.extend(tail);
                let end = stem.last().map_or(start, |&x| self.graph.edges[x].to);
                let scc = &fair[targets[end].expect("target reached")];
                return LtlOutcome::Violated(self.assemble(start, stem, end, scc));
            }
        }
        LtlOutcome::Holds
    }

    /// Stem followed by a closed walk from `entry` through every state of
    /// the component and every required edge.
    fn assemble(&self, start: usize, stem: Vec<usize>, entry: usize, scc: &FairScc) -> Lasso<M> {
        let member: HashMap<usize, ()> = scc.states.iter().map(|&s| (s, ())).collect();
        let inner: Vec<bool> = (0..self.graph.edges.len())
            .map(|e| {
                let edge = &self.graph.edges[e];
                scc.mask[e] && member.contains_key(&edge.from) && member.contains_key(&edge.to)
            })
            .collect();
        let mut cycle = Vec::new();
        let mut at = entry;
        let mut goals: Vec<usize> = scc.required.clone();
        for &s in &scc.states {
            if let Some(e) = (0..self.graph.edges.len()).find(|&e| inner[e] && self.graph.edges[e].to == s) {
                goals.push(e);
            }
        }
        for g in goals {
            let from = self.graph.edges[g].from;
            let (_, path) = self.bfs(&[at], &inner, |s| s == from).expect("component is strongly connected");
            cycle.extend(path);
            cycle.push(g);
            at = self.graph.edges[g].to;
        }
        if at != entry || cycle.is_empty() {
            let (_, back) = self.bfs(&[at], &inner, |s| s == entry).expect("component is strongly connected");
            cycle.extend(back);
        }
        let k = stem.len();
        let mut cx = self.graph.counterexample(start, &[stem, cycle].concat());
        cx.cycle_start = Some(k);
        cx
    }

    /// Shortest masked path from any source to a goal state.
    fn bfs(&self, sources: &[usize], mask: &[bool], goal: impl Fn(usize) -> bool) -> Option<(usize, Vec<usize>)> {
        let mut via: HashMap<usize, Option<usize>> = HashMap::new();
        let mut queue = VecDeque::new();
        for &s in sources {
            if goal(s) {
                return Some((s, Vec::new()));
            }
            via.entry(s).or_insert(None);
            queue.push_back(s);
        }
        while let Some(p) = queue.pop_front() {
            for &e in &self.graph.out[p] {
                let to = self.graph.edges[e].to;
                if !mask[e] || via.contains_key(&to) {
                    continue;
                }
                via.insert(to, Some(e));
                if goal(to) {
                    let mut path = vec![e];
                    let mut at = p;
                    while let Some(Some(x)) = via.get(&at) {
                        path.push(*x);
                        at = self.graph.edges[*x].from;
                    }
                    path.reverse();
                    return Some((at, path));
                }
                queue.push_back(to);
            }
        }
        None
    }
}

fn negate(t: &[bool]) -> Vec<bool> {
    t.iter().map(|b| !b).collect()
}

/// Strongly connected components of the subgraph on `states` with masked
/// edges (iterative Tarjan).
fn sccs<M: Model>(graph: &StateGraph<M>, states: &[usize], mask: &[bool]) -> Vec<Vec<usize>> {
    let local: HashMap<usize, usize> = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let n = states.len();
    let succ: Vec<Vec<usize>> = states
        .iter()
        .map(|&s| {
            graph.out[s]
                .iter()
                .filter(|&&e| mask[e])
                .filter_map(|&e| local.get(&graph.edges[e].to).copied())
                .collect()
        })
        .collect();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next = 0;
    let mut out = Vec::new();
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut work = vec![(root, 0usize)];
        while let Some(&mut (v, ref mut k)) = work.last_mut() {
            if *k == 0 && index[v] == usize::MAX {
                index[v] = next;
                low[v] = next;
                next += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if *k < succ[v].len() {
                let w = succ[v][*k];
                *k += 1;
                if index[w] == usize::MAX {
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            work.pop();
            if let Some(&(u, _)) = work.last() {
                low[u] = low[u].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    comp.push(states[w]);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                out.push(comp);
            }
        }
    }
    out.sort();
    out
}
