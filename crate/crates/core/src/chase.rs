//! Restricted chase for TGDs and FDs in parallel rounds, with provenance,
//! union-find merging and budgets.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintError, Dependency, Fd, Tgd, UnionFind};
use crate::model::{
    find_homomorphism, ground_atom, Assignment, Fact, FactSource, Instance, Name, Pattern, Value,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChaseError {
    #[error("FD forces distinct constants {0} and {1} to be equal")]
    FdConstantConflict(Value, Value),
}

impl From<ConstraintError> for ChaseError {
    fn from(e: ConstraintError) -> Self {
        match e {
            ConstraintError::FdMergeOnDistinctConstants(a, b) => ChaseError::FdConstantConflict(a, b),
            other => unreachable!("union-find only reports constant clashes: {other}"),
        }
    }
}

/// Limits for a chase run. `usize::MAX` means unlimited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub max_rounds: usize,
    pub max_facts: usize,
    /// Longest chain of null-creating firings behind any fact.
    pub max_depth: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_rounds: 64,
            max_facts: 50_000,
            max_depth: 12,
        }
    }
}

impl Budget {
    pub fn unlimited() -> Self {
        Budget {
            max_rounds: usize::MAX,
            max_facts: usize::MAX,
            max_depth: usize::MAX,
        }
    }

    pub fn with_depth(self, max_depth: usize) -> Self {
        Budget { max_depth, ..self }
    }

    pub fn with_rounds(self, max_rounds: usize) -> Self {
        Budget { max_rounds, ..self }
    }

    pub fn with_facts(self, max_facts: usize) -> Self {
        Budget { max_facts, ..self }
    }
}

pub type FactId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactRecord {
    pub fact: Fact,
    pub round: usize,
    pub depth: usize,
    /// Firing that produced the fact; `None` for initial facts.
    pub firing: Option<usize>,
    /// Fact this one was rewritten from by an FD merge.
    pub rewritten_from: Option<FactId>,
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Firing {
    pub dependency: usize,
    pub round: usize,
    pub premises: Vec<FactId>,
    pub produced: Vec<FactId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Merge {
    pub round: usize,
    pub dependency: usize,
    pub kept: Value,
    pub replaced: Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trigger {
    pub dependency: usize,
    /// Body variable bindings; empty for FD triggers.
    pub bindings: Assignment,
    pub premises: Vec<FactId>,
}

#[derive(Debug, Clone)]
pub struct ChaseState {
    records: Vec<FactRecord>,
    index: BTreeMap<Name, BTreeMap<Vec<Value>, FactId>>,
    occurrences: BTreeMap<Value, BTreeSet<FactId>>,
    uf: UnionFind,
    next_null: u32,
    round: usize,
    firings: Vec<Firing>,
    merges: Vec<Merge>,
    fired: BTreeMap<usize, usize>,
}

impl ChaseState {
    pub fn new(initial: &Instance) -> Self {
        let next_null = initial
            .active_domain()
            .iter()
            .filter_map(|v| match v {
                Value::Null(n) => Some(n + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let mut state = ChaseState {
            records: Vec::new(),
            index: BTreeMap::new(),
            occurrences: BTreeMap::new(),
            uf: UnionFind::new(),
            next_null,
            round: 0,
            firings: Vec::new(),
            merges: Vec::new(),
            fired: BTreeMap::new(),
        };
        for f in initial.iter() {
            state.add(f, 0, None, None);
        }
        state
    }

    fn add(&mut self, fact: Fact, depth: usize, firing: Option<usize>, from: Option<FactId>) -> Option<FactId> {
        let rel = self.index.entry(fact.relation.clone()).or_default();
        if rel.contains_key(&fact.tuple) {
            return None;
        }
        let id = self.records.len();
        rel.insert(fact.tuple.clone(), id);
        for v in &fact.tuple {
            self.occurrences.entry(v.clone()).or_default().insert(id);
        }
        self.records.push(FactRecord {
            fact,
            round: self.round,
            depth,
            firing,
            rewritten_from: from,
            alive: true,
        });
        Some(id)
    }

    fn kill(&mut self, id: FactId) {
        let rec = &mut self.records[id];
        rec.alive = false;
        if let Some(rel) = self.index.get_mut(&rec.fact.relation) {
            rel.remove(&rec.fact.tuple);
        }
        for v in &rec.fact.tuple {
            if let Some(s) = self.occurrences.get_mut(v) {
                s.remove(&id);
            }
        }
    }

    pub fn fact_id(&self, fact: &Fact) -> Option<FactId> {
        self.index.get(&fact.relation)?.get(&fact.tuple).copied()
    }

    pub fn record(&self, id: FactId) -> &FactRecord {
        &self.records[id]
    }

    pub fn records(&self) -> &[FactRecord] {
        &self.records
    }

    /// Follows FD rewrites until reaching a live fact.
    pub fn current_id(&self, mut id: FactId) -> Option<FactId> {
        loop {
            let rec = &self.records[id];
            if rec.alive {
                return Some(id);
            }
            let tuple: Vec<Value> = rec.fact.tuple.iter().map(|v| self.uf.find(v)).collect();
            let next = self.index.get(&rec.fact.relation)?.get(&tuple).copied()?;
            if next == id {
                return None;
            }
            id = next;
        }
    }

    pub fn instance(&self) -> Instance {
        self.records
            .iter()
            .filter(|r| r.alive)
            .map(|r| r.fact.clone())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.index.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn firings(&self) -> &[Firing] {
        &self.firings
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Number of times each dependency (by index) fired.
    pub fn fire_counts(&self) -> &BTreeMap<usize, usize> {
        &self.fired
    }

    pub fn canonical(&self, v: &Value) -> Value {
        self.uf.find(v)
    }

    pub fn union_find(&self) -> &UnionFind {
        &self.uf
    }

    pub fn max_depth(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.alive)
            .map(|r| r.depth)
            .max()
            .unwrap_or(0)
    }

    fn premise_ids(&self, tgd: &Tgd, bindings: &Assignment) -> Vec<FactId> {
        tgd.body
            .iter()
            .map(|a| {
                let f = ground_atom(a, bindings).expect("body fully bound");
                self.fact_id(&f).expect("body image is present")
            })
            .collect()
    }

    fn tgd_active(&self, tgd: &Tgd, bindings: &Assignment) -> bool {
        let exported: Assignment = tgd
            .exported_vars()
            .into_iter()
            .map(|v| {
                let val = bindings[&v].clone();
                (v, val)
            })
            .collect();
        find_homomorphism(&tgd.head, self, &exported).is_none()
    }
}

impl FactSource for ChaseState {
    fn tuples<'a>(&'a self, relation: &str) -> alloc::boxed::Box<dyn Iterator<Item = &'a [Value]> + 'a> {
        alloc::boxed::Box::new(
            self.index
                .get(relation)
                .into_iter()
                .flat_map(|m| m.keys().map(Vec::as_slice)),
        )
    }

    fn contains_tuple(&self, relation: &str, tuple: &[Value]) -> bool {
        self.index.get(relation).is_some_and(|m| m.contains_key(tuple))
    }

    fn relation_size(&self, relation: &str) -> usize {
        self.index.get(relation).map_or(0, BTreeMap::len)
    }
}

fn tgd_triggers(
    state: &ChaseState,
    index: usize,
    tgd: &Tgd,
    delta: Option<&Instance>,
    out: &mut BTreeMap<(usize, Vec<FactId>), Trigger>,
) {
    let pattern = Pattern::new(&tgd.body);
    let mut visit = |bindings: &Assignment| {
        let premises = state.premise_ids(tgd, bindings);
        let key = (index, premises.clone());
        if !out.contains_key(&key) && state.tgd_active(tgd, bindings) {
            out.insert(
                key,
                Trigger {
                    dependency: index,
                    bindings: bindings.clone(),
                    premises,
                },
            );
        }
        ControlFlow::Continue(())
    };
    match delta {
        None => pattern.search(&|_| state, &Assignment::new(), &mut visit),
        Some(d) => {
            for (i, atom) in tgd.body.iter().enumerate() {
                if d.relation_size(&atom.relation) == 0 {
                    continue;
                }
                let source_for = |j: usize| -> &dyn FactSource { if j == i { d } else { state } };
                pattern.search(&source_for, &Assignment::new(), &mut visit);
            }
        }
    }
}

fn fd_triggers(
    state: &ChaseState,
    index: usize,
    fd: &Fd,
    delta: Option<&Instance>,
    out: &mut BTreeMap<(usize, Vec<FactId>), Trigger>,
) {
    let all: Vec<&[Value]> = state.tuples(&fd.relation).collect();
    let news: Vec<&[Value]> = match delta {
        None => all.clone(),
        Some(d) => d.tuples(&fd.relation).collect(),
    };
    for a in news {
        for b in &all {
            if fd.applies(a, b) {
                let ia = state.index[&fd.relation][a];
                let ib = state.index[&fd.relation][*b];
                let premises = vec![ia.min(ib), ia.max(ib)];
                out.entry((index, premises.clone())).or_insert(Trigger {
                    dependency: index,
                    bindings: Assignment::new(),
                    premises,
                });
            }
        }
    }
}

fn collect_triggers(state: &ChaseState, deps: &[Dependency], delta: Option<&Instance>) -> Vec<Trigger> {
    let mut out = BTreeMap::new();
    for (i, d) in deps.iter().enumerate() {
        match d {
            Dependency::Tgd(t) => tgd_triggers(state, i, t, delta, &mut out),
            Dependency::Fd(fd) => fd_triggers(state, i, fd, delta, &mut out),
        }
    }
    out.into_values().collect()
}

/// All active triggers, ordered by dependency index then premise ids.
pub fn find_active_triggers(state: &ChaseState, deps: &[Dependency]) -> Vec<Trigger> {
    collect_triggers(state, deps, None)
}

/// Whether `trigger` is still active in `state`.
pub fn is_active(state: &ChaseState, deps: &[Dependency], trigger: &Trigger) -> bool {
    if trigger.premises.iter().any(|&p| !state.records[p].alive) {
        return false;
    }
    match &deps[trigger.dependency] {
        Dependency::Tgd(t) => state.tgd_active(t, &trigger.bindings),
        Dependency::Fd(fd) => {
            let a = &state.records[trigger.premises[0]].fact.tuple;
            let b = &state.records[trigger.premises[1]].fact.tuple;
            fd.applies(a, b)
        }
    }
}

/// Fires an active trigger. Returns the ids of facts added or rewritten.
pub fn fire(state: &mut ChaseState, deps: &[Dependency], trigger: &Trigger) -> Result<Vec<FactId>, ChaseError> {
    match &deps[trigger.dependency] {
        Dependency::Tgd(t) => Ok(fire_tgd(state, trigger, t)),
        Dependency::Fd(fd) => fire_fd(state, trigger, fd),
    }
}

fn fire_tgd(state: &mut ChaseState, trigger: &Trigger, tgd: &Tgd) -> Vec<FactId> {
    let existentials = tgd.existential_vars();
    let depth = trigger
        .premises
        .iter()
        .map(|&p| state.records[p].depth)
        .max()
        .unwrap_or(0)
        + usize::from(!existentials.is_empty());
    let mut bindings = trigger.bindings.clone();
    for v in existentials {
        bindings.insert(v, Value::Null(state.next_null));
        state.next_null += 1;
    }
    let firing = state.firings.len();
    let mut produced = Vec::new();
    for a in &tgd.head {
        let f = ground_atom(a, &bindings).expect("head fully bound");
        if let Some(id) = state.add(f, depth, Some(firing), None) {
            produced.push(id);
        }
    }
    state.firings.push(Firing {
        dependency: trigger.dependency,
        round: state.round,
        premises: trigger.premises.clone(),
        produced: produced.clone(),
    });
    *state.fired.entry(trigger.dependency).or_default() += 1;
    produced
}

fn fire_fd(state: &mut ChaseState, trigger: &Trigger, fd: &Fd) -> Result<Vec<FactId>, ChaseError> {
    let a = state.records[trigger.premises[0]].fact.tuple[fd.determined].clone();
    let b = state.records[trigger.premises[1]].fact.tuple[fd.determined].clone();
    let Some((kept, replaced)) = state.uf.union(&a, &b)? else {
        return Ok(Vec::new());
    };
    let affected: Vec<FactId> = state
        .occurrences
        .get(&replaced)
        .map(|s| s.iter().copied().collect())
        .unwrap_or_default();
    let mut produced = Vec::new();
    for id in affected {
        let rec = state.records[id].clone();
        state.kill(id);
        let tuple = rec
            .fact
            .tuple
            .iter()
            .map(|v| if *v == replaced { kept.clone() } else { v.clone() })
            .collect();
        let fact = Fact {
            relation: rec.fact.relation.clone(),
            tuple,
        };
        if let Some(new) = state.add(fact, rec.depth, rec.firing, Some(id)) {
            produced.push(new);
        }
    }
    state.occurrences.remove(&replaced);
    state.merges.push(Merge {
        round: state.round,
        dependency: trigger.dependency,
        kept,
        replaced,
    });
    state.firings.push(Firing {
        dependency: trigger.dependency,
        round: state.round,
        premises: trigger.premises.clone(),
        produced: produced.clone(),
    });
    *state.fired.entry(trigger.dependency).or_default() += 1;
    Ok(produced)
}

/// Dependencies whose triggers fire after all others within a round.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoundOrder {
    pub late: BTreeSet<usize>,
}

impl RoundOrder {
    pub fn standard() -> Self {
        Self::default()
    }

    pub fn late(late: impl IntoIterator<Item = usize>) -> Self {
        RoundOrder {
            late: late.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Limit {
    Rounds,
    Facts,
    Depth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Saturated,
    BudgetExhausted(Limit),
    /// The caller's stop condition held.
    Stopped,
}

#[derive(Debug, Clone)]
pub struct ChaseRun {
    pub state: ChaseState,
    pub outcome: Outcome,
}

pub fn chase_to_fixpoint(
    initial: &Instance,
    deps: &[Dependency],
    budget: Budget,
    policy: &RoundOrder,
) -> Result<ChaseRun, ChaseError> {
    chase_until(initial, deps, budget, policy, &mut |_| false)
}

/// Chases in parallel rounds, checking `stop` before every round.
pub fn chase_until(
    initial: &Instance,
    deps: &[Dependency],
    budget: Budget,
    policy: &RoundOrder,
    stop: &mut dyn FnMut(&ChaseState) -> bool,
) -> Result<ChaseRun, ChaseError> {
    let mut state = ChaseState::new(initial);
    let mut delta: Option<Instance> = None;
    let mut blocked: Vec<Trigger> = Vec::new();
    loop {
        if stop(&state) {
            return Ok(ChaseRun {
                state,
                outcome: Outcome::Stopped,
            });
        }
        let mut triggers = collect_triggers(&state, deps, delta.as_ref());
        if triggers.is_empty() {
            let outcome = if blocked.iter().any(|t| is_active(&state, deps, t)) {
                Outcome::BudgetExhausted(Limit::Depth)
            } else {
                Outcome::Saturated
            };
            return Ok(ChaseRun { state, outcome });
        }
        if state.round >= budget.max_rounds {
            return Ok(ChaseRun {
                state,
                outcome: Outcome::BudgetExhausted(Limit::Rounds),
            });
        }
        state.round += 1;
        triggers.sort_by_key(|t| policy.late.contains(&t.dependency));
        let mut new_ids: BTreeSet<FactId> = BTreeSet::new();
        for t in &triggers {
            if !is_active(&state, deps, t) {
                continue;
            }
            if let Dependency::Tgd(tgd) = &deps[t.dependency] {
                let depth = t.premises.iter().map(|&p| state.records[p].depth).max().unwrap_or(0);
                if !tgd.is_full() && depth >= budget.max_depth {
                    blocked.push(t.clone());
                    continue;
                }
            }
            new_ids.extend(fire(&mut state, deps, t)?);
            if state.len() >= budget.max_facts {
                return Ok(ChaseRun {
                    state,
                    outcome: Outcome::BudgetExhausted(Limit::Facts),
                });
            }
        }
        delta = Some(
            new_ids
                .into_iter()
                .filter(|&id| state.records[id].alive)
                .map(|id| state.records[id].fact.clone())
                .collect(),
        );
    }
}

/// Serializable summary of a chase run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub rounds: usize,
    pub outcome: Option<Outcome>,
    pub facts: Vec<TraceFact>,
    pub firings: Vec<Firing>,
    pub merges: Vec<Merge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceFact {
    pub id: FactId,
    pub fact: String,
    pub round: usize,
    pub depth: usize,
    pub alive: bool,
}

pub fn trace(state: &ChaseState, outcome: Option<Outcome>) -> Trace {
    Trace {
        rounds: state.round,
        outcome,
        facts: state
            .records
            .iter()
            .enumerate()
            .map(|(id, r)| TraceFact {
                id,
                fact: format!("{}", r.fact),
                round: r.round,
                depth: r.depth,
                alive: r.alive,
            })
            .collect(),
        firings: state.firings.clone(),
        merges: state.merges.clone(),
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering: one node per live fact, edges from premises.
pub fn to_dot(state: &ChaseState) -> String {
    let mut out = String::from("digraph chase {\n  node [shape=box];\n");
    for (id, r) in state.records.iter().enumerate().filter(|(_, r)| r.alive) {
        out.push_str(&format!("  f{id} [label=\"{}\"];\n", dot_escape(&format!("{}", r.fact))));
    }
    let mut edges = BTreeSet::new();
    for (id, r) in state.records.iter().enumerate().filter(|(_, r)| r.alive) {
        if let Some(firing) = r.firing {
            for &p in &state.firings[firing].premises {
                if let Some(src) = state.current_id(p) {
                    if src != id {
                        edges.insert((src, id, state.firings[firing].dependency));
                    }
                }
            }
        }
    }
    for (src, dst, dep) in edges {
        out.push_str(&format!("  f{src} -> f{dst} [label=\"{dep}\"];\n"));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Atom;

    fn c(s: &str) -> Value {
        Value::constant(s)
    }

    #[test]
    fn id_trigger_and_restricted_check() {
        let id: Dependency = Tgd::new(vec![Atom::vars("R", &["x"])], vec![Atom::vars("S", &["x", "y"])]).into();
        let inst: Instance = [Fact::new("R", vec![c("a")])].into_iter().collect();
        let state = ChaseState::new(&inst);
        assert_eq!(find_active_triggers(&state, &[id.clone()]).len(), 1);
        let inst: Instance = [Fact::new("R", vec![c("a")]), Fact::new("S", vec![c("a"), c("b")])]
            .into_iter()
            .collect();
        assert!(find_active_triggers(&ChaseState::new(&inst), &[id]).is_empty());
    }

    #[test]
    fn fd_merge_rewrites_nulls() {
        let fd: Dependency = Fd::new("R", &[0], 1).into();
        let inst: Instance = [
            Fact::new("R", vec![c("a"), Value::Null(0)]),
            Fact::new("R", vec![c("a"), c("b")]),
            Fact::new("S", vec![Value::Null(0)]),
        ]
        .into_iter()
        .collect();
        let run = chase_to_fixpoint(&inst, &[fd], Budget::default(), &RoundOrder::standard()).unwrap();
        assert_eq!(run.outcome, Outcome::Saturated);
        assert!(run.state.instance().contains(&Fact::new("S", vec![c("b")])));
        assert_eq!(run.state.len(), 2);
    }

    #[test]
    fn recursion_hits_depth() {
        let id: Dependency = Tgd::new(vec![Atom::vars("R", &["x"])], vec![Atom::vars("R", &["y"])]).into();
        let id2: Dependency = Tgd::new(vec![Atom::vars("R", &["x"])], vec![Atom::vars("E", &["x", "y"]), Atom::vars("R", &["y"])]).into();
        let inst: Instance = [Fact::new("R", vec![c("a")])].into_iter().collect();
        // R(x) -> ∃y R(y) is satisfied by R(a) itself.
        let run = chase_to_fixpoint(&inst, &[id], Budget::default().with_depth(3), &RoundOrder::standard()).unwrap();
        assert_eq!(run.outcome, Outcome::Saturated);
        let run = chase_to_fixpoint(&inst, &[id2], Budget::default().with_depth(3), &RoundOrder::standard()).unwrap();
        assert_eq!(run.outcome, Outcome::BudgetExhausted(Limit::Depth));
    }
}
