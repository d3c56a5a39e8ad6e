//! Exact containment for inclusion dependencies of bounded width.
//!
//! Accessibility is compiled away: truncated accessibility axioms are
//! saturated into a set of triples `(R, P, j)`, every relation `R` gets a
//! copy `R_P` per small set `P` of accessible positions, and the result is a
//! set of IDs over the subscripted signature. Containment under IDs is then
//! decided on the chase tree: the subtree below a fact depends only on its
//! relation and the equality pattern of its tuple, so partial matches of the
//! target query can be computed per pattern as a least fixpoint.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::chase::Budget;
use crate::constraints::{Dependency, Tgd};
use crate::model::{
    name, Assignment, Atom, Fact, Instance, Name, Signature, Term, Value,
};
use crate::reduction::{AxiomKind, ContainmentProblem, Origin};
use crate::schema::{position_atom, position_var, AccessMethod, Bound};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinearizeError {
    #[error("dependency `{0}` is not an inclusion dependency")]
    NotId(Tgd),
    #[error("inclusion dependency `{0}` has width above {1}")]
    WidthExceeded(Tgd, usize),
    #[error("dependencies are not of semi-width {0}")]
    NotSemiWidthBounded(usize),
    #[error("{0} exceeded the budget")]
    BudgetExceeded(&'static str),
    #[error("unsupported axiom in problem: {0}")]
    UnsupportedAxiom(String),
    #[error("target query has more than 64 atoms or variables")]
    QueryTooLarge,
}

/// The truncated accessibility axiom `acc on P ∧ R(x) → acc(x_j)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AccTriple {
    pub relation: Name,
    /// Sorted, 0-based.
    pub positions: Vec<usize>,
    pub target: usize,
}

impl fmt::Display for AccTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {{", self.relation)?;
        for (i, p) in self.positions.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", p + 1)?;
        }
        write!(f, "}} -> {}", self.target + 1)
    }
}

/// All subsets of `0..n` with at most `w` elements, by size then lexically.
pub fn small_subsets(n: usize, w: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for size in 1..=w.min(n) {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            out.push(combo.clone());
            let mut i = size;
            while i > 0 && combo[i - 1] == n - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            combo[i - 1] += 1;
            for j in i..size {
                combo[j] = combo[j - 1] + 1;
            }
        }
    }
    out
}

/// For each relation and small position set `P`, the positions `P` transfers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transfers {
    map: BTreeMap<Name, BTreeMap<Vec<usize>, BTreeSet<usize>>>,
}

impl Transfers {
    pub fn get(&self, relation: &str, positions: &[usize]) -> Option<&BTreeSet<usize>> {
        self.map.get(relation)?.get(positions)
    }

    pub fn triples(&self) -> BTreeSet<AccTriple> {
        let mut out = BTreeSet::new();
        for (r, m) in &self.map {
            for (p, ts) in m {
                for &t in ts {
                    out.insert(AccTriple {
                        relation: r.clone(),
                        positions: p.clone(),
                        target: t,
                    });
                }
            }
        }
        out
    }

    pub fn from_triples(triples: &BTreeSet<AccTriple>) -> Self {
        let mut t = Transfers::default();
        for tr in triples {
            t.map
                .entry(tr.relation.clone())
                .or_default()
                .entry(tr.positions.clone())
                .or_default()
                .insert(tr.target);
        }
        t
    }

    /// Positions made accessible in a fact whose accessible positions are
    /// `accessible`, using only axioms of breadth at most `w`.
    pub fn close(&self, relation: &str, accessible: &BTreeSet<usize>, w: usize) -> BTreeSet<usize> {
        let mut out = accessible.clone();
        let Some(m) = self.map.get(relation) else {
            return out;
        };
        loop {
            let before = out.len();
            for (p, ts) in m {
                if p.len() <= w && p.iter().all(|i| out.contains(i)) {
                    out.extend(ts.iter().copied());
                }
            }
            if out.len() == before {
                return out;
            }
        }
    }
}

fn check_ids(ids: &[Tgd], w: usize) -> Result<(), LinearizeError> {
    for t in ids {
        if !t.is_id() {
            return Err(LinearizeError::NotId(t.clone()));
        }
        if t.width() > w {
            return Err(LinearizeError::WidthExceeded(t.clone(), w));
        }
    }
    Ok(())
}

/// Maps each exported body position of an ID to its head position.
fn exported_positions(id: &Tgd) -> BTreeMap<usize, usize> {
    let body = &id.body[0];
    let head = &id.head[0];
    let mut out = BTreeMap::new();
    for (bp, t) in body.terms.iter().enumerate() {
        if let Term::Var(v) = t {
            if let Some(hp) = head.position_of(v) {
                out.insert(bp, hp);
            }
        }
    }
    out
}

/// Least fixpoint of the truncated accessibility axioms of breadth at most
/// `w` derivable from the IDs and the unbounded methods.
pub fn saturate_truncated_axioms(
    ids: &[Tgd],
    methods: &[AccessMethod],
    sig: &Signature,
    w: usize,
) -> Result<Transfers, LinearizeError> {
    check_ids(ids, w)?;
    let mut t = Transfers::default();
    for (r, arity) in sig.relations() {
        let m = t.map.entry(r.clone()).or_default();
        for p in small_subsets(arity, w) {
            let set = p.iter().copied().collect();
            m.insert(p, set);
        }
    }
    let exports: Vec<(&Tgd, BTreeMap<usize, usize>)> =
        ids.iter().map(|id| (id, exported_positions(id))).collect();
    loop {
        let mut changed = false;
        // (Access)
        for m in methods.iter().filter(|m| !m.is_bounded()) {
            let arity = sig.arity(&m.relation).unwrap_or(0);
            if let Some(rel) = t.map.get_mut(&m.relation) {
                for ts in rel.values_mut() {
                    if m.inputs.is_subset(ts) && ts.len() < arity {
                        ts.extend(0..arity);
                        changed = true;
                    }
                }
            }
        }
        // (Transitivity)
        let snapshot = t.map.clone();
        for (r, rel) in t.map.iter_mut() {
            let known = &snapshot[r];
            for ts in rel.values_mut() {
                for (q, qs) in known {
                    if q.iter().all(|i| ts.contains(i)) && !qs.is_subset(ts) {
                        ts.extend(qs.iter().copied());
                        changed = true;
                    }
                }
            }
        }
        // (ID)
        for (id, exp) in &exports {
            let body_rel = &id.body[0].relation;
            let head_rel = &id.head[0].relation;
            let back: BTreeMap<usize, usize> = exp.iter().map(|(&b, &h)| (h, b)).collect();
            let Some(head_map) = t.map.get(head_rel).cloned() else {
                continue;
            };
            for (ps, ts) in &head_map {
                if !ps.iter().all(|p| back.contains_key(p)) {
                    continue;
                }
                let mut pb: Vec<usize> = ps.iter().map(|p| back[p]).collect();
                pb.sort_unstable();
                let targets: Vec<usize> = ts.iter().filter_map(|k| back.get(k).copied()).collect();
                let entry = t
                    .map
                    .get_mut(body_rel)
                    .and_then(|m| m.get_mut(&pb))
                    .expect("all small subsets initialised");
                for j in targets {
                    changed |= entry.insert(j);
                }
            }
        }
        if !changed {
            return Ok(t);
        }
    }
}

pub fn lin_name(relation: &str, positions: &[usize]) -> Name {
    let mut s = format!("{relation}__acc_");
    for (i, p) in positions.iter().enumerate() {
        if i > 0 {
            s.push('_');
        }
        s.push_str(&format!("{}", p + 1));
    }
    name(&s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LinRuleKind {
    Lift,
    Transfer,
    ResultBoundedTransfer,
    Primed,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinRule {
    pub tgd: Tgd,
    pub kind: LinRuleKind,
}

/// Builds the linearized IDs: Transfer, Lift and result-bounded transfer.
pub fn build_sigma_lin(
    ids: &[Tgd],
    methods: &[AccessMethod],
    transfers: &Transfers,
    sig: &Signature,
    primed: &BTreeMap<Name, Name>,
    w: usize,
) -> Vec<LinRule> {
    let mut out: Vec<LinRule> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut push = |tgd: Tgd, kind: LinRuleKind, out: &mut Vec<LinRule>| {
        if seen.insert(tgd.clone()) {
            out.push(LinRule { tgd, kind });
        }
    };
    for (r, arity) in sig.relations() {
        let Some(r_primed) = primed.get(r) else {
            continue;
        };
        for p in small_subsets(arity, w) {
            let p_prime = transfers.get(r, &p).cloned().unwrap_or_else(|| p.iter().copied().collect());
            let lin = position_atom(&lin_name(r, &p), arity);
            for m in methods.iter().filter(|m| &m.relation == r && m.inputs.is_subset(&p_prime)) {
                if m.is_bounded() {
                    let head = Atom {
                        relation: r_primed.clone(),
                        terms: (0..arity)
                            .map(|i| {
                                if m.inputs.contains(&i) {
                                    position_var(i)
                                } else {
                                    Term::Var(name(&format!("z{}", i + 1)))
                                }
                            })
                            .collect(),
                    };
                    push(Tgd::new(vec![lin.clone()], vec![head]), LinRuleKind::ResultBoundedTransfer, &mut out);
                } else {
                    let head = position_atom(r_primed, arity);
                    push(Tgd::new(vec![lin.clone()], vec![head]), LinRuleKind::Transfer, &mut out);
                }
            }
            for id in ids.iter().filter(|id| &id.body[0].relation == r) {
                let exp = exported_positions(id);
                let mut head_p: Vec<usize> = exp
                    .iter()
                    .filter(|(b, _)| p_prime.contains(b))
                    .map(|(_, &h)| h)
                    .collect();
                head_p.sort_unstable();
                let head = &id.head[0];
                let tgd = Tgd::new(
                    vec![Atom {
                        relation: lin_name(r, &p),
                        terms: id.body[0].terms.clone(),
                    }],
                    vec![Atom {
                        relation: lin_name(&head.relation, &head_p),
                        terms: head.terms.clone(),
                    }],
                );
                push(tgd, LinRuleKind::Lift, &mut out);
            }
        }
    }
    out
}

/// Builds the linearized initial instance from the facts of `i0` over base
/// relations and the values marked accessible in it.
pub fn build_i0_lin(
    i0: &Instance,
    accessible: &str,
    transfers: &Transfers,
    methods: &[AccessMethod],
    primed: &BTreeMap<Name, Name>,
    w: usize,
) -> Instance {
    let mut acc: BTreeSet<Value> = i0.relation(accessible).map(|t| t[0].clone()).collect();
    let base: Vec<Fact> = i0.iter().filter(|f| primed.contains_key(&f.relation)).collect();
    let positions = |f: &Fact, acc: &BTreeSet<Value>| -> BTreeSet<usize> {
        (0..f.tuple.len()).filter(|&i| acc.contains(&f.tuple[i])).collect()
    };
    loop {
        let before = acc.len();
        for f in &base {
            let mut p = transfers.close(&f.relation, &positions(f, &acc), w);
            if methods
                .iter()
                .any(|m| !m.is_bounded() && m.relation == f.relation && m.inputs.is_subset(&p))
            {
                p.extend(0..f.tuple.len());
            }
            acc.extend(p.iter().map(|&i| f.tuple[i].clone()));
        }
        if acc.len() == before {
            break;
        }
    }
    let mut next_null = i0
        .active_domain()
        .iter()
        .filter_map(|v| match v {
            Value::Null(n) => Some(n + 1),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    let mut out = Instance::new();
    for f in &base {
        let p = positions(f, &acc);
        for sub in small_subsets(f.tuple.len(), w) {
            if sub.iter().all(|i| p.contains(i)) {
                out.insert(Fact {
                    relation: lin_name(&f.relation, &sub),
                    tuple: f.tuple.clone(),
                });
            }
        }
        let r_primed = &primed[&f.relation];
        for m in methods.iter().filter(|m| m.relation == f.relation && m.inputs.is_subset(&p)) {
            let tuple = (0..f.tuple.len())
                .map(|i| {
                    if !m.is_bounded() || m.inputs.contains(&i) {
                        f.tuple[i].clone()
                    } else {
                        next_null += 1;
                        Value::Null(next_null - 1)
                    }
                })
                .collect();
            out.insert(Fact {
                relation: r_primed.clone(),
                tuple,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemiWidthDecomposition {
    /// Indices of the rules of width at most `w`.
    pub sigma1: Vec<usize>,
    /// Indices of the rules whose position graph is acyclic.
    pub sigma2: Vec<usize>,
    /// Edges of the position graph of `sigma2`, positions 0-based.
    pub position_graph: Vec<((Name, usize), (Name, usize))>,
}

fn position_edges(tgd: &Tgd) -> Vec<((Name, usize), (Name, usize))> {
    let mut out = Vec::new();
    for b in &tgd.body {
        for (bp, t) in b.terms.iter().enumerate() {
            let Term::Var(v) = t else { continue };
            for h in &tgd.head {
                for (hp, ht) in h.terms.iter().enumerate() {
                    if ht == t && h.position_of(v).is_some() {
                        out.push(((b.relation.clone(), bp), (h.relation.clone(), hp)));
                    }
                }
            }
        }
    }
    out
}

fn has_cycle(edges: &[((Name, usize), (Name, usize))]) -> bool {
    let mut adj: BTreeMap<&(Name, usize), Vec<&(Name, usize)>> = BTreeMap::new();
    for (a, b) in edges {
        adj.entry(a).or_default().push(b);
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state: BTreeMap<&(Name, usize), u8> = BTreeMap::new();
    for start in adj.keys() {
        if state.get(start).copied().unwrap_or(0) != 0 {
            continue;
        }
        let mut stack = vec![(*start, 0usize)];
        state.insert(start, 1);
        while let Some((node, i)) = stack.pop() {
            let next = adj.get(node).and_then(|v| v.get(i)).copied();
            match next {
                Some(n) => {
                    stack.push((node, i + 1));
                    match state.get(n).copied().unwrap_or(0) {
                        1 => return true,
                        0 => {
                            state.insert(n, 1);
                            stack.push((n, 0));
                        }
                        _ => {}
                    }
                }
                None => {
                    state.insert(node, 2);
                }
            }
        }
    }
    false
}

/// Splits IDs into a part of width at most `w` and a part whose position
/// graph is acyclic.
pub fn semiwidth_decompose(rules: &[LinRule], w: usize) -> Result<SemiWidthDecomposition, LinearizeError> {
    let mut sigma1 = Vec::new();
    let mut sigma2 = Vec::new();
    for (i, r) in rules.iter().enumerate() {
        if !r.tgd.is_id() {
            return Err(LinearizeError::NotId(r.tgd.clone()));
        }
        match r.kind {
            LinRuleKind::Lift | LinRuleKind::Primed => {
                if r.tgd.width() > w {
                    return Err(LinearizeError::NotSemiWidthBounded(w));
                }
                sigma1.push(i);
            }
            LinRuleKind::Transfer | LinRuleKind::ResultBoundedTransfer => sigma2.push(i),
            LinRuleKind::Other if r.tgd.width() <= w => sigma1.push(i),
            LinRuleKind::Other => sigma2.push(i),
        }
    }
    let graph = |ids: &[usize]| -> Vec<_> {
        ids.iter().flat_map(|&i| position_edges(&rules[i].tgd)).collect()
    };
    let mut edges = graph(&sigma2);
    if has_cycle(&edges) {
        let (narrow, wide): (Vec<usize>, Vec<usize>) =
            sigma2.iter().partition(|&&i| rules[i].tgd.width() <= w);
        sigma1.extend(narrow);
        sigma1.sort_unstable();
        sigma2 = wide;
        edges = graph(&sigma2);
        if has_cycle(&edges) {
            return Err(LinearizeError::NotSemiWidthBounded(w));
        }
    }
    Ok(SemiWidthDecomposition {
        sigma1,
        sigma2,
        position_graph: edges,
    })
}

/// A containment problem over the linearized signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearizedProblem {
    pub width: usize,
    pub triples: BTreeSet<AccTriple>,
    pub rules: Vec<LinRule>,
    pub initial: Instance,
    pub target: Vec<Atom>,
    pub fixed: Assignment,
    pub signature: Signature,
}

/// Access methods as seen by a normalized problem's Transfer and
/// result-bounded transfer axioms.
pub fn problem_methods(p: &ContainmentProblem) -> Result<Vec<AccessMethod>, LinearizeError> {
    let mut out: Vec<AccessMethod> = Vec::new();
    for g in &p.gamma {
        let Origin::Access { kind, method } = &g.origin else {
            continue;
        };
        let bound = match kind {
            AxiomKind::Transfer => None,
            AxiomKind::ResultBoundedFactTransfer => Some(Bound::LowerOnly(1)),
            AxiomKind::TruncatedAccessibility => continue,
            other => return Err(LinearizeError::UnsupportedAxiom(format!("{other:?}"))),
        };
        let Dependency::Tgd(t) = &g.dependency else {
            unreachable!("accessibility axioms are TGDs")
        };
        let rel = t
            .body
            .iter()
            .find(|a| a.relation != p.names.accessible)
            .expect("relation atom");
        let inputs = t
            .body
            .iter()
            .filter(|a| a.relation == p.names.accessible)
            .filter_map(|a| a.terms[0].as_var())
            .filter_map(|v| rel.position_of(v))
            .collect();
        let m = AccessMethod {
            name: method.clone(),
            relation: rel.relation.clone(),
            inputs,
            bound,
        };
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

/// Linearizes a normalized problem: Σ must be IDs of width at most `w`,
/// and the accessibility axioms Transfer, truncated accessibility and
/// result-bounded transfer.
pub fn linearize_problem(p: &ContainmentProblem, w: usize) -> Result<LinearizedProblem, LinearizeError> {
    let mut ids = Vec::new();
    let mut primed_rules = Vec::new();
    for g in &p.gamma {
        match (&g.origin, &g.dependency) {
            (Origin::Sigma, Dependency::Tgd(t)) => ids.push(t.clone()),
            (Origin::SigmaPrimed, Dependency::Tgd(t)) => primed_rules.push(t.clone()),
            (Origin::Access { .. }, _) => {}
            (_, d) => return Err(LinearizeError::UnsupportedAxiom(format!("{d}"))),
        }
    }
    check_ids(&ids, w)?;
    let methods = problem_methods(p)?;
    let mut base = Signature::new();
    for (r, a) in p.signature.relations() {
        if p.names.primed.contains_key(r) {
            base.add(r, a).expect("distinct names");
        }
    }
    let transfers = saturate_truncated_axioms(&ids, &methods, &base, w)?;
    let mut rules: Vec<LinRule> = primed_rules
        .into_iter()
        .map(|tgd| LinRule {
            tgd,
            kind: LinRuleKind::Primed,
        })
        .collect();
    rules.extend(build_sigma_lin(&ids, &methods, &transfers, &base, &p.names.primed, w));
    let initial = build_i0_lin(&p.initial, &p.names.accessible, &transfers, &methods, &p.names.primed, w);
    let mut signature = Signature::new();
    for (r, a) in base.relations() {
        for sub in small_subsets(a, w) {
            signature.add(&lin_name(r, &sub), a).expect("distinct names");
        }
        signature.add(&p.names.primed[r], a).expect("distinct names");
    }
    Ok(LinearizedProblem {
        width: w,
        triples: transfers.triples(),
        rules,
        initial,
        target: p.target.atoms.clone(),
        fixed: p.target_fixed.clone(),
        signature,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Entry {
    Val(u32),
    Local(u8),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct NodeType {
    relation: u32,
    entries: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct PartialMatch {
    mask: u64,
    anchors: Vec<(u8, Entry)>,
}

#[derive(Debug, Clone, Copy)]
enum Derivation {
    Direct(usize),
    Lift { edge: usize, child_pm: usize },
    Union(usize, usize),
}

struct Edge {
    parent: usize,
    child: usize,
    rule: usize,
    /// For each child local, the parent entry it copies, or `None` if fresh.
    lift: Vec<Option<Entry>>,
    lifted: usize,
}

struct TypeData {
    ty: NodeType,
    sat: Vec<PartialMatch>,
    index: BTreeMap<PartialMatch, usize>,
    derivs: Vec<Derivation>,
    up: Vec<usize>,
    down: Vec<usize>,
}

#[derive(Clone, Copy)]
enum QTerm {
    Var(u8),
    Val(u32),
}

struct CompiledRule {
    head_rel: u32,
    /// For each head position: `Ok(body position)` or `Err(existential id)`.
    head: Vec<Result<usize, usize>>,
}

/// Outcome of the exact containment procedure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemiwidthOutcome {
    pub holds: bool,
    /// Chase facts supporting the match, in creation order.
    pub witness_facts: Vec<Fact>,
    pub assignment: Assignment,
    /// Depth bound from the configuration-counting argument, for reference.
    pub depth_bound: u128,
    pub types_explored: usize,
    pub partial_matches: usize,
}

struct Solver {
    rel_names: Vec<Name>,
    values: Vec<Value>,
    rules: Vec<CompiledRule>,
    rules_by_rel: BTreeMap<u32, Vec<usize>>,
    qatoms: Vec<(u32, Vec<QTerm>)>,
    qvars: Vec<Name>,
    atom_vars: Vec<u64>,
    full: u64,
    types: Vec<TypeData>,
    type_index: BTreeMap<NodeType, usize>,
    edges: Vec<Edge>,
    pm_total: usize,
    max_items: usize,
}

impl Solver {
    fn rel_id(names: &mut Vec<Name>, map: &mut BTreeMap<Name, u32>, r: &Name) -> u32 {
        *map.entry(r.clone()).or_insert_with(|| {
            names.push(r.clone());
            (names.len() - 1) as u32
        })
    }

    fn new(lp: &LinearizedProblem, max_items: usize) -> Result<Self, LinearizeError> {
        let mut rel_names = Vec::new();
        let mut rel_map = BTreeMap::new();
        let mut values: Vec<Value> = lp.initial.active_domain().into_iter().collect();
        let mut value_map: BTreeMap<Value, u32> =
            values.iter().enumerate().map(|(i, v)| (v.clone(), i as u32)).collect();
        let mut value_id = |v: Value, values: &mut Vec<Value>| -> u32 {
            *value_map.entry(v.clone()).or_insert_with(|| {
                values.push(v);
                (values.len() - 1) as u32
            })
        };
        let mut rules = Vec::new();
        let mut rules_by_rel: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for r in &lp.rules {
            if !r.tgd.is_id() {
                return Err(LinearizeError::NotId(r.tgd.clone()));
            }
            let body = &r.tgd.body[0];
            let head = &r.tgd.head[0];
            let body_rel = Self::rel_id(&mut rel_names, &mut rel_map, &body.relation);
            let head_rel = Self::rel_id(&mut rel_names, &mut rel_map, &head.relation);
            let mut ex: BTreeMap<Name, usize> = BTreeMap::new();
            let head_spec = head
                .terms
                .iter()
                .map(|t| {
                    let v = t.as_var().expect("IDs have no constants");
                    match body.position_of(v) {
                        Some(bp) => Ok(bp),
                        None => {
                            let n = ex.len();
                            Err(*ex.entry(v.clone()).or_insert(n))
                        }
                    }
                })
                .collect();
            rules_by_rel.entry(body_rel).or_default().push(rules.len());
            rules.push(CompiledRule {
                head_rel,
                head: head_spec,
            });
        }
        let mut qvars: Vec<Name> = Vec::new();
        let mut qatoms = Vec::new();
        let mut atom_vars = Vec::new();
        if lp.target.len() > 64 {
            return Err(LinearizeError::QueryTooLarge);
        }
        for a in &lp.target {
            let rel = Self::rel_id(&mut rel_names, &mut rel_map, &a.relation);
            let mut mask = 0u64;
            let terms = a
                .terms
                .iter()
                .map(|t| match t {
                    Term::Const(c) => Ok(QTerm::Val(value_id(Value::Const(c.clone()), &mut values))),
                    Term::Var(v) => match lp.fixed.get(v) {
                        Some(val) => Ok(QTerm::Val(value_id(val.clone(), &mut values))),
                        None => {
                            let i = match qvars.iter().position(|q| q == v) {
                                Some(i) => i,
                                None => {
                                    qvars.push(v.clone());
                                    qvars.len() - 1
                                }
                            };
                            if i >= 64 {
                                return Err(LinearizeError::QueryTooLarge);
                            }
                            mask |= 1 << i;
                            Ok(QTerm::Var(i as u8))
                        }
                    },
                })
                .collect::<Result<Vec<_>, _>>()?;
            qatoms.push((rel, terms));
            atom_vars.push(mask);
        }
        for f in lp.initial.iter() {
            Self::rel_id(&mut rel_names, &mut rel_map, &f.relation);
        }
        let full = if lp.target.len() == 64 {
            u64::MAX
        } else {
            (1u64 << lp.target.len()) - 1
        };
        let solver = Solver {
            rel_names,
            values,
            rules,
            rules_by_rel,
            qatoms,
            qvars,
            atom_vars,
            full,
            types: Vec::new(),
            type_index: BTreeMap::new(),
            edges: Vec::new(),
            pm_total: 0,
            max_items,
        };
        Ok(solver)
    }

    fn vars_of(&self, mask: u64) -> u64 {
        let mut out = 0;
        for (i, v) in self.atom_vars.iter().enumerate() {
            if mask & (1 << i) != 0 {
                out |= v;
            }
        }
        out
    }

    fn boundary(&self, mask: u64) -> u64 {
        self.vars_of(mask) & self.vars_of(self.full & !mask)
    }

    fn intern_type(&mut self, ty: NodeType) -> Result<(usize, bool), LinearizeError> {
        if let Some(&i) = self.type_index.get(&ty) {
            return Ok((i, false));
        }
        if self.types.len() >= self.max_items {
            return Err(LinearizeError::BudgetExceeded("chase tree pattern count"));
        }
        let i = self.types.len();
        self.type_index.insert(ty.clone(), i);
        self.types.push(TypeData {
            ty,
            sat: Vec::new(),
            index: BTreeMap::new(),
            derivs: Vec::new(),
            up: Vec::new(),
            down: Vec::new(),
        });
        Ok((i, true))
    }

    /// Child pattern of `parent` under `rule`, with the lift map back.
    fn child_type(&self, parent: &NodeType, rule: &CompiledRule) -> (NodeType, Vec<Option<Entry>>) {
        let mut renumber: BTreeMap<Result<Entry, usize>, u8> = BTreeMap::new();
        let mut lift: Vec<Option<Entry>> = Vec::new();
        let entries = rule
            .head
            .iter()
            .map(|spec| {
                let source = match spec {
                    Ok(bp) => match parent.entries[*bp] {
                        Entry::Val(v) => return Entry::Val(v),
                        local => Ok(local),
                    },
                    Err(e) => Err(*e),
                };
                let next = renumber.len() as u8;
                let id = *renumber.entry(source).or_insert_with(|| {
                    lift.push(source.ok());
                    next
                });
                Entry::Local(id)
            })
            .collect();
        (
            NodeType {
                relation: rule.head_rel,
                entries,
            },
            lift,
        )
    }

    fn explore(&mut self, roots: &[NodeType]) -> Result<Vec<usize>, LinearizeError> {
        let mut root_ids = Vec::new();
        let mut queue = Vec::new();
        for r in roots {
            let (id, fresh) = self.intern_type(r.clone())?;
            root_ids.push(id);
            if fresh {
                queue.push(id);
            }
        }
        while let Some(t) = queue.pop() {
            let ty = self.types[t].ty.clone();
            let rules = self.rules_by_rel.get(&ty.relation).cloned().unwrap_or_default();
            for r in rules {
                let (child, lift) = self.child_type(&ty, &self.rules[r]);
                let (c, fresh) = self.intern_type(child)?;
                if fresh {
                    queue.push(c);
                }
                let e = self.edges.len();
                self.edges.push(Edge {
                    parent: t,
                    child: c,
                    rule: r,
                    lift,
                    lifted: 0,
                });
                self.types[c].up.push(e);
                self.types[t].down.push(e);
            }
        }
        Ok(root_ids)
    }

    fn direct_matches(&self, ty: &NodeType) -> Vec<(PartialMatch, usize)> {
        let mut out = Vec::new();
        for (i, (rel, terms)) in self.qatoms.iter().enumerate() {
            if *rel != ty.relation || terms.len() != ty.entries.len() {
                continue;
            }
            let mut bind: BTreeMap<u8, Entry> = BTreeMap::new();
            let ok = terms.iter().zip(&ty.entries).all(|(t, e)| match t {
                QTerm::Val(v) => *e == Entry::Val(*v),
                QTerm::Var(x) => *bind.entry(*x).or_insert(*e) == *e,
            });
            if ok {
                out.push((self.make_pm(1 << i, bind), i));
            }
        }
        out
    }

    fn make_pm(&self, mask: u64, bind: BTreeMap<u8, Entry>) -> PartialMatch {
        let b = self.boundary(mask);
        PartialMatch {
            mask,
            anchors: bind.into_iter().filter(|(v, _)| b & (1 << v) != 0).collect(),
        }
    }

    fn combine(&self, a: &PartialMatch, b: &PartialMatch) -> Option<PartialMatch> {
        if a.mask & b.mask != 0 {
            return None;
        }
        let mut bind: BTreeMap<u8, Entry> = a.anchors.iter().copied().collect();
        for (v, e) in &b.anchors {
            if *bind.entry(*v).or_insert(*e) != *e {
                return None;
            }
        }
        Some(self.make_pm(a.mask | b.mask, bind))
    }

    /// Adds a partial match to a type and closes the set under union.
    fn add_pm(&mut self, t: usize, pm: PartialMatch, d: Derivation) -> Result<bool, LinearizeError> {
        if self.types[t].index.contains_key(&pm) {
            return Ok(false);
        }
        let mut queue = vec![(pm, d)];
        while let Some((pm, d)) = queue.pop() {
            if self.types[t].index.contains_key(&pm) {
                continue;
            }
            self.pm_total += 1;
            if self.pm_total > self.max_items {
                return Err(LinearizeError::BudgetExceeded("partial match count"));
            }
            let idx = self.types[t].sat.len();
            let td = &mut self.types[t];
            td.index.insert(pm.clone(), idx);
            td.sat.push(pm.clone());
            td.derivs.push(d);
            for j in 0..idx {
                let other = &self.types[t].sat[j];
                if let Some(u) = self.combine(&pm, other) {
                    if !self.types[t].index.contains_key(&u) {
                        queue.push((u, Derivation::Union(idx, j)));
                    }
                }
            }
        }
        Ok(true)
    }

    fn lift_pm(&self, edge: &Edge, pm: &PartialMatch) -> Option<PartialMatch> {
        let mut anchors = Vec::with_capacity(pm.anchors.len());
        for (v, e) in &pm.anchors {
            let up = match e {
                Entry::Val(_) => *e,
                Entry::Local(l) => edge.lift[*l as usize]?,
            };
            anchors.push((*v, up));
        }
        Some(PartialMatch {
            mask: pm.mask,
            anchors,
        })
    }

    fn saturate(&mut self) -> Result<(), LinearizeError> {
        for t in 0..self.types.len() {
            let ty = self.types[t].ty.clone();
            for (pm, atom) in self.direct_matches(&ty) {
                self.add_pm(t, pm, Derivation::Direct(atom))?;
            }
        }
        let mut work: Vec<usize> = (0..self.types.len()).collect();
        let mut queued = vec![true; self.types.len()];
        while let Some(c) = work.pop() {
            queued[c] = false;
            let ups = self.types[c].up.clone();
            for e in ups {
                let start = self.edges[e].lifted;
                let end = self.types[c].sat.len();
                self.edges[e].lifted = end;
                let parent = self.edges[e].parent;
                let mut changed = false;
                for k in start..end {
                    let lifted = self.lift_pm(&self.edges[e], &self.types[c].sat[k]);
                    if let Some(pm) = lifted {
                        changed |= self.add_pm(parent, pm, Derivation::Lift { edge: e, child_pm: k })?;
                    }
                }
                if changed && !queued[parent] {
                    queued[parent] = true;
                    work.push(parent);
                }
            }
        }
        Ok(())
    }
}

/// Decides whether the target query maps into the chase of the initial
/// instance under the linearized rules. Rules must admit a semi-width
/// decomposition for width `lp.width`.
pub fn decide_containment_semiwidth(
    lp: &LinearizedProblem,
    budget: Budget,
) -> Result<SemiwidthOutcome, LinearizeError> {
    semiwidth_decompose(&lp.rules, lp.width)?;
    let mut solver = Solver::new(lp, budget.max_facts)?;
    let mut roots = Vec::new();
    let mut root_facts = Vec::new();
    let value_index: BTreeMap<Value, u32> = solver
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| (v.clone(), i as u32))
        .collect();
    let rel_index: BTreeMap<Name, u32> = solver
        .rel_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i as u32))
        .collect();
    for f in lp.initial.iter() {
        roots.push(NodeType {
            relation: rel_index[&f.relation],
            entries: f.tuple.iter().map(|v| Entry::Val(value_index[v])).collect(),
        });
        root_facts.push(f);
    }
    let root_ids = solver.explore(&roots)?;
    solver.saturate()?;

    // Combine matches rooted at different initial facts.
    let mut pool: Vec<PartialMatch> = Vec::new();
    let mut pool_index: BTreeMap<PartialMatch, usize> = BTreeMap::new();
    let mut pool_deriv: Vec<Result<(usize, usize), (usize, usize)>> = Vec::new();
    let mut queue: Vec<(PartialMatch, Result<(usize, usize), (usize, usize)>)> = Vec::new();
    for (fi, &t) in root_ids.iter().enumerate() {
        for (k, pm) in solver.types[t].sat.iter().enumerate() {
            queue.push((pm.clone(), Ok((fi, k))));
        }
    }
    let mut found = solver.full == 0;
    while let Some((pm, d)) = queue.pop() {
        if pool_index.contains_key(&pm) {
            continue;
        }
        if pool.len() > budget.max_facts {
            return Err(LinearizeError::BudgetExceeded("partial match count"));
        }
        let idx = pool.len();
        pool_index.insert(pm.clone(), idx);
        pool.push(pm.clone());
        pool_deriv.push(d);
        if pm.mask == solver.full {
            found = true;
            break;
        }
        for j in 0..idx {
            if let Some(u) = solver.combine(&pm, &pool[j]) {
                if !pool_index.contains_key(&u) {
                    queue.push((u, Err((idx, j))));
                }
            }
        }
    }

    let depth_bound = {
        let k = lp.target.len() as u128;
        let sigma = lp.rules.len() as u128;
        let m = lp.signature.max_arity() as u128;
        let pow = m.saturating_pow(lp.width as u32 + 1);
        2u128.saturating_mul(k).saturating_mul(sigma).saturating_mul(pow)
    };
    let mut outcome = SemiwidthOutcome {
        holds: found,
        witness_facts: Vec::new(),
        assignment: Assignment::new(),
        depth_bound,
        types_explored: solver.types.len(),
        partial_matches: solver.pm_total + pool.len(),
    };
    if found && solver.full != 0 {
        let mut w = Witness::new(&solver, lp);
        let top = pool.len() - 1;
        w.root(&root_ids, &root_facts, &pool_deriv, top);
        outcome.witness_facts = w.facts;
        outcome.assignment = w.assignment;
    }
    Ok(outcome)
}

struct Witness<'s> {
    solver: &'s Solver,
    next_null: u32,
    facts: Vec<Fact>,
    seen: BTreeSet<Fact>,
    children: BTreeMap<(Vec<Value>, u32, usize), Vec<Value>>,
    assignment: Assignment,
}

impl<'s> Witness<'s> {
    fn new(solver: &'s Solver, lp: &LinearizedProblem) -> Self {
        let next_null = lp
            .initial
            .active_domain()
            .iter()
            .filter_map(|v| match v {
                Value::Null(n) => Some(n + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let mut assignment = lp.fixed.clone();
        assignment.retain(|v, _| lp.target.iter().any(|a| a.position_of(v).is_some()));
        Witness {
            solver,
            next_null,
            facts: Vec::new(),
            seen: BTreeSet::new(),
            children: BTreeMap::new(),
            assignment,
        }
    }

    fn record(&mut self, f: Fact) {
        if self.seen.insert(f.clone()) {
            self.facts.push(f);
        }
    }

    fn root(
        &mut self,
        root_ids: &[usize],
        root_facts: &[Fact],
        derivs: &[Result<(usize, usize), (usize, usize)>],
        idx: usize,
    ) {
        match derivs[idx] {
            Ok((fi, k)) => {
                let f = root_facts[fi].clone();
                self.record(f.clone());
                self.node(root_ids[fi], &f.tuple, k);
            }
            Err((a, b)) => {
                self.root(root_ids, root_facts, derivs, a);
                self.root(root_ids, root_facts, derivs, b);
            }
        }
    }

    fn node(&mut self, t: usize, tuple: &[Value], k: usize) {
        let s = self.solver;
        match s.types[t].derivs[k] {
            Derivation::Direct(atom) => {
                for (term, v) in s.qatoms[atom].1.iter().zip(tuple) {
                    if let QTerm::Var(x) = term {
                        self.assignment.insert(s.qvars[*x as usize].clone(), v.clone());
                    }
                }
            }
            Derivation::Union(a, b) => {
                self.node(t, tuple, a);
                self.node(t, tuple, b);
            }
            Derivation::Lift { edge, child_pm } => {
                let e = &s.edges[edge];
                let rule = &s.rules[e.rule];
                let key = (tuple.to_vec(), s.types[t].ty.relation, e.rule);
                let child = match self.children.get(&key) {
                    Some(c) => c.clone(),
                    None => {
                        let mut fresh: BTreeMap<usize, Value> = BTreeMap::new();
                        let mut next = self.next_null;
                        let c: Vec<Value> = rule
                            .head
                            .iter()
                            .map(|spec| match spec {
                                Ok(bp) => tuple[*bp].clone(),
                                Err(x) => fresh
                                    .entry(*x)
                                    .or_insert_with(|| {
                                        next += 1;
                                        Value::Null(next - 1)
                                    })
                                    .clone(),
                            })
                            .collect();
                        self.next_null = next;
                        self.children.insert(key, c.clone());
                        self.record(Fact {
                            relation: s.rel_names[rule.head_rel as usize].clone(),
                            tuple: c.clone(),
                        });
                        c
                    }
                };
                self.node(e.child, &child, child_pm);
            }
        }
    }
}

/// Renders a linearized rule set in the schema DSL.
pub fn display_rules(rules: &[LinRule]) -> String {
    let mut s = String::new();
    for r in rules {
        s.push_str(&format!("id {}\n", r.tgd));
    }
    s
}
