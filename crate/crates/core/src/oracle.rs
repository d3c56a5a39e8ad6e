//! Reference procedures for testing: a naive breadth-first chase, random
//! schema generators, and a differential harness against [`crate::decide`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chase::{Budget, Limit};
use crate::constraints::{ConstraintClass, Dependency, Fd, Tgd};
use crate::decide::{decide_with, Answer, DecideOptions, Route};
use crate::linearize::{
    build_i0_lin, build_sigma_lin, saturate_truncated_axioms, small_subsets, AccTriple, LinearizeError,
};
use crate::model::{find_homomorphism, name, Assignment, Atom, ConjunctiveQuery, Instance, Name, Signature, Term, Value};
use crate::reduction::{build_amondet_containment, ContainmentProblem, ReductionError};
use crate::schema::{choice_simplify, elim_ub, AccessMethod, Bound, Schema};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleAnswer {
    /// The target matched after `round` rounds.
    Holds { round: usize, assignment: Option<Assignment> },
    /// The chase saturated after `rounds` rounds without a match.
    FailsWithin { rounds: usize },
    Unknown { limit: Limit },
}

impl OracleAnswer {
    pub fn is_definite(&self) -> bool {
        !matches!(self, OracleAnswer::Unknown { .. })
    }
}

type Tuple = Vec<Value>;

fn resolve(subst: &BTreeMap<Value, Value>, v: &Value) -> Value {
    let mut cur = v.clone();
    while let Some(n) = subst.get(&cur) {
        cur = n.clone();
    }
    cur
}

/// Plain backtracking matcher, atom by atom in the given order.
fn matches(
    atoms: &[Atom],
    facts: &BTreeMap<Name, BTreeSet<Tuple>>,
    binding: &mut Assignment,
    out: &mut dyn FnMut(&Assignment) -> bool,
) -> bool {
    let Some((first, rest)) = atoms.split_first() else {
        return out(binding);
    };
    let Some(tuples) = facts.get(&first.relation) else {
        return false;
    };
    for t in tuples {
        let mut added: Vec<Name> = Vec::new();
        let mut ok = true;
        for (term, val) in first.terms.iter().zip(t) {
            match term {
                Term::Const(c) => {
                    if *val != Value::Const(c.clone()) {
                        ok = false;
                        break;
                    }
                }
                Term::Var(x) => match binding.get(x) {
                    Some(b) if b != val => {
                        ok = false;
                        break;
                    }
                    Some(_) => {}
                    None => {
                        binding.insert(x.clone(), val.clone());
                        added.push(x.clone());
                    }
                },
            }
        }
        let stop = ok && matches(rest, facts, binding, out);
        for x in added {
            binding.remove(&x);
        }
        if stop {
            return true;
        }
    }
    false
}

fn all_matches(atoms: &[Atom], facts: &BTreeMap<Name, BTreeSet<Tuple>>) -> Vec<Assignment> {
    let mut v = Vec::new();
    matches(atoms, facts, &mut Assignment::new(), &mut |a| {
        v.push(a.clone());
        false
    });
    v
}

fn has_match(atoms: &[Atom], facts: &BTreeMap<Name, BTreeSet<Tuple>>, fixed: &Assignment) -> Option<Assignment> {
    let mut found = None;
    matches(atoms, facts, &mut fixed.clone(), &mut |a| {
        found = Some(a.clone());
        true
    });
    found
}

struct Naive {
    facts: BTreeMap<Name, BTreeSet<Tuple>>,
    depth: BTreeMap<Value, usize>,
    subst: BTreeMap<Value, Value>,
    next_null: u32,
    size: usize,
}

impl Naive {
    fn add(&mut self, r: &Name, t: Tuple) -> bool {
        let added = self.facts.entry(r.clone()).or_default().insert(t);
        self.size += usize::from(added);
        added
    }

    fn merge(&mut self, a: &Value, b: &Value) -> Result<(), (Value, Value)> {
        if a.is_const() && b.is_const() {
            return Err((a.clone(), b.clone()));
        }
        let (keep, drop) = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        self.subst.insert(drop.clone(), keep.clone());
        let old = core::mem::take(&mut self.facts);
        self.size = 0;
        for (r, ts) in old {
            for t in ts {
                let t = t.into_iter().map(|v| if v == drop { keep.clone() } else { v }).collect();
                self.add(&r, t);
            }
        }
        Ok(())
    }

    /// Applies FDs until none is violated.
    fn fd_fixpoint(&mut self, fds: &[Fd]) -> Result<bool, (Value, Value)> {
        let mut changed = false;
        'outer: loop {
            for fd in fds {
                let Some(ts) = self.facts.get(&fd.relation) else {
                    continue;
                };
                let ts: Vec<&Tuple> = ts.iter().collect();
                for (i, a) in ts.iter().enumerate() {
                    for b in &ts[i + 1..] {
                        if fd.applies(a, b) {
                            let (x, y) = (a[fd.determined].clone(), b[fd.determined].clone());
                            self.merge(&x, &y)?;
                            changed = true;
                            continue 'outer;
                        }
                    }
                }
            }
            return Ok(changed);
        }
    }
}

enum NaiveEnd {
    Stopped(usize),
    Saturated(usize),
    Out(Limit),
    Conflict,
}

/// Breadth-first restricted chase written independently of [`crate::chase`].
/// `stop` is consulted before every round and at saturation.
fn naive_chase(
    initial: &Instance,
    deps: &[Dependency],
    budget: Budget,
    stop: &mut dyn FnMut(&Naive) -> bool,
) -> (Naive, NaiveEnd) {
    let tgds: Vec<&Tgd> = deps.iter().filter_map(Dependency::as_tgd).collect();
    let fds: Vec<Fd> = deps.iter().filter_map(Dependency::as_fd).cloned().collect();
    let mut st = Naive {
        facts: BTreeMap::new(),
        depth: BTreeMap::new(),
        subst: BTreeMap::new(),
        next_null: 0,
        size: 0,
    };
    for f in initial.iter() {
        for v in &f.tuple {
            if let Value::Null(n) = v {
                st.next_null = st.next_null.max(n + 1);
            }
        }
        st.add(&f.relation, f.tuple);
    }
    if st.fd_fixpoint(&fds).is_err() {
        return (st, NaiveEnd::Conflict);
    }
    let mut round = 0;
    loop {
        if stop(&st) {
            return (st, NaiveEnd::Stopped(round));
        }
        if round >= budget.max_rounds {
            return (st, NaiveEnd::Out(Limit::Rounds));
        }
        round += 1;
        let mut changed = false;
        let mut blocked = false;
        for t in &tgds {
            let exported = t.exported_vars();
            let existential = t.existential_vars();
            for h in all_matches(&t.body, &st.facts) {
                let mut binding: Assignment = h.into_iter().filter(|(k, _)| exported.contains(k)).collect();
                if has_match(&t.head, &st.facts, &binding).is_some() {
                    continue;
                }
                if !existential.is_empty() {
                    let d = 1 + binding
                        .values()
                        .map(|v| st.depth.get(v).copied().unwrap_or(0))
                        .max()
                        .unwrap_or(0);
                    if d > budget.max_depth {
                        blocked = true;
                        continue;
                    }
                    for x in &existential {
                        let n = Value::Null(st.next_null);
                        st.next_null += 1;
                        st.depth.insert(n.clone(), d);
                        binding.insert(x.clone(), n);
                    }
                }
                for atom in &t.head {
                    let tuple = atom
                        .terms
                        .iter()
                        .map(|term| match term {
                            Term::Var(x) => binding[x].clone(),
                            Term::Const(c) => Value::Const(c.clone()),
                        })
                        .collect();
                    changed |= st.add(&atom.relation, tuple);
                }
                if st.size > budget.max_facts {
                    return (st, NaiveEnd::Out(Limit::Facts));
                }
            }
        }
        match st.fd_fixpoint(&fds) {
            Err(_) => return (st, NaiveEnd::Conflict),
            Ok(c) => changed |= c,
        }
        if !changed {
            if stop(&st) {
                return (st, NaiveEnd::Stopped(round));
            }
            let end = if blocked { NaiveEnd::Out(Limit::Depth) } else { NaiveEnd::Saturated(round) };
            return (st, end);
        }
    }
}

/// Chases the problem naively and reports whether the target matched. A
/// conflict between constants makes containment hold vacuously.
pub fn naive_containment(p: &ContainmentProblem, budget: Budget) -> OracleAnswer {
    let mut found = None;
    let (_, end) = naive_chase(&p.initial, &p.dependencies(), budget, &mut |st| {
        let fixed: Assignment = p
            .target_fixed
            .iter()
            .map(|(k, v)| (k.clone(), resolve(&st.subst, v)))
            .collect();
        found = has_match(&p.target.atoms, &st.facts, &fixed);
        found.is_some()
    });
    match end {
        NaiveEnd::Stopped(round) => OracleAnswer::Holds {
            round,
            assignment: found,
        },
        NaiveEnd::Conflict => OracleAnswer::Holds {
            round: 0,
            assignment: None,
        },
        NaiveEnd::Saturated(rounds) => OracleAnswer::FailsWithin { rounds },
        NaiveEnd::Out(limit) => OracleAnswer::Unknown { limit },
    }
}

/// Decides answerability through the choice simplification and the naive
/// chase. Only meaningful for classes where choice simplification is exact.
pub fn oracle_answerability(
    q: &ConjunctiveQuery,
    s: &Schema,
    budget: Budget,
) -> Result<OracleAnswer, ReductionError> {
    let s1 = choice_simplify(&elim_ub(s));
    let p = build_amondet_containment(q, &s1)?;
    Ok(naive_containment(&p, budget))
}

/// Positions of `relation` that become accessible when the positions in
/// `accessible` are, found by chasing the TGDs and the unbounded access
/// methods from a single fact. The flag is false when the budget ran out, in
/// which case the set may be too small.
pub fn accessible_positions_by_chase(
    s: &Schema,
    relation: &str,
    accessible: &BTreeSet<usize>,
    budget: Budget,
) -> Option<(BTreeSet<usize>, bool)> {
    let arity = s.signature.arity(relation)?;
    let acc = s.signature.fresh_name("accessible");
    let mut deps: Vec<Dependency> = s.tgds().into_iter().map(Dependency::from).collect();
    for m in s.methods.iter().filter(|m| !m.is_bounded()) {
        let a = s.signature.arity(&m.relation)?;
        let vars: Vec<String> = (0..a).map(|i| format!("v{i}")).collect();
        let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
        let mut body = vec![Atom::vars(&m.relation, &refs)];
        body.extend(m.inputs.iter().map(|&i| Atom::vars(&acc, &[refs[i]])));
        let head = refs.iter().map(|v| Atom::vars(&acc, &[v])).collect();
        deps.push(Tgd::new(body, head).into());
    }
    let consts: Vec<Value> = (0..arity).map(|i| Value::constant(&format!("c{i}"))).collect();
    let mut initial = Instance::new();
    initial.insert_tuple(&name(relation), consts.clone());
    for &i in accessible {
        initial.insert_tuple(&acc, vec![consts[i].clone()]);
    }
    let (st, end) = naive_chase(&initial, &deps, budget, &mut |_| false);
    let reached = st.facts.get(&acc).cloned().unwrap_or_default();
    let found = consts
        .iter()
        .enumerate()
        .filter(|(_, c)| reached.contains(&vec![(*c).clone()]))
        .map(|(i, _)| i)
        .collect();
    Some((found, matches!(end, NaiveEnd::Saturated(_))))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaturationCheck {
    /// Relation and position-set pairs examined.
    pub candidates: usize,
    pub emitted: usize,
    /// Emitted triples the chase does not derive.
    pub unsound: Vec<AccTriple>,
    /// Triples the chase derives that saturation missed.
    pub missing: Vec<AccTriple>,
    /// Pairs where the chase ran out of budget before confirming every
    /// emitted triple.
    pub inconclusive: usize,
}

/// Compares truncated-accessibility saturation with the chase on every
/// position set of size at most `w`. Bounds are ignored: only unbounded
/// methods contribute accessibility axioms.
pub fn check_saturation(s: &Schema, w: usize, budget: Budget) -> Result<SaturationCheck, LinearizeError> {
    let ids = s.tgds();
    let transfers = saturate_truncated_axioms(&ids, &s.methods, &s.signature, w)?;
    let mut out = SaturationCheck::default();
    for (r, arity) in s.signature.relations() {
        for p in small_subsets(arity, w) {
            out.candidates += 1;
            let given: BTreeSet<usize> = p.iter().copied().collect();
            let emitted = transfers.get(r, &p).cloned().unwrap_or_default();
            out.emitted += emitted.difference(&given).count();
            let Some((found, complete)) = accessible_positions_by_chase(s, r, &given, budget) else {
                continue;
            };
            let triple = |target| AccTriple {
                relation: r.clone(),
                positions: p.clone(),
                target,
            };
            out.missing.extend(found.difference(&emitted).map(|&t| triple(t)));
            let extra: Vec<usize> = emitted.difference(&found).copied().collect();
            if complete {
                out.unsound.extend(extra.into_iter().map(triple));
            } else if !extra.is_empty() {
                out.inconclusive += 1;
            }
        }
    }
    Ok(out)
}

fn primed_facts(facts: &BTreeMap<Name, BTreeSet<Tuple>>, primed: &BTreeSet<Name>) -> Instance {
    let mut out = Instance::new();
    for (r, ts) in facts.iter().filter(|(r, _)| primed.contains(*r)) {
        for t in ts {
            out.insert_tuple(r, t.clone());
        }
    }
    out
}

/// Whether `a` maps into `b` fixing constants, treating nulls as variables.
pub fn maps_into(a: &Instance, b: &Instance) -> bool {
    let atoms: Vec<Atom> = a
        .iter()
        .map(|f| {
            Atom::new(
                &f.relation,
                f.tuple
                    .iter()
                    .map(|v| match v {
                        Value::Const(c) => Term::Const(c.clone()),
                        other => Term::var(&format!("{other}")),
                    })
                    .collect(),
            )
        })
        .collect();
    find_homomorphism(&atoms, b, &Assignment::new()).is_some()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearizationCheck {
    pub original_primed: usize,
    pub linearized_primed: usize,
    pub original_saturated: bool,
    pub linearized_saturated: bool,
    /// Primed facts of the original chase map into the linearized ones.
    pub forward: bool,
    /// And back.
    pub backward: bool,
}

impl LinearizationCheck {
    pub fn faithful(&self) -> bool {
        self.forward && self.backward
    }
}

/// Chases `seed` (plus `accessible` values) with the IDs and accessibility
/// axioms, and its linearization with the linearized IDs, both up to null
/// depth `depth`, and compares the primed facts up to homomorphism.
pub fn check_linearization(
    s: &Schema,
    seed: &Instance,
    accessible: &BTreeSet<Value>,
    w: usize,
    depth: usize,
) -> Result<LinearizationCheck, LinearizeError> {
    let ids = s.tgds();
    let acc = s.signature.fresh_name("accessible");
    let mut primed = BTreeMap::new();
    for (r, _) in s.signature.relations() {
        primed.insert(r.clone(), name(&format!("{r}'")));
    }
    let primed_names: BTreeSet<Name> = primed.values().cloned().collect();

    let mut deps: Vec<Dependency> = ids.iter().cloned().map(Dependency::from).collect();
    for m in &s.methods {
        let a = s.signature.arity(&m.relation).unwrap_or(0);
        let vars: Vec<String> = (0..a).map(|i| format!("v{i}")).collect();
        let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
        let mut body = vec![Atom::vars(&m.relation, &refs)];
        body.extend(m.inputs.iter().map(|&i| Atom::vars(&acc, &[refs[i]])));
        if m.is_bounded() {
            let head: Vec<String> = (0..a)
                .map(|i| if m.inputs.contains(&i) { vars[i].clone() } else { format!("z{i}") })
                .collect();
            let head: Vec<&str> = head.iter().map(String::as_str).collect();
            deps.push(Tgd::new(body, vec![Atom::vars(&primed[&m.relation], &head)]).into());
        } else {
            let mut head: Vec<Atom> = refs.iter().map(|v| Atom::vars(&acc, &[v])).collect();
            head.push(Atom::vars(&primed[&m.relation], &refs));
            deps.push(Tgd::new(body, head).into());
        }
    }
    let mut initial = seed.clone();
    for v in accessible {
        initial.insert_tuple(&acc, vec![v.clone()]);
    }
    let budget = Budget::unlimited().with_depth(depth);
    let (orig, orig_end) = naive_chase(&initial, &deps, budget, &mut |_| false);

    let transfers = saturate_truncated_axioms(&ids, &s.methods, &s.signature, w)?;
    let rules = build_sigma_lin(&ids, &s.methods, &transfers, &s.signature, &primed, w);
    let lin_deps: Vec<Dependency> = rules.into_iter().map(|r| r.tgd.into()).collect();
    let i0_lin = build_i0_lin(&initial, &acc, &transfers, &s.methods, &primed, w);
    let (lin, lin_end) = naive_chase(&i0_lin, &lin_deps, budget, &mut |_| false);

    let a = primed_facts(&orig.facts, &primed_names);
    let b = primed_facts(&lin.facts, &primed_names);
    Ok(LinearizationCheck {
        original_primed: a.len(),
        linearized_primed: b.len(),
        original_saturated: matches!(orig_end, NaiveEnd::Saturated(_)),
        linearized_saturated: matches!(lin_end, NaiveEnd::Saturated(_)),
        forward: maps_into(&a, &b),
        backward: maps_into(&b, &a),
    })
}

/// Random seed instance over the schema's relations with values drawn from
/// `values` constants, plus a random set of accessible values.
pub fn random_seed(rng: &mut ChaCha8Rng, s: &Schema, max_facts: usize, values: usize) -> (Instance, BTreeSet<Value>) {
    let rels: Vec<(Name, usize)> = s.signature.relations().map(|(r, a)| (r.clone(), a)).collect();
    let pool: Vec<Value> = (0..values.max(1)).map(|i| Value::constant(&format!("d{i}"))).collect();
    let mut inst = Instance::new();
    for _ in 0..rng.gen_range(1..=max_facts.max(1)) {
        let (r, a) = rels.choose(rng).expect("nonempty signature");
        let t = (0..*a).map(|_| pool.choose(rng).expect("nonempty").clone()).collect();
        inst.insert_tuple(r, t);
    }
    let acc = pool.iter().filter(|_| rng.gen_bool(0.3)).cloned().collect();
    (inst, acc)
}

// ---------------------------------------------------------------------------
// Random instances

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    FdOnly,
    /// Inclusion dependencies of width at most `max_width`.
    IdOnly { max_width: usize },
    UidFd,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub family: Family,
    pub relations: usize,
    pub max_arity: usize,
    pub max_constraints: usize,
    pub max_methods: usize,
    pub max_query_atoms: usize,
    pub bounds: Vec<u32>,
}

impl GeneratorConfig {
    pub fn new(family: Family) -> Self {
        GeneratorConfig {
            family,
            relations: 3,
            max_arity: 3,
            max_constraints: 3,
            max_methods: 3,
            max_query_atoms: 3,
            bounds: vec![1, 2, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Case {
    pub schema: Schema,
    pub query: ConjunctiveQuery,
}

fn random_fd(rng: &mut ChaCha8Rng, rel: &str, arity: usize) -> Option<Fd> {
    if arity < 2 {
        return None;
    }
    let mut pos: Vec<usize> = (0..arity).collect();
    pos.shuffle(rng);
    let determined = pos[0];
    let k = rng.gen_range(1..arity);
    let mut det: Vec<usize> = pos[1..=k].to_vec();
    det.sort_unstable();
    Some(Fd::new(rel, &det, determined))
}

fn random_id(rng: &mut ChaCha8Rng, sig: &Signature, rels: &[(Name, usize)], max_width: usize) -> Tgd {
    let (b, ba) = rels.choose(rng).expect("nonempty signature").clone();
    let (h, ha) = rels.choose(rng).expect("nonempty signature").clone();
    let _ = sig;
    let body: Vec<String> = (0..ba).map(|i| format!("x{i}")).collect();
    let k = rng.gen_range(0..=max_width.min(ba).min(ha));
    let mut from: Vec<usize> = (0..ba).collect();
    from.shuffle(rng);
    let mut to: Vec<usize> = (0..ha).collect();
    to.shuffle(rng);
    let mut head: Vec<String> = (0..ha).map(|i| format!("y{i}")).collect();
    for i in 0..k {
        head[to[i]] = body[from[i]].clone();
    }
    let br: Vec<&str> = body.iter().map(String::as_str).collect();
    let hr: Vec<&str> = head.iter().map(String::as_str).collect();
    Tgd::new(vec![Atom::vars(&b, &br)], vec![Atom::vars(&h, &hr)])
}

pub fn generate_case(rng: &mut ChaCha8Rng, cfg: &GeneratorConfig) -> Case {
    let mut sig = Signature::new();
    let mut rels = Vec::new();
    for i in 0..cfg.relations.max(1) {
        let r = format!("R{i}");
        let a = rng.gen_range(1..=cfg.max_arity.max(1));
        sig.add(&r, a).expect("fresh relation names");
        rels.push((name(&r), a));
    }
    let mut s = Schema::new(sig.clone());
    let n_constraints = rng.gen_range(0..=cfg.max_constraints);
    let fd_count = |rng: &mut ChaCha8Rng| rng.gen_range(1..=cfg.max_constraints.max(1));
    match cfg.family {
        Family::FdOnly => {
            for _ in 0..n_constraints {
                let (r, a) = rels.choose(rng).expect("nonempty").clone();
                if let Some(fd) = random_fd(rng, &r, a) {
                    s.constraints.push(fd.into());
                }
            }
        }
        Family::IdOnly { max_width } => {
            for _ in 0..n_constraints {
                s.constraints.push(random_id(rng, &sig, &rels, max_width).into());
            }
        }
        Family::UidFd => {
            for _ in 0..n_constraints {
                s.constraints.push(random_id(rng, &sig, &rels, 1).into());
            }
            for _ in 0..fd_count(rng) {
                let (r, a) = rels.choose(rng).expect("nonempty").clone();
                if let Some(fd) = random_fd(rng, &r, a) {
                    s.constraints.push(fd.into());
                }
            }
        }
    }
    s.constraints.sort();
    s.constraints.dedup();
    for i in 0..rng.gen_range(1..=cfg.max_methods.max(1)) {
        let (r, a) = rels.choose(rng).expect("nonempty").clone();
        let inputs: Vec<usize> = (0..a).filter(|_| rng.gen_bool(0.4)).collect();
        let bound = if !cfg.bounds.is_empty() && rng.gen_bool(0.5) {
            Some(Bound::Result(*cfg.bounds.choose(rng).expect("nonempty")))
        } else {
            None
        };
        s.methods.push(AccessMethod::new(&format!("m{i}"), &r, &inputs, bound));
    }
    let pool = ["x", "y", "z"];
    let mut atoms = Vec::new();
    for _ in 0..rng.gen_range(1..=cfg.max_query_atoms.max(1)) {
        let (r, a) = rels.choose(rng).expect("nonempty").clone();
        let terms = (0..a)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    Term::constant(if rng.gen_bool(0.5) { "1" } else { "2" })
                } else {
                    Term::var(pool.choose(rng).expect("nonempty"))
                }
            })
            .collect();
        atoms.push(Atom::new(&r, terms));
    }
    let vars: Vec<Name> = crate::model::atoms_variables(&atoms).into_iter().collect();
    let free: Vec<&str> = vars.iter().filter(|_| rng.gen_bool(0.3)).map(|v| &**v).collect();
    Case {
        schema: s,
        query: ConjunctiveQuery::new("Q", &free, atoms),
    }
}

pub fn generate_cases(seed: u64, count: usize, cfg: &GeneratorConfig) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| generate_case(&mut rng, cfg)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseReport {
    pub index: usize,
    pub class: ConstraintClass,
    pub route: Route,
    pub answer: Answer,
    pub exact: bool,
    pub oracle: OracleAnswer,
    /// `None` unless both sides gave a definite answer.
    pub agrees: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifferentialReport {
    pub cases: Vec<CaseReport>,
    pub compared: usize,
    pub disagreements: usize,
    pub errors: Vec<String>,
}

pub fn differential_run(cases: &[Case], decide: &DecideOptions, oracle_budget: Budget) -> DifferentialReport {
    let mut report = DifferentialReport::default();
    for (index, c) in cases.iter().enumerate() {
        let verdict = match decide_with(&c.query, &c.schema, decide) {
            Ok(v) => v,
            Err(e) => {
                report.errors.push(format!("case {index}: {e}"));
                continue;
            }
        };
        let oracle = match oracle_answerability(&c.query, &c.schema, oracle_budget) {
            Ok(o) => o,
            Err(e) => {
                report.errors.push(format!("case {index}: oracle: {e}"));
                continue;
            }
        };
        let definite = verdict.answer != Answer::Unknown && verdict.exact;
        let agrees = match (&oracle, definite) {
            (OracleAnswer::Unknown { .. }, _) | (_, false) => None,
            (OracleAnswer::Holds { .. }, true) => Some(verdict.answer == Answer::Answerable),
            (OracleAnswer::FailsWithin { .. }, true) => Some(verdict.answer == Answer::NotAnswerable),
        };
        if let Some(a) = agrees {
            report.compared += 1;
            report.disagreements += usize::from(!a);
        }
        report.cases.push(CaseReport {
            index,
            class: verdict.class,
            route: verdict.route,
            answer: verdict.answer,
            exact: verdict.exact,
            oracle,
            agrees,
        });
    }
    report
}
