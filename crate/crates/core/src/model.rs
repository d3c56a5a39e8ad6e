//! Relational data model: signatures, values, facts, instances, conjunctive
//! queries and homomorphism search.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::ops::ControlFlow;

use serde::{Deserialize, Serialize};

pub type Name = Arc<str>;

pub fn name(s: &str) -> Name {
    Arc::from(s)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("unknown relation `{0}`")]
    UnknownRelation(Name),
    #[error("relation `{relation}` has arity {expected}, got {found} terms")]
    ArityMismatch {
        relation: Name,
        expected: usize,
        found: usize,
    },
    #[error("relation `{0}` declared twice")]
    DuplicateRelation(Name),
    #[error("query `{0}` has no atoms")]
    EmptyQuery(Name),
    #[error("free variable `{0}` does not occur in the query body")]
    FreeVariableNotInBody(Name),
}

/// Relation names with arities, in declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    relations: Vec<(Name, usize)>,
    #[serde(skip)]
    index: BTreeMap<Name, usize>,
}

impl Signature {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, relation: &str, arity: usize) -> Result<(), ModelError> {
        if self.index.contains_key(relation) {
            return Err(ModelError::DuplicateRelation(name(relation)));
        }
        let n = name(relation);
        self.index.insert(n.clone(), self.relations.len());
        self.relations.push((n, arity));
        Ok(())
    }

    /// Adds the relation unless an identical declaration already exists.
    pub fn ensure(&mut self, relation: &str, arity: usize) -> Result<(), ModelError> {
        match self.arity(relation) {
            Some(a) if a == arity => Ok(()),
            Some(a) => Err(ModelError::ArityMismatch {
                relation: name(relation),
                expected: a,
                found: arity,
            }),
            None => self.add(relation, arity),
        }
    }

    pub fn arity(&self, relation: &str) -> Option<usize> {
        if self.index.len() != self.relations.len() {
            return self
                .relations
                .iter()
                .find(|(n, _)| &**n == relation)
                .map(|(_, a)| *a);
        }
        self.index.get(relation).map(|&i| self.relations[i].1)
    }

    pub fn contains(&self, relation: &str) -> bool {
        self.arity(relation).is_some()
    }

    pub fn relations(&self) -> impl Iterator<Item = (&Name, usize)> + '_ {
        self.relations.iter().map(|(n, a)| (n, *a))
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn max_arity(&self) -> usize {
        self.relations.iter().map(|(_, a)| *a).max().unwrap_or(0)
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .relations
            .iter()
            .enumerate()
            .map(|(i, (n, _))| (n.clone(), i))
            .collect();
    }

    pub fn check_atom(&self, atom: &Atom) -> Result<(), ModelError> {
        let expected = self
            .arity(&atom.relation)
            .ok_or_else(|| ModelError::UnknownRelation(atom.relation.clone()))?;
        if expected != atom.terms.len() {
            return Err(ModelError::ArityMismatch {
                relation: atom.relation.clone(),
                expected,
                found: atom.terms.len(),
            });
        }
        Ok(())
    }

    /// Returns a name not yet used in the signature, starting from `base`.
    pub fn fresh_name(&self, base: &str) -> Name {
        if !self.contains(base) {
            return name(base);
        }
        (2..)
            .map(|i| alloc::format!("{base}{i}"))
            .find(|n| !self.contains(n))
            .map(|n| name(&n))
            .unwrap()
    }
}

/// A domain element. The derived order puts constants first, then frozen
/// variables, then nulls by id; FD merges keep the smaller value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Const(Name),
    Frozen(Name),
    Null(u32),
}

impl Value {
    pub fn constant(s: &str) -> Self {
        Value::Const(name(s))
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Value::Const(_))
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null(_))
    }
}

fn is_bare_constant(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Const(c) if is_bare_constant(c) => write!(f, "{c}"),
            Value::Const(c) => write!(f, "{c:?}"),
            Value::Frozen(v) => write!(f, "${v}"),
            Value::Null(n) => write!(f, "_{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    Var(Name),
    Const(Name),
}

impl Term {
    pub fn var(s: &str) -> Self {
        Term::Var(name(s))
    }

    pub fn constant(s: &str) -> Self {
        Term::Const(name(s))
    }

    pub fn as_var(&self) -> Option<&Name> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(c) if is_bare_constant(c) => write!(f, "{c}"),
            Term::Const(c) => write!(f, "{c:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub relation: Name,
    pub terms: Vec<Term>,
}

impl Atom {
    pub fn new(relation: &str, terms: Vec<Term>) -> Self {
        Atom {
            relation: name(relation),
            terms,
        }
    }

    /// Shorthand for an atom whose terms are all variables.
    pub fn vars(relation: &str, vars: &[&str]) -> Self {
        Atom::new(relation, vars.iter().map(|v| Term::var(v)).collect())
    }

    pub fn variables(&self) -> impl Iterator<Item = &Name> + '_ {
        self.terms.iter().filter_map(Term::as_var)
    }

    pub fn has_repeated_variable(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.variables().any(|v| !seen.insert(v))
    }

    /// Position (0-based) of the first occurrence of `var`.
    pub fn position_of(&self, var: &str) -> Option<usize> {
        self.terms
            .iter()
            .position(|t| matches!(t, Term::Var(v) if &**v == var))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.relation)?;
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str(")")
    }
}

pub fn atoms_variables(atoms: &[Atom]) -> BTreeSet<Name> {
    atoms.iter().flat_map(|a| a.variables().cloned()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub relation: Name,
    pub tuple: Vec<Value>,
}

impl Fact {
    pub fn new(relation: &str, tuple: Vec<Value>) -> Self {
        Fact {
            relation: name(relation),
            tuple,
        }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.relation)?;
        for (i, v) in self.tuple.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(")")
    }
}

/// Read access to a set of facts, as needed by homomorphism search.
pub trait FactSource {
    fn tuples<'a>(&'a self, relation: &str) -> Box<dyn Iterator<Item = &'a [Value]> + 'a>;
    fn contains_tuple(&self, relation: &str, tuple: &[Value]) -> bool;
    fn relation_size(&self, relation: &str) -> usize;
}

/// A finite set of facts, grouped by relation.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Instance {
    facts: BTreeMap<Name, BTreeSet<Vec<Value>>>,
}

impl Instance {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, fact: Fact) -> bool {
        self.facts.entry(fact.relation).or_default().insert(fact.tuple)
    }

    pub fn insert_tuple(&mut self, relation: &Name, tuple: Vec<Value>) -> bool {
        match self.facts.get_mut(relation) {
            Some(set) => set.insert(tuple),
            None => {
                self.facts
                    .insert(relation.clone(), BTreeSet::from([tuple]));
                true
            }
        }
    }

    pub fn remove(&mut self, fact: &Fact) -> bool {
        let Some(set) = self.facts.get_mut(&fact.relation) else {
            return false;
        };
        let removed = set.remove(&fact.tuple);
        if set.is_empty() {
            self.facts.remove(&fact.relation);
        }
        removed
    }

    pub fn contains(&self, fact: &Fact) -> bool {
        self.contains_tuple(&fact.relation, &fact.tuple)
    }

    pub fn len(&self) -> usize {
        self.facts.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Fact> + '_ {
        self.facts.iter().flat_map(|(r, set)| {
            set.iter().map(move |t| Fact {
                relation: r.clone(),
                tuple: t.clone(),
            })
        })
    }

    pub fn relation(&self, relation: &str) -> impl Iterator<Item = &Vec<Value>> + '_ {
        self.facts.get(relation).into_iter().flatten()
    }

    pub fn relation_names(&self) -> impl Iterator<Item = &Name> + '_ {
        self.facts.keys()
    }

    pub fn active_domain(&self) -> BTreeSet<Value> {
        self.facts
            .values()
            .flatten()
            .flat_map(|t| t.iter().cloned())
            .collect()
    }

    pub fn is_subset(&self, other: &Instance) -> bool {
        self.facts.iter().all(|(r, set)| {
            other
                .facts
                .get(r)
                .is_some_and(|o| set.is_subset(o))
        })
    }

    pub fn extend(&mut self, other: impl IntoIterator<Item = Fact>) {
        for f in other {
            self.insert(f);
        }
    }

    /// Keeps only the facts whose relation satisfies `keep`.
    pub fn restrict(&self, mut keep: impl FnMut(&str) -> bool) -> Instance {
        Instance {
            facts: self
                .facts
                .iter()
                .filter(|(r, _)| keep(r))
                .map(|(r, s)| (r.clone(), s.clone()))
                .collect(),
        }
    }

    pub fn map_values(&self, mut f: impl FnMut(&Value) -> Value) -> Instance {
        let mut out = Instance::new();
        for (r, set) in &self.facts {
            for t in set {
                out.insert_tuple(r, t.iter().map(&mut f).collect());
            }
        }
        out
    }
}

impl FromIterator<Fact> for Instance {
    fn from_iter<I: IntoIterator<Item = Fact>>(iter: I) -> Self {
        let mut inst = Instance::new();
        inst.extend(iter);
        inst
    }
}

impl FactSource for Instance {
    fn tuples<'a>(&'a self, relation: &str) -> Box<dyn Iterator<Item = &'a [Value]> + 'a> {
        Box::new(self.relation(relation).map(Vec::as_slice))
    }

    fn contains_tuple(&self, relation: &str, tuple: &[Value]) -> bool {
        self.facts.get(relation).is_some_and(|s| s.contains(tuple))
    }

    fn relation_size(&self, relation: &str) -> usize {
        self.facts.get(relation).map_or(0, BTreeSet::len)
    }
}

impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, fact) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{fact}")?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConjunctiveQuery {
    pub name: Name,
    pub free_vars: Vec<Name>,
    pub atoms: Vec<Atom>,
}

impl ConjunctiveQuery {
    pub fn new(name_: &str, free_vars: &[&str], atoms: Vec<Atom>) -> Self {
        ConjunctiveQuery {
            name: name(name_),
            free_vars: free_vars.iter().map(|v| name(v)).collect(),
            atoms,
        }
    }

    pub fn is_boolean(&self) -> bool {
        self.free_vars.is_empty()
    }

    pub fn variables(&self) -> BTreeSet<Name> {
        atoms_variables(&self.atoms)
    }

    pub fn constants(&self) -> BTreeSet<Name> {
        self.atoms
            .iter()
            .flat_map(|a| a.terms.iter())
            .filter_map(|t| match t {
                Term::Const(c) => Some(c.clone()),
                Term::Var(_) => None,
            })
            .collect()
    }

    pub fn validate(&self, sig: &Signature) -> Result<(), ModelError> {
        if self.atoms.is_empty() {
            return Err(ModelError::EmptyQuery(self.name.clone()));
        }
        for a in &self.atoms {
            sig.check_atom(a)?;
        }
        let vars = self.variables();
        if let Some(v) = self.free_vars.iter().find(|v| !vars.contains(*v)) {
            return Err(ModelError::FreeVariableNotInBody(v.clone()));
        }
        Ok(())
    }
}

impl fmt::Display for ConjunctiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, v) in self.free_vars.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(") :- ")?;
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

pub type Assignment = BTreeMap<Name, Value>;

/// Instantiates an atom under an assignment; unassigned variables yield `None`.
pub fn ground_atom(atom: &Atom, assignment: &Assignment) -> Option<Fact> {
    let tuple = atom
        .terms
        .iter()
        .map(|t| match t {
            Term::Const(c) => Some(Value::Const(c.clone())),
            Term::Var(v) => assignment.get(v).cloned(),
        })
        .collect::<Option<Vec<_>>>()?;
    Some(Fact {
        relation: atom.relation.clone(),
        tuple,
    })
}

/// Canonical database of `q`: free variables become frozen values, other
/// variables become nulls numbered by first occurrence.
pub fn canonical_db(q: &ConjunctiveQuery, sig: &Signature) -> Result<Instance, ModelError> {
    canonical_db_with_map(q, sig).map(|(inst, _)| inst)
}

pub fn canonical_db_with_map(
    q: &ConjunctiveQuery,
    sig: &Signature,
) -> Result<(Instance, Assignment), ModelError> {
    q.validate(sig)?;
    let mut map = Assignment::new();
    for v in &q.free_vars {
        map.insert(v.clone(), Value::Frozen(v.clone()));
    }
    let mut next = 0u32;
    for a in &q.atoms {
        for v in a.variables() {
            if !map.contains_key(v) {
                map.insert(v.clone(), Value::Null(next));
                next += 1;
            }
        }
    }
    let inst = q
        .atoms
        .iter()
        .map(|a| ground_atom(a, &map).expect("all variables mapped"))
        .collect();
    Ok((inst, map))
}

#[derive(Clone)]
enum Slot {
    Var(usize),
    Val(Value),
}

/// A compiled pattern of atoms, searched against any [`FactSource`].
pub struct Pattern {
    vars: Vec<Name>,
    atoms: Vec<(Name, Vec<Slot>)>,
}

impl Pattern {
    pub fn new(atoms: &[Atom]) -> Self {
        let mut vars: Vec<Name> = Vec::new();
        let mut index: BTreeMap<Name, usize> = BTreeMap::new();
        let compiled = atoms
            .iter()
            .map(|a| {
                let slots = a
                    .terms
                    .iter()
                    .map(|t| match t {
                        Term::Const(c) => Slot::Val(Value::Const(c.clone())),
                        Term::Var(v) => Slot::Var(*index.entry(v.clone()).or_insert_with(|| {
                            vars.push(v.clone());
                            vars.len() - 1
                        })),
                    })
                    .collect();
                (a.relation.clone(), slots)
            })
            .collect();
        Pattern {
            vars,
            atoms: compiled,
        }
    }

    pub fn variables(&self) -> &[Name] {
        &self.vars
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// Enumerates every homomorphism extending `fixed`. `source_for(i)` picks
    /// the fact source used for atom `i`, which lets callers restrict one
    /// atom to a delta. The callback may stop the search early.
    pub fn search<'s>(
        &self,
        source_for: &dyn Fn(usize) -> &'s dyn FactSource,
        fixed: &Assignment,
        f: &mut dyn FnMut(&Assignment) -> ControlFlow<()>,
    ) {
        let mut binding: Vec<Option<Value>> = self
            .vars
            .iter()
            .map(|v| fixed.get(v).cloned())
            .collect();
        let mut done = alloc::vec![false; self.atoms.len()];
        let mut emit = |binding: &[Option<Value>]| {
            let mut out = fixed.clone();
            for (v, val) in self.vars.iter().zip(binding) {
                if let Some(val) = val {
                    out.insert(v.clone(), val.clone());
                }
            }
            f(&out)
        };
        let _ = self.step(source_for, &mut binding, &mut done, self.atoms.len(), &mut emit);
    }

    fn step<'s>(
        &self,
        source_for: &dyn Fn(usize) -> &'s dyn FactSource,
        binding: &mut Vec<Option<Value>>,
        done: &mut [bool],
        remaining: usize,
        emit: &mut dyn FnMut(&[Option<Value>]) -> ControlFlow<()>,
    ) -> ControlFlow<()> {
        if remaining == 0 {
            return emit(binding);
        }
        // Most constrained atom first: most bound slots, then fewest candidates.
        let mut best: Option<(usize, usize, usize)> = None;
        for (i, (rel, slots)) in self.atoms.iter().enumerate() {
            if done[i] {
                continue;
            }
            let unbound = slots
                .iter()
                .filter(|s| matches!(s, Slot::Var(v) if binding[*v].is_none()))
                .count();
            let size = if unbound == 0 {
                0
            } else {
                source_for(i).relation_size(rel)
            };
            let key = (i, unbound, size);
            if best.is_none_or(|(_, u, s)| (unbound, size) < (u, s)) {
                best = Some(key);
            }
        }
        let (i, unbound, _) = best.expect("an atom remains");
        let (rel, slots) = &self.atoms[i];
        let source = source_for(i);
        done[i] = true;
        let result = if unbound == 0 {
            let tuple: Vec<Value> = slots
                .iter()
                .map(|s| match s {
                    Slot::Val(v) => v.clone(),
                    Slot::Var(v) => binding[*v].clone().unwrap(),
                })
                .collect();
            if source.contains_tuple(rel, &tuple) {
                self.step(source_for, binding, done, remaining - 1, emit)
            } else {
                ControlFlow::Continue(())
            }
        } else {
            let mut newly: Vec<usize> = Vec::new();
            let mut result = ControlFlow::Continue(());
            for tuple in source.tuples(rel) {
                if tuple.len() != slots.len() {
                    continue;
                }
                let mut ok = true;
                for (slot, val) in slots.iter().zip(tuple) {
                    match slot {
                        Slot::Val(c) => {
                            if c != val {
                                ok = false;
                                break;
                            }
                        }
                        Slot::Var(v) => match &binding[*v] {
                            Some(b) => {
                                if b != val {
                                    ok = false;
                                    break;
                                }
                            }
                            None => {
                                binding[*v] = Some(val.clone());
                                newly.push(*v);
                            }
                        },
                    }
                }
                if ok {
                    result = self.step(source_for, binding, done, remaining - 1, emit);
                }
                for v in newly.drain(..) {
                    binding[v] = None;
                }
                if result.is_break() {
                    break;
                }
            }
            result
        };
        done[i] = false;
        result
    }
}

/// Calls `f` for every homomorphism of `atoms` into `target` extending `fixed`.
pub fn for_each_homomorphism(
    atoms: &[Atom],
    target: &dyn FactSource,
    fixed: &Assignment,
    f: &mut dyn FnMut(&Assignment) -> ControlFlow<()>,
) {
    Pattern::new(atoms).search(&|_| target, fixed, f);
}

pub fn find_homomorphism(
    atoms: &[Atom],
    target: &dyn FactSource,
    fixed: &Assignment,
) -> Option<Assignment> {
    let mut found = None;
    for_each_homomorphism(atoms, target, fixed, &mut |a| {
        found = Some(a.clone());
        ControlFlow::Break(())
    });
    found
}

pub fn eval_cq(q: &ConjunctiveQuery, inst: &dyn FactSource) -> BTreeSet<Vec<Value>> {
    let mut out = BTreeSet::new();
    for_each_homomorphism(&q.atoms, inst, &Assignment::new(), &mut |a| {
        out.insert(q.free_vars.iter().map(|v| a[v].clone()).collect());
        ControlFlow::Continue(())
    });
    out
}

/// Renders a list of atoms as `A(x), B(y)`.
pub fn display_atoms(atoms: &[Atom]) -> String {
    let mut s = String::new();
    for (i, a) in atoms.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push_str(&alloc::format!("{a}"));
    }
    s
}
