//! Dependencies (TGDs and FDs), syntactic classification, FD closure and
//! query minimization under FDs.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{
    atoms_variables, canonical_db_with_map, Atom, ConjunctiveQuery, Fact, Instance, ModelError,
    Name, Signature, Term, Value,
};

/// Widths up to this value are routed to the exact bounded-width procedure.
pub const DEFAULT_MAX_WIDTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConstraintError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("dependency `{0}` contains a constant")]
    ConstantInDependency(Tgd),
    #[error("dependency `{0}` has an empty body or head")]
    EmptyDependency(Tgd),
    #[error("position {position} is out of range for `{relation}`")]
    InvalidPosition { relation: Name, position: usize },
    #[error("FDs force distinct constants {0} and {1} to be equal")]
    FdMergeOnDistinctConstants(Value, Value),
}

/// `body -> exists (head vars not in body). head`
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tgd {
    pub body: Vec<Atom>,
    pub head: Vec<Atom>,
}

impl Tgd {
    pub fn new(body: Vec<Atom>, head: Vec<Atom>) -> Self {
        Tgd { body, head }
    }

    pub fn body_vars(&self) -> BTreeSet<Name> {
        atoms_variables(&self.body)
    }

    pub fn exported_vars(&self) -> BTreeSet<Name> {
        let head = atoms_variables(&self.head);
        self.body_vars().intersection(&head).cloned().collect()
    }

    pub fn existential_vars(&self) -> BTreeSet<Name> {
        let body = self.body_vars();
        atoms_variables(&self.head)
            .into_iter()
            .filter(|v| !body.contains(v))
            .collect()
    }

    pub fn width(&self) -> usize {
        self.exported_vars().len()
    }

    pub fn is_full(&self) -> bool {
        self.existential_vars().is_empty()
    }

    pub fn is_id(&self) -> bool {
        self.body.len() == 1
            && self.head.len() == 1
            && !self.body[0].has_repeated_variable()
            && !self.head[0].has_repeated_variable()
            && !self.has_constants()
    }

    pub fn is_uid(&self) -> bool {
        self.is_id() && self.width() <= 1
    }

    /// Some body atom contains every body variable.
    pub fn is_guarded(&self) -> bool {
        let vars = self.body_vars();
        self.body
            .iter()
            .any(|a| vars.iter().all(|v| a.variables().any(|w| w == v)))
    }

    /// Some body atom contains every exported variable.
    pub fn is_frontier_guarded(&self) -> bool {
        let frontier = self.exported_vars();
        frontier.is_empty()
            || self
                .body
                .iter()
                .any(|a| frontier.iter().all(|v| a.variables().any(|w| w == v)))
    }

    pub fn has_constants(&self) -> bool {
        self.body
            .iter()
            .chain(&self.head)
            .flat_map(|a| &a.terms)
            .any(|t| matches!(t, Term::Const(_)))
    }

    pub fn validate(&self, sig: &Signature) -> Result<(), ConstraintError> {
        if self.body.is_empty() || self.head.is_empty() {
            return Err(ConstraintError::EmptyDependency(self.clone()));
        }
        if self.has_constants() {
            return Err(ConstraintError::ConstantInDependency(self.clone()));
        }
        for a in self.body.iter().chain(&self.head) {
            sig.check_atom(a)?;
        }
        Ok(())
    }

    pub fn map_relations(&self, mut f: impl FnMut(&Name) -> Name) -> Tgd {
        let mut map = |a: &Atom| Atom {
            relation: f(&a.relation),
            terms: a.terms.clone(),
        };
        Tgd {
            body: self.body.iter().map(&mut map).collect(),
            head: self.head.iter().map(&mut map).collect(),
        }
    }

    pub fn relations(&self) -> impl Iterator<Item = &Name> + '_ {
        self.body.iter().chain(&self.head).map(|a| &a.relation)
    }
}

impl fmt::Display for Tgd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} -> {}",
            crate::model::display_atoms(&self.body),
            crate::model::display_atoms(&self.head)
        )
    }
}

/// `relation: determinant -> determined`, positions 0-based.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fd {
    pub relation: Name,
    pub determinant: BTreeSet<usize>,
    pub determined: usize,
}

impl Fd {
    pub fn new(relation: &str, determinant: &[usize], determined: usize) -> Self {
        Fd {
            relation: crate::model::name(relation),
            determinant: determinant.iter().copied().collect(),
            determined,
        }
    }

    pub fn validate(&self, sig: &Signature) -> Result<(), ConstraintError> {
        let arity = sig
            .arity(&self.relation)
            .ok_or_else(|| ModelError::UnknownRelation(self.relation.clone()))?;
        for &p in self.determinant.iter().chain([&self.determined]) {
            if p >= arity {
                return Err(ConstraintError::InvalidPosition {
                    relation: self.relation.clone(),
                    position: p + 1,
                });
            }
        }
        Ok(())
    }

    /// The FD as an equality-generating rule over a pair of atoms.
    pub fn applies(&self, a: &[Value], b: &[Value]) -> bool {
        self.determinant.iter().all(|&p| a[p] == b[p]) && a[self.determined] != b[self.determined]
    }
}

impl fmt::Display for Fd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.relation)?;
        for (i, p) in self.determinant.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", p + 1)?;
        }
        write!(f, " -> {}", self.determined + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dependency {
    Tgd(Tgd),
    Fd(Fd),
}

impl Dependency {
    pub fn as_tgd(&self) -> Option<&Tgd> {
        match self {
            Dependency::Tgd(t) => Some(t),
            Dependency::Fd(_) => None,
        }
    }

    pub fn as_fd(&self) -> Option<&Fd> {
        match self {
            Dependency::Fd(f) => Some(f),
            Dependency::Tgd(_) => None,
        }
    }

    pub fn validate(&self, sig: &Signature) -> Result<(), ConstraintError> {
        match self {
            Dependency::Tgd(t) => t.validate(sig),
            Dependency::Fd(f) => f.validate(sig),
        }
    }

    pub fn map_relations(&self, mut f: impl FnMut(&Name) -> Name) -> Dependency {
        match self {
            Dependency::Tgd(t) => Dependency::Tgd(t.map_relations(f)),
            Dependency::Fd(fd) => Dependency::Fd(Fd {
                relation: f(&fd.relation),
                ..fd.clone()
            }),
        }
    }
}

impl From<Tgd> for Dependency {
    fn from(t: Tgd) -> Self {
        Dependency::Tgd(t)
    }
}

impl From<Fd> for Dependency {
    fn from(f: Fd) -> Self {
        Dependency::Fd(f)
    }
}

impl fmt::Display for Dependency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dependency::Tgd(t) => t.fmt(f),
            Dependency::Fd(d) => d.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstraintClass {
    FdOnly,
    IdOnly,
    BoundedWidthId(usize),
    UidFd,
    FrontierGuarded,
    GeneralTgd,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyFlags {
    pub is_fd: bool,
    pub is_id: bool,
    pub is_uid: bool,
    pub is_full: bool,
    pub is_guarded: bool,
    pub is_frontier_guarded: bool,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintProfile {
    pub flags: Vec<DependencyFlags>,
    /// Maximum width over the IDs of the set.
    pub width: usize,
    pub class: ConstraintClass,
}

pub fn flags_of(dep: &Dependency) -> DependencyFlags {
    match dep {
        Dependency::Fd(_) => DependencyFlags {
            is_fd: true,
            is_id: false,
            is_uid: false,
            is_full: false,
            is_guarded: false,
            is_frontier_guarded: false,
            width: 0,
        },
        Dependency::Tgd(t) => DependencyFlags {
            is_fd: false,
            is_id: t.is_id(),
            is_uid: t.is_uid(),
            is_full: t.is_full(),
            is_guarded: t.is_guarded(),
            is_frontier_guarded: t.is_frontier_guarded(),
            width: t.width(),
        },
    }
}

pub fn classify(constraints: &[Dependency]) -> ConstraintProfile {
    classify_with(constraints, DEFAULT_MAX_WIDTH)
}

/// Classifies a constraint set; ID-only sets of width at most `max_width`
/// are labelled `BoundedWidthId`.
pub fn classify_with(constraints: &[Dependency], max_width: usize) -> ConstraintProfile {
    let flags: Vec<DependencyFlags> = constraints.iter().map(flags_of).collect();
    let tgds: Vec<&DependencyFlags> = flags.iter().filter(|f| !f.is_fd).collect();
    let has_fds = tgds.len() < flags.len();
    let all_ids = tgds.iter().all(|f| f.is_id);
    let width = tgds
        .iter()
        .filter(|f| f.is_id)
        .map(|f| f.width)
        .max()
        .unwrap_or(0);
    let class = if tgds.is_empty() {
        ConstraintClass::FdOnly
    } else if all_ids && !has_fds {
        if width <= max_width {
            ConstraintClass::BoundedWidthId(width)
        } else {
            ConstraintClass::IdOnly
        }
    } else if all_ids && width <= 1 {
        ConstraintClass::UidFd
    } else if has_fds {
        ConstraintClass::Mixed
    } else if tgds.iter().all(|f| f.is_frontier_guarded) {
        ConstraintClass::FrontierGuarded
    } else {
        ConstraintClass::GeneralTgd
    };
    ConstraintProfile {
        flags,
        width,
        class,
    }
}

/// Closure of `positions` under the FDs on `relation`.
pub fn detby(fds: &[Fd], relation: &str, positions: &BTreeSet<usize>) -> BTreeSet<usize> {
    let mut out = positions.clone();
    loop {
        let before = out.len();
        for fd in fds.iter().filter(|fd| &*fd.relation == relation) {
            if fd.determinant.is_subset(&out) {
                out.insert(fd.determined);
            }
        }
        if out.len() == before {
            return out;
        }
    }
}

/// Union-find over values; the representative of a class is its least value.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UnionFind {
    parent: BTreeMap<Value, Value>,
}

impl UnionFind {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn find(&self, v: &Value) -> Value {
        let mut cur = v;
        while let Some(p) = self.parent.get(cur) {
            cur = p;
        }
        cur.clone()
    }

    /// Merges the classes of `a` and `b`, returning `(kept, replaced)` when
    /// they were distinct. Two distinct constants cannot be merged.
    pub fn union(&mut self, a: &Value, b: &Value) -> Result<Option<(Value, Value)>, ConstraintError> {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return Ok(None);
        }
        if ra.is_const() && rb.is_const() {
            return Err(ConstraintError::FdMergeOnDistinctConstants(ra, rb));
        }
        let (keep, drop) = if ra < rb { (ra, rb) } else { (rb, ra) };
        // Point every member straight at the new root to keep chains short.
        for p in self.parent.values_mut() {
            if *p == drop {
                *p = keep.clone();
            }
        }
        self.parent.insert(drop.clone(), keep.clone());
        Ok(Some((keep, drop)))
    }

    pub fn merged(&self) -> impl Iterator<Item = (&Value, &Value)> + '_ {
        self.parent.iter()
    }
}

/// Chases an instance with FDs to a fixpoint.
pub fn fd_chase(inst: &Instance, fds: &[Fd]) -> Result<(Instance, UnionFind), ConstraintError> {
    let mut uf = UnionFind::new();
    let mut cur = inst.clone();
    loop {
        let mut changed = false;
        for fd in fds {
            let tuples: Vec<&Vec<Value>> = cur.relation(&fd.relation).collect();
            let mut groups: BTreeMap<Vec<&Value>, &Value> = BTreeMap::new();
            for t in tuples {
                let key: Vec<&Value> = fd.determinant.iter().map(|&p| &t[p]).collect();
                match groups.get(&key) {
                    Some(&v) if *v != t[fd.determined] => {
                        if uf.union(v, &t[fd.determined])?.is_some() {
                            changed = true;
                        }
                    }
                    Some(_) => {}
                    None => {
                        groups.insert(key, &t[fd.determined]);
                    }
                }
            }
            if changed {
                break;
            }
        }
        if !changed {
            return Ok((cur, uf));
        }
        cur = cur.map_values(|v| uf.find(v));
    }
}

/// Result of minimizing a query under FDs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimizedQuery {
    pub query: ConjunctiveQuery,
    /// Term that each original variable became.
    pub substitution: BTreeMap<Name, Term>,
}

/// Chases the canonical database of `q` with the FDs and reads the result
/// back as a query. Free variables merged with a constant or with an
/// earlier free variable drop out of the head; `substitution` records where
/// they went.
pub fn minimize_query_under_fds(
    q: &ConjunctiveQuery,
    fds: &[Fd],
    sig: &Signature,
) -> Result<MinimizedQuery, ConstraintError> {
    let (inst, map) = canonical_db_with_map(q, sig)?;
    let (chased, uf) = fd_chase(&inst, fds)?;
    let back: BTreeMap<Value, Name> = map.iter().map(|(v, val)| (val.clone(), v.clone())).collect();
    let to_term = |v: &Value| match v {
        Value::Const(c) => Term::Const(c.clone()),
        other => Term::Var(back[other].clone()),
    };
    let substitution: BTreeMap<Name, Term> = map
        .iter()
        .map(|(v, val)| (v.clone(), to_term(&uf.find(val))))
        .collect();
    let mut free_vars: Vec<Name> = Vec::new();
    for v in &q.free_vars {
        if let Term::Var(w) = &substitution[v] {
            if !free_vars.contains(w) {
                free_vars.push(w.clone());
            }
        }
    }
    // Keep atom order stable: first occurrence in the original query.
    let mut atoms: Vec<Atom> = Vec::new();
    for a in &q.atoms {
        let image = Atom {
            relation: a.relation.clone(),
            terms: a
                .terms
                .iter()
                .map(|t| match t {
                    Term::Var(v) => substitution[v].clone(),
                    c => c.clone(),
                })
                .collect(),
        };
        if !atoms.contains(&image) {
            atoms.push(image);
        }
    }
    debug_assert_eq!(atoms.len(), chased.len());
    Ok(MinimizedQuery {
        query: ConjunctiveQuery {
            name: q.name.clone(),
            free_vars,
            atoms,
        },
        substitution,
    })
}

/// Facts of `inst` violating some FD, as pairs.
pub fn fd_violations(inst: &Instance, fds: &[Fd]) -> Vec<(Fd, Fact, Fact)> {
    let mut out = Vec::new();
    for fd in fds {
        let tuples: Vec<&Vec<Value>> = inst.relation(&fd.relation).collect();
        for (i, a) in tuples.iter().enumerate() {
            for b in &tuples[i + 1..] {
                if fd.applies(a, b) {
                    out.push((
                        fd.clone(),
                        Fact {
                            relation: fd.relation.clone(),
                            tuple: (*a).clone(),
                        },
                        Fact {
                            relation: fd.relation.clone(),
                            tuple: (*b).clone(),
                        },
                    ));
                }
            }
        }
    }
    out
}
