//! Reduction of monotone answerability to query containment under the
//! constraints Σ, their primed copy Σ′, and accessibility axioms.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::constraints::{
    detby, fd_chase, ConstraintError, Dependency, Fd, Tgd,
};
use crate::model::{
    canonical_db_with_map, name, Assignment, Atom, ConjunctiveQuery, Fact, Instance, ModelError,
    Name, Signature, Term, Value,
};
use crate::schema::{position_atom, position_var, Bound, Schema, SimplificationKind, SimplificationReport};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReductionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("counting axioms cannot be executed; simplify result bounds first")]
    CountingAxiomPresent,
    #[error("problem is not in existence-check form: {0}")]
    NotExistenceCheckForm(&'static str),
    #[error("constraints are not UIDs and FDs")]
    NotUidFdClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AxiomKind {
    /// `acc(x) ∧ R(x,y) → R_acc(x,y)`.
    NoBound,
    /// `acc(x) ∧ R(x,y) → R′(x,y) ∧ acc(y)`.
    NoBoundRewritten,
    /// `acc(x) ∧ R(x,y) → ∃z R_acc(x,z)`.
    LowerBoundOne,
    /// `R_acc(w) → R(w) ∧ R′(w) ∧ acc(w)`.
    AccToBoth,
    /// `acc(x) ∧ R(x,y) → ∃z R(x,z) ∧ R′(x,z) ∧ acc(x,z)`.
    InlinedLowerBound,
    /// `acc on P ∧ R(x) → acc(x_j)`.
    TruncatedAccessibility,
    /// `acc(x) ∧ R(x,y) → R′(x,y)`.
    Transfer,
    /// `acc(x) ∧ R(x,y) → ∃z R′(x,z)`.
    ResultBoundedFactTransfer,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Origin {
    Sigma,
    SigmaPrimed,
    Access { kind: AxiomKind, method: Name },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GammaRule {
    pub dependency: Dependency,
    pub origin: Origin,
}

impl GammaRule {
    pub fn kind(&self) -> Option<AxiomKind> {
        match &self.origin {
            Origin::Access { kind, .. } => Some(*kind),
            _ => None,
        }
    }
}

impl fmt::Display for GammaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.dependency {
            Dependency::Fd(fd) => write!(f, "fd {fd}"),
            Dependency::Tgd(t) if t.is_id() => write!(f, "id {t}"),
            Dependency::Tgd(t) => write!(f, "tgd {t}"),
        }
    }
}

/// "If `threshold - 1` distinct tuples match the inputs, so do `threshold`
/// accessible ones." Never chased.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CountingAxiom {
    pub method: Name,
    pub relation: Name,
    pub inputs: BTreeSet<usize>,
    pub threshold: u32,
}

impl fmt::Display for CountingAxiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "counting {} on {} inputs (", self.method, self.relation)?;
        for (i, p) in self.inputs.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", p + 1)?;
        }
        write!(f, ") exists>={}", self.threshold)
    }
}

/// Names of the auxiliary relations of a containment problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GammaNames {
    pub accessible: Name,
    pub primed: BTreeMap<Name, Name>,
    pub acc: BTreeMap<Name, Name>,
}

impl GammaNames {
    pub fn primed(&self, r: &Name) -> Name {
        self.primed[r].clone()
    }

    pub fn is_primed(&self, r: &str) -> bool {
        self.primed.values().any(|p| &**p == r)
    }

    pub fn unprimed(&self, r: &str) -> Option<&Name> {
        self.primed.iter().find(|(_, p)| &***p == r).map(|(b, _)| b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainmentProblem {
    pub source: ConjunctiveQuery,
    /// The source query over primed relations.
    pub target: ConjunctiveQuery,
    pub signature: Signature,
    pub names: GammaNames,
    pub gamma: Vec<GammaRule>,
    pub counting: Vec<CountingAxiom>,
    pub initial: Instance,
    /// Values the target's free variables must take.
    pub target_fixed: Assignment,
    /// Fire Σ′ triggers after all others within each chase round.
    pub primed_last: bool,
}

impl ContainmentProblem {
    pub fn is_executable(&self) -> bool {
        self.counting.is_empty()
    }

    pub fn dependencies(&self) -> Vec<Dependency> {
        self.gamma.iter().map(|g| g.dependency.clone()).collect()
    }

    pub fn rules_of(&self, kind: AxiomKind) -> impl Iterator<Item = &GammaRule> + '_ {
        self.gamma.iter().filter(move |g| g.kind() == Some(kind))
    }

    pub fn accessible_fact(&self, v: Value) -> Fact {
        Fact {
            relation: self.names.accessible.clone(),
            tuple: vec![v],
        }
    }
}

impl fmt::Display for ContainmentProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# source: {}", self.source)?;
        writeln!(f, "# target: {}", self.target)?;
        for g in &self.gamma {
            writeln!(f, "{g}")?;
        }
        for c in &self.counting {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    /// Use the combined `R′ ∧ accessible` head for unbounded methods instead
    /// of going through `R_acc`.
    pub rewrite_unbounded: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            rewrite_unbounded: true,
        }
    }
}

fn accessible_atom(accessible: &Name, p: usize) -> Atom {
    Atom {
        relation: accessible.clone(),
        terms: vec![position_var(p)],
    }
}

pub fn build_amondet_containment(
    q: &ConjunctiveQuery,
    s: &Schema,
) -> Result<ContainmentProblem, ReductionError> {
    build_amondet_containment_with(q, s, BuildOptions::default())
}

pub fn build_amondet_containment_with(
    q: &ConjunctiveQuery,
    s: &Schema,
    opts: BuildOptions,
) -> Result<ContainmentProblem, ReductionError> {
    let (canon, map) = canonical_db_with_map(q, &s.signature)?;
    let mut sig = s.signature.clone();
    let accessible = sig.fresh_name("accessible");
    sig.add(&accessible, 1)?;
    let mut primed = BTreeMap::new();
    for (r, a) in s.signature.relations() {
        let p = sig.fresh_name(&format!("{r}'"));
        sig.add(&p, a)?;
        primed.insert(r.clone(), p);
    }
    let mut acc = BTreeMap::new();
    let needs_acc = |m: &crate::schema::AccessMethod| m.is_bounded() || !opts.rewrite_unbounded;
    for m in s.methods.iter().filter(|m| needs_acc(m)) {
        if !acc.contains_key(&m.relation) {
            let a = sig.arity(&m.relation).expect("validated schema");
            let n = sig.fresh_name(&format!("{}__acc", m.relation));
            sig.add(&n, a)?;
            acc.insert(m.relation.clone(), n);
        }
    }
    let names = GammaNames {
        accessible: accessible.clone(),
        primed,
        acc,
    };

    let mut gamma: Vec<GammaRule> = s
        .constraints
        .iter()
        .map(|c| GammaRule {
            dependency: c.clone(),
            origin: Origin::Sigma,
        })
        .collect();
    gamma.extend(s.constraints.iter().map(|c| GammaRule {
        dependency: c.map_relations(|r| names.primed(r)),
        origin: Origin::SigmaPrimed,
    }));

    let mut counting = Vec::new();
    let mut to_both: BTreeSet<Name> = BTreeSet::new();
    for m in &s.methods {
        let arity = sig.arity(&m.relation).expect("validated schema");
        let rel = position_atom(&m.relation, arity);
        let mut body: Vec<Atom> = m.inputs.iter().map(|&p| accessible_atom(&accessible, p)).collect();
        body.push(rel.clone());
        let access = |kind| Origin::Access {
            kind,
            method: m.name.clone(),
        };
        match m.bound {
            None if opts.rewrite_unbounded => {
                let mut head = vec![Atom {
                    relation: names.primed(&m.relation),
                    terms: rel.terms.clone(),
                }];
                head.extend(
                    (0..arity)
                        .filter(|p| !m.inputs.contains(p))
                        .map(|p| accessible_atom(&accessible, p)),
                );
                gamma.push(GammaRule {
                    dependency: Tgd::new(body, head).into(),
                    origin: access(AxiomKind::NoBoundRewritten),
                });
            }
            None => {
                let head = Atom {
                    relation: names.acc[&m.relation].clone(),
                    terms: rel.terms.clone(),
                };
                gamma.push(GammaRule {
                    dependency: Tgd::new(body, vec![head]).into(),
                    origin: access(AxiomKind::NoBound),
                });
                to_both.insert(m.relation.clone());
            }
            Some(b) => {
                let terms = (0..arity)
                    .map(|p| {
                        if m.inputs.contains(&p) {
                            position_var(p)
                        } else {
                            Term::Var(name(&format!("z{}", p + 1)))
                        }
                    })
                    .collect();
                let head = Atom {
                    relation: names.acc[&m.relation].clone(),
                    terms,
                };
                gamma.push(GammaRule {
                    dependency: Tgd::new(body, vec![head]).into(),
                    origin: access(AxiomKind::LowerBoundOne),
                });
                to_both.insert(m.relation.clone());
                let k = match b {
                    Bound::Result(k) | Bound::LowerOnly(k) => k,
                };
                counting.extend((2..=k).map(|threshold| CountingAxiom {
                    method: m.name.clone(),
                    relation: m.relation.clone(),
                    inputs: m.inputs.clone(),
                    threshold,
                }));
            }
        }
    }
    for r in &to_both {
        let arity = sig.arity(r).expect("declared");
        let w = position_atom(r, arity);
        let mut head = vec![
            w.clone(),
            Atom {
                relation: names.primed(r),
                terms: w.terms.clone(),
            },
        ];
        head.extend((0..arity).map(|p| accessible_atom(&accessible, p)));
        let body = Atom {
            relation: names.acc[r].clone(),
            terms: w.terms.clone(),
        };
        let method = s
            .methods
            .iter()
            .find(|m| &m.relation == r)
            .map(|m| m.name.clone())
            .expect("relation has a method");
        gamma.push(GammaRule {
            dependency: Tgd::new(vec![body], head).into(),
            origin: Origin::Access {
                kind: AxiomKind::AccToBoth,
                method,
            },
        });
    }

    let mut initial = canon;
    for c in q.constants() {
        initial.insert(Fact {
            relation: accessible.clone(),
            tuple: vec![Value::Const(c)],
        });
    }
    let target = ConjunctiveQuery {
        name: name(&format!("{}'", q.name)),
        free_vars: q.free_vars.clone(),
        atoms: q
            .atoms
            .iter()
            .map(|a| Atom {
                relation: names.primed(&a.relation),
                terms: a.terms.clone(),
            })
            .collect(),
    };
    let target_fixed = q
        .free_vars
        .iter()
        .map(|v| (v.clone(), map[v].clone()))
        .collect();
    Ok(ContainmentProblem {
        source: q.clone(),
        target,
        signature: sig,
        names,
        gamma,
        counting,
        initial,
        target_fixed,
        primed_last: false,
    })
}

/// Splits each combined no-bound axiom into a Transfer axiom and one
/// single-head accessibility axiom per output position.
pub fn split_accessibility_axioms(
    p: &ContainmentProblem,
) -> Result<ContainmentProblem, ReductionError> {
    if !p.is_executable() {
        return Err(ReductionError::CountingAxiomPresent);
    }
    let mut out = p.clone();
    out.gamma.clear();
    for g in &p.gamma {
        let (Some(AxiomKind::NoBoundRewritten), Dependency::Tgd(t), Origin::Access { method, .. }) =
            (g.kind(), &g.dependency, &g.origin)
        else {
            out.gamma.push(g.clone());
            continue;
        };
        let (primed_head, acc_heads): (Vec<&Atom>, Vec<&Atom>) = t
            .head
            .iter()
            .partition(|a| a.relation != p.names.accessible);
        out.gamma.push(GammaRule {
            dependency: Tgd::new(t.body.clone(), primed_head.into_iter().cloned().collect()).into(),
            origin: Origin::Access {
                kind: AxiomKind::Transfer,
                method: method.clone(),
            },
        });
        for h in acc_heads {
            out.gamma.push(GammaRule {
                dependency: Tgd::new(t.body.clone(), vec![h.clone()]).into(),
                origin: Origin::Access {
                    kind: AxiomKind::TruncatedAccessibility,
                    method: method.clone(),
                },
            });
        }
    }
    Ok(out)
}

fn mentions(dep: &Dependency, rels: &BTreeSet<Name>) -> bool {
    match dep {
        Dependency::Tgd(t) => t.relations().any(|r| rels.contains(r)),
        Dependency::Fd(fd) => rels.contains(&fd.relation),
    }
}

/// Rewrites a problem built over an existence-check simplified schema into
/// the normal form used by the bounded-width procedure: the view relations
/// disappear and each bounded method contributes one result-bounded fact
/// transfer axiom `acc(x) ∧ R(x,y) → ∃z R′(x,z)`.
pub fn normalize_existence_check_gamma(
    p: &ContainmentProblem,
    report: &SimplificationReport,
) -> Result<ContainmentProblem, ReductionError> {
    if report.kind != SimplificationKind::ExistenceCheck {
        return Err(ReductionError::NotExistenceCheckForm("report is not an existence-check report"));
    }
    if !p.is_executable() {
        return Err(ReductionError::CountingAxiomPresent);
    }
    let mut views: BTreeSet<Name> = BTreeSet::new();
    for v in &report.views {
        if !p.signature.contains(&v.view) {
            return Err(ReductionError::NotExistenceCheckForm("view relation missing from the problem"));
        }
        views.insert(v.view.clone());
        views.insert(p.names.primed(&v.view));
    }
    if p
        .gamma
        .iter()
        .any(|g| g.kind().is_some_and(|k| k != AxiomKind::NoBoundRewritten))
    {
        return Err(ReductionError::NotExistenceCheckForm("bounded accessibility axioms present"));
    }
    let mut base = p.clone();
    base.gamma
        .retain(|g| !mentions(&g.dependency, &views));
    let mut out = split_accessibility_axioms(&base)?;
    for v in &report.views {
        let arity = p.signature.arity(&v.relation).expect("declared");
        let mut body: Vec<Atom> = v
            .inputs
            .iter()
            .map(|&i| accessible_atom(&p.names.accessible, i))
            .collect();
        body.push(position_atom(&v.relation, arity));
        let head = Atom {
            relation: p.names.primed(&v.relation),
            terms: (0..arity)
                .map(|i| {
                    if v.inputs.contains(&i) {
                        position_var(i)
                    } else {
                        Term::Var(name(&format!("z{}", i + 1)))
                    }
                })
                .collect(),
        };
        out.gamma.push(GammaRule {
            dependency: Tgd::new(body, vec![head]).into(),
            origin: Origin::Access {
                kind: AxiomKind::ResultBoundedFactTransfer,
                method: v.method.clone(),
            },
        });
    }
    Ok(out)
}

/// Report of the rules dropped by [`prune_fd_views`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneReport {
    pub dropped: Vec<GammaRule>,
}

/// Drops, for an FD-simplified schema, the unprimed view-to-relation IDs and
/// the primed relation-to-view IDs. Neither can contribute to a match of the
/// primed query: unprimed relations only feed the accessibility axioms
/// through the views, and primed views are only read by their own
/// view-to-relation copy.
pub fn prune_fd_views(
    p: &ContainmentProblem,
    report: &SimplificationReport,
) -> (ContainmentProblem, PruneReport) {
    let mut out = p.clone();
    let mut pruned = PruneReport::default();
    let mut drop = BTreeSet::new();
    for v in &report.views {
        let arity = p.signature.arity(&v.relation).expect("declared");
        let to_rel: Dependency = v.view_to_relation(arity).into();
        let to_view: Dependency = v.relation_to_view(arity).into();
        drop.insert((Origin::Sigma, to_rel));
        drop.insert((
            Origin::SigmaPrimed,
            to_view.map_relations(|r| p.names.primed(r)),
        ));
    }
    out.gamma.retain(|g| {
        let key = (g.origin.clone(), g.dependency.clone());
        if drop.contains(&key) {
            pruned.dropped.push(g.clone());
            false
        } else {
            true
        }
    });
    (out, pruned)
}

/// Rewrites a problem built over a choice-simplified UID+FD schema so that
/// the FDs can be dropped: each bounded access creates one tuple that copies
/// every position determined by the inputs, the source query is minimized
/// under the FDs, and Σ′ fires last in each round.
pub fn uidfd_separable_rewrite(
    p: &ContainmentProblem,
    fds: &[Fd],
) -> Result<ContainmentProblem, ReductionError> {
    if !p.is_executable() {
        return Err(ReductionError::CountingAxiomPresent);
    }
    let uid_only = p
        .gamma
        .iter()
        .filter(|g| matches!(g.origin, Origin::Sigma))
        .all(|g| match &g.dependency {
            Dependency::Tgd(t) => t.is_uid(),
            Dependency::Fd(_) => true,
        });
    if !uid_only {
        return Err(ReductionError::NotUidFdClass);
    }
    let mut out = p.clone();
    out.gamma.clear();
    for g in &p.gamma {
        match (&g.origin, &g.dependency) {
            (Origin::Sigma | Origin::SigmaPrimed, Dependency::Fd(_)) => {}
            (Origin::Access { kind: AxiomKind::AccToBoth, .. }, _) => {}
            (
                Origin::Access {
                    kind: AxiomKind::LowerBoundOne,
                    method,
                },
                Dependency::Tgd(t),
            ) => {
                let rel = t.body.last().expect("relation atom").clone();
                let inputs: BTreeSet<usize> = t
                    .body
                    .iter()
                    .filter(|a| a.relation == p.names.accessible)
                    .filter_map(|a| a.terms[0].as_var())
                    .filter_map(|v| rel.position_of(v))
                    .collect();
                let kept = detby(fds, &rel.relation, &inputs);
                let terms: Vec<Term> = (0..rel.terms.len())
                    .map(|i| {
                        if kept.contains(&i) {
                            rel.terms[i].clone()
                        } else {
                            Term::Var(name(&format!("z{}", i + 1)))
                        }
                    })
                    .collect();
                let mut head = vec![
                    Atom {
                        relation: rel.relation.clone(),
                        terms: terms.clone(),
                    },
                    Atom {
                        relation: p.names.primed(&rel.relation),
                        terms: terms.clone(),
                    },
                ];
                head.extend(terms.iter().map(|t| Atom {
                    relation: p.names.accessible.clone(),
                    terms: vec![t.clone()],
                }));
                out.gamma.push(GammaRule {
                    dependency: Tgd::new(t.body.clone(), head).into(),
                    origin: Origin::Access {
                        kind: AxiomKind::InlinedLowerBound,
                        method: method.clone(),
                    },
                });
            }
            _ => out.gamma.push(g.clone()),
        }
    }
    let (chased, uf) = fd_chase(&p.initial, fds)?;
    out.initial = chased;
    out.target_fixed = p
        .target_fixed
        .iter()
        .map(|(v, val)| (v.clone(), uf.find(val)))
        .collect();
    out.source = crate::constraints::minimize_query_under_fds(
        &p.source,
        fds,
        &p.signature,
    )?
    .query;
    out.primed_last = true;
    Ok(out)
}
