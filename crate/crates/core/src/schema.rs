//! Access methods, result bounds, schema validation, and the schema
//! transforms that remove or weaken result bounds.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::constraints::{detby, Dependency, Fd, Tgd};
use crate::model::{name, Atom, Name, Signature, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Bound {
    /// At most `k` results, and at least `min(k, matches)`.
    Result(u32),
    /// Only the lower clause: at least `min(k, matches)` results.
    LowerOnly(u32),
}

impl Bound {
    pub fn value(self) -> u32 {
        match self {
            Bound::Result(k) | Bound::LowerOnly(k) => k,
        }
    }

    pub fn with_value(self, k: u32) -> Bound {
        match self {
            Bound::Result(_) => Bound::Result(k),
            Bound::LowerOnly(_) => Bound::LowerOnly(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AccessMethod {
    pub name: Name,
    pub relation: Name,
    /// Input positions, 0-based.
    pub inputs: BTreeSet<usize>,
    pub bound: Option<Bound>,
}

impl AccessMethod {
    pub fn new(name_: &str, relation: &str, inputs: &[usize], bound: Option<Bound>) -> Self {
        AccessMethod {
            name: name(name_),
            relation: name(relation),
            inputs: inputs.iter().copied().collect(),
            bound,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.bound.is_some()
    }
}

impl fmt::Display for AccessMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "method {} on {} inputs (", self.name, self.relation)?;
        for (i, p) in self.inputs.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", p + 1)?;
        }
        f.write_str(")")?;
        match self.bound {
            Some(Bound::Result(k)) => write!(f, " bound {k}"),
            Some(Bound::LowerOnly(k)) => write!(f, " lowerbound {k}"),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub signature: Signature,
    pub constraints: Vec<Dependency>,
    pub methods: Vec<AccessMethod>,
}

impl Schema {
    pub fn new(signature: Signature) -> Self {
        Schema {
            signature,
            constraints: Vec::new(),
            methods: Vec::new(),
        }
    }

    pub fn fds(&self) -> Vec<Fd> {
        self.constraints
            .iter()
            .filter_map(Dependency::as_fd)
            .cloned()
            .collect()
    }

    pub fn tgds(&self) -> Vec<Tgd> {
        self.constraints
            .iter()
            .filter_map(Dependency::as_tgd)
            .cloned()
            .collect()
    }

    pub fn method(&self, name: &str) -> Option<&AccessMethod> {
        self.methods.iter().find(|m| &*m.name == name)
    }

    pub fn has_bounds(&self) -> bool {
        self.methods.iter().any(AccessMethod::is_bounded)
    }

    /// Returns a copy with every bound value replaced by `k`.
    pub fn with_bound_values(&self, k: u32) -> Schema {
        let mut s = self.clone();
        for m in &mut s.methods {
            m.bound = m.bound.map(|b| b.with_value(k));
        }
        s
    }
}

/// What a diagnostic is about, so front ends can attach source locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subject {
    Relation(usize),
    Constraint(usize),
    Method(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagnosticKind {
    UnknownRelation,
    ArityMismatch,
    InvalidPosition,
    InvalidBound,
    DuplicateMethod,
    ConstantInDependency,
    EmptyDependency,
    InvalidConstraint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub subject: Subject,
    pub message: String,
}

pub fn validate_schema(s: &Schema) -> Vec<Diagnostic> {
    use crate::constraints::ConstraintError as E;
    use crate::model::ModelError as M;

    let mut out = Vec::new();
    for (i, c) in s.constraints.iter().enumerate() {
        if let Err(e) = c.validate(&s.signature) {
            let kind = match &e {
                E::Model(M::UnknownRelation(_)) => DiagnosticKind::UnknownRelation,
                E::Model(M::ArityMismatch { .. }) => DiagnosticKind::ArityMismatch,
                E::InvalidPosition { .. } => DiagnosticKind::InvalidPosition,
                E::ConstantInDependency(_) => DiagnosticKind::ConstantInDependency,
                E::EmptyDependency(_) => DiagnosticKind::EmptyDependency,
                _ => DiagnosticKind::InvalidConstraint,
            };
            out.push(Diagnostic {
                kind,
                subject: Subject::Constraint(i),
                message: format!("{e}"),
            });
        }
    }
    let mut seen = BTreeSet::new();
    for (i, m) in s.methods.iter().enumerate() {
        let subject = Subject::Method(i);
        if !seen.insert(m.name.clone()) {
            out.push(Diagnostic {
                kind: DiagnosticKind::DuplicateMethod,
                subject,
                message: format!("method `{}` declared twice", m.name),
            });
        }
        match s.signature.arity(&m.relation) {
            None => out.push(Diagnostic {
                kind: DiagnosticKind::UnknownRelation,
                subject,
                message: format!("method `{}` uses unknown relation `{}`", m.name, m.relation),
            }),
            Some(arity) => {
                if let Some(&p) = m.inputs.iter().find(|&&p| p >= arity) {
                    out.push(Diagnostic {
                        kind: DiagnosticKind::InvalidPosition,
                        subject,
                        message: format!(
                            "method `{}`: input position {} exceeds arity {arity} of `{}`",
                            m.name,
                            p + 1,
                            m.relation
                        ),
                    });
                }
            }
        }
        if m.bound.is_some_and(|b| b.value() == 0) {
            out.push(Diagnostic {
                kind: DiagnosticKind::InvalidBound,
                subject,
                message: format!("method `{}`: result bounds must be at least 1", m.name),
            });
        }
    }
    out
}

/// Replaces every result bound by a result lower bound with the same value.
pub fn elim_ub(s: &Schema) -> Schema {
    let mut out = s.clone();
    for m in &mut out.methods {
        if let Some(Bound::Result(k)) = m.bound {
            m.bound = Some(Bound::LowerOnly(k));
        }
    }
    out
}

/// Replaces every bound value by 1.
pub fn choice_simplify(s: &Schema) -> Schema {
    s.with_bound_values(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimplificationKind {
    ExistenceCheck,
    FdSimplify,
    Choice,
    ElimUB,
}

/// A relation introduced for one bounded method.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct View {
    /// The original bounded method.
    pub method: Name,
    pub relation: Name,
    pub view: Name,
    /// Positions of `relation` copied into the view, in view order.
    pub positions: Vec<usize>,
    /// Input positions of the original method.
    pub inputs: BTreeSet<usize>,
    pub new_method: Name,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimplificationReport {
    pub kind: SimplificationKind,
    pub new_relations: Vec<(Name, usize)>,
    pub new_constraints: Vec<Dependency>,
    pub method_map: BTreeMap<Name, Name>,
    pub views: Vec<View>,
}

impl View {
    /// `R(x1..xn) -> R_mt(x_p for p in positions)`.
    pub fn relation_to_view(&self, arity: usize) -> Tgd {
        let body = position_atom(&self.relation, arity);
        let head = Atom {
            relation: self.view.clone(),
            terms: self.positions.iter().map(|&p| position_var(p)).collect(),
        };
        Tgd::new(alloc::vec![body], alloc::vec![head])
    }

    /// `R_mt(x_p for p in positions) -> exists others. R(x1..xn)`.
    pub fn view_to_relation(&self, arity: usize) -> Tgd {
        let body = Atom {
            relation: self.view.clone(),
            terms: self.positions.iter().map(|&p| position_var(p)).collect(),
        };
        Tgd::new(alloc::vec![body], alloc::vec![position_atom(&self.relation, arity)])
    }
}

pub fn position_var(p: usize) -> Term {
    Term::Var(name(&format!("x{}", p + 1)))
}

pub(crate) fn position_atom(relation: &Name, arity: usize) -> Atom {
    Atom {
        relation: relation.clone(),
        terms: (0..arity).map(position_var).collect(),
    }
}

fn view_simplify(
    s: &Schema,
    kind: SimplificationKind,
    covered: impl Fn(&AccessMethod) -> Vec<usize>,
) -> (Schema, SimplificationReport) {
    let mut out = s.clone();
    let mut report = SimplificationReport {
        kind,
        new_relations: Vec::new(),
        new_constraints: Vec::new(),
        method_map: BTreeMap::new(),
        views: Vec::new(),
    };
    let mut method_names: BTreeSet<Name> = s.methods.iter().map(|m| m.name.clone()).collect();
    let mut methods = Vec::new();
    for m in &s.methods {
        if !m.is_bounded() {
            methods.push(m.clone());
            continue;
        }
        let arity = s.signature.arity(&m.relation).expect("validated schema");
        let positions = covered(m);
        let view = out
            .signature
            .fresh_name(&format!("{}__{}", m.relation, m.name));
        out.signature
            .add(&view, positions.len())
            .expect("fresh relation name");
        let mut new_method = name(&format!("{}'", m.name));
        while method_names.contains(&new_method) {
            new_method = name(&format!("{new_method}'"));
        }
        method_names.insert(new_method.clone());
        let v = View {
            method: m.name.clone(),
            relation: m.relation.clone(),
            view: view.clone(),
            positions: positions.clone(),
            inputs: m.inputs.clone(),
            new_method: new_method.clone(),
        };
        let ids = [v.relation_to_view(arity), v.view_to_relation(arity)];
        for id in ids {
            out.constraints.push(id.clone().into());
            report.new_constraints.push(id.into());
        }
        let view_inputs: BTreeSet<usize> = positions
            .iter()
            .enumerate()
            .filter(|(_, p)| m.inputs.contains(p))
            .map(|(i, _)| i)
            .collect();
        methods.push(AccessMethod {
            name: new_method.clone(),
            relation: view.clone(),
            inputs: view_inputs,
            bound: None,
        });
        report.new_relations.push((view, positions.len()));
        report.method_map.insert(m.name.clone(), new_method);
        report.views.push(v);
    }
    out.methods = methods;
    (out, report)
}

/// Replaces each bounded method by a Boolean method on a view holding the
/// projection of its relation to the input positions.
pub fn existence_check_simplify(s: &Schema) -> (Schema, SimplificationReport) {
    view_simplify(s, SimplificationKind::ExistenceCheck, |m| {
        m.inputs.iter().copied().collect()
    })
}

/// Like [`existence_check_simplify`], but each view also keeps the positions
/// functionally determined by the inputs; the new method is unbounded with
/// the same inputs.
pub fn fd_simplify(s: &Schema) -> (Schema, SimplificationReport) {
    let fds = s.fds();
    view_simplify(s, SimplificationKind::FdSimplify, |m| {
        let closure = detby(&fds, &m.relation, &m.inputs);
        let mut positions: Vec<usize> = m.inputs.iter().copied().collect();
        positions.extend(closure.iter().filter(|p| !m.inputs.contains(p)));
        positions
    })
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (r, a) in self.signature.relations() {
            writeln!(f, "relation {r}/{a}")?;
        }
        for m in &self.methods {
            writeln!(f, "{m}")?;
        }
        for c in &self.constraints {
            match c {
                Dependency::Fd(fd) => writeln!(f, "fd {fd}")?,
                Dependency::Tgd(t) if t.is_id() => writeln!(f, "id {t}")?,
                Dependency::Tgd(t) => writeln!(f, "tgd {t}")?,
            }
        }
        Ok(())
    }
}
