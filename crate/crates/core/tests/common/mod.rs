#![allow(dead_code)]

use answerability_core::constraints::{Fd, Tgd};
use answerability_core::model::{Atom, ConjunctiveQuery, Signature, Term};
use answerability_core::schema::{AccessMethod, Bound, Schema};

fn university_signature() -> Signature {
    let mut sig = Signature::new();
    sig.add("Prof", 3).unwrap();
    sig.add("Udirectory", 3).unwrap();
    sig
}

/// Every professor id appears in the directory.
pub fn tau() -> Tgd {
    Tgd::new(
        vec![Atom::vars("Prof", &["i", "n", "s"])],
        vec![Atom::vars("Udirectory", &["i", "a", "p"])],
    )
}

/// `pr` on Prof by id, `ud` on Udirectory without inputs, and the
/// referential constraint.
pub fn university(ud_bound: Option<u32>) -> Schema {
    let mut s = Schema::new(university_signature());
    s.constraints.push(tau().into());
    s.methods.push(AccessMethod::new("pr", "Prof", &[0], None));
    s.methods
        .push(AccessMethod::new("ud", "Udirectory", &[], ud_bound.map(Bound::Result)));
    s
}

/// `ud2` looks up the directory by id; each id has one address.
pub fn directory_fd(ud2_bound: Option<u32>) -> Schema {
    let mut s = Schema::new(university_signature());
    s.constraints.push(Fd::new("Udirectory", &[0], 1).into());
    s.methods.push(AccessMethod::new("pr", "Prof", &[0], None));
    s.methods
        .push(AccessMethod::new("ud2", "Udirectory", &[0], ud2_bound.map(Bound::Result)));
    s
}

/// The university schema where only `ud2` accesses the directory.
pub fn university_ud2(ud2_bound: Option<u32>) -> Schema {
    let mut s = Schema::new(university_signature());
    s.constraints.push(tau().into());
    s.methods.push(AccessMethod::new("pr", "Prof", &[0], None));
    s.methods
        .push(AccessMethod::new("ud2", "Udirectory", &[0], ud2_bound.map(Bound::Result)));
    s
}

/// Names of professors earning 10000.
pub fn q1() -> ConjunctiveQuery {
    ConjunctiveQuery::new(
        "Q1",
        &["n"],
        vec![Atom::new(
            "Prof",
            vec![Term::var("i"), Term::var("n"), Term::constant("10000")],
        )],
    )
}

/// Is there some employee.
pub fn q2() -> ConjunctiveQuery {
    ConjunctiveQuery::new("Q2", &[], vec![Atom::vars("Udirectory", &["i", "a", "p"])])
}

/// Address of employee 12345.
pub fn q3() -> ConjunctiveQuery {
    ConjunctiveQuery::new(
        "Q3",
        &["a"],
        vec![Atom::new(
            "Udirectory",
            vec![Term::constant("12345"), Term::var("a"), Term::var("p")],
        )],
    )
}

pub mod gen {
    use answerability_core::model::{Atom, ConjunctiveQuery, Fact, Instance, Signature, Term, Value};
    use proptest::prelude::*;

    pub const RELATIONS: [(&str, usize); 3] = [("R", 2), ("S", 1), ("T", 3)];

    pub fn signature() -> Signature {
        let mut sig = Signature::new();
        for (r, a) in RELATIONS {
            sig.add(r, a).unwrap();
        }
        sig
    }

    pub fn fact(domain: u8) -> impl Strategy<Value = Fact> {
        (0..RELATIONS.len(), prop::collection::vec(0..domain, 3)).prop_map(|(r, vals)| {
            let (name, arity) = RELATIONS[r];
            Fact::new(name, vals[..arity].iter().map(|v| Value::constant(&v.to_string())).collect())
        })
    }

    pub fn instance(max_facts: usize, domain: u8) -> impl Strategy<Value = Instance> {
        prop::collection::vec(fact(domain), 0..=max_facts).prop_map(|fs| fs.into_iter().collect())
    }

    fn term() -> impl Strategy<Value = Term> {
        prop_oneof![
            6 => prop::sample::select(vec!["x", "y", "z", "w"]).prop_map(Term::var),
            1 => (0u8..3).prop_map(|c| Term::constant(&c.to_string())),
        ]
    }

    pub fn atom() -> impl Strategy<Value = Atom> {
        (0..RELATIONS.len(), prop::collection::vec(term(), 3)).prop_map(|(r, ts)| {
            let (name, arity) = RELATIONS[r];
            Atom::new(name, ts[..arity].to_vec())
        })
    }

    pub fn query(max_atoms: usize) -> impl Strategy<Value = ConjunctiveQuery> {
        (prop::collection::vec(atom(), 1..=max_atoms), any::<u8>()).prop_map(|(atoms, mask)| {
            let vars: Vec<_> = answerability_core::model::atoms_variables(&atoms).into_iter().collect();
            let free: Vec<&str> = vars
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, v)| &**v)
                .collect();
            ConjunctiveQuery::new("Q", &free, atoms)
        })
    }
}

/// Every assignment of the atoms' variables over the active domain that
/// sends each atom to a fact, found by exhaustive enumeration.
pub fn brute_force_matches(
    atoms: &[answerability_core::model::Atom],
    inst: &answerability_core::model::Instance,
) -> Vec<answerability_core::model::Assignment> {
    use answerability_core::model::{atoms_variables, ground_atom, Assignment};
    let vars: Vec<_> = atoms_variables(atoms).into_iter().collect();
    let dom: Vec<_> = inst.active_domain().into_iter().collect();
    let mut out = Vec::new();
    if dom.is_empty() && !vars.is_empty() {
        return out;
    }
    let total = dom.len().pow(vars.len() as u32);
    for mut code in 0..total {
        let mut a = Assignment::new();
        for v in &vars {
            a.insert(v.clone(), dom[code % dom.len()].clone());
            code /= dom.len();
        }
        if atoms
            .iter()
            .all(|at| ground_atom(at, &a).is_some_and(|f| inst.contains(&f)))
        {
            out.push(a);
        }
    }
    out
}

pub mod gen_fd {
    use answerability_core::constraints::Fd;
    use proptest::prelude::*;

    /// FDs over a relation of the given arity.
    pub fn fds(relation: &'static str, arity: usize, max: usize) -> impl Strategy<Value = Vec<Fd>> {
        prop::collection::vec((prop::collection::btree_set(0..arity, 1..arity), 0..arity), 0..=max).prop_map(
            move |raw| {
                raw.into_iter()
                    .filter(|(det, j)| !det.contains(j))
                    .map(|(det, j)| Fd::new(relation, &det.into_iter().collect::<Vec<_>>(), j))
                    .collect()
            },
        )
    }
}

/// Renames variables to `v0, v1, ...` by first occurrence, body first, so
/// that dependencies can be compared up to variable names.
pub fn alpha(t: &Tgd) -> Tgd {
    use answerability_core::model::Name;
    use std::collections::BTreeMap;
    let mut names: BTreeMap<Name, Term> = BTreeMap::new();
    let mut rename = |atoms: &[Atom]| -> Vec<Atom> {
        atoms
            .iter()
            .map(|a| {
                let terms = a
                    .terms
                    .iter()
                    .map(|term| match term {
                        Term::Var(v) => {
                            let n = names.len();
                            names.entry(v.clone()).or_insert_with(|| Term::var(&format!("v{n}"))).clone()
                        }
                        c => c.clone(),
                    })
                    .collect();
                Atom::new(&a.relation, terms)
            })
            .collect()
    };
    let body = rename(&t.body);
    let head = rename(&t.head);
    Tgd::new(body, head)
}

pub fn tgd(body: &[(&str, &[&str])], head: &[(&str, &[&str])]) -> Tgd {
    let atoms = |xs: &[(&str, &[&str])]| xs.iter().map(|(r, vs)| Atom::vars(r, vs)).collect();
    Tgd::new(atoms(body), atoms(head))
}

/// Extensions of `fixed` sending every atom into `inst`, by plain
/// backtracking over the facts.
pub fn extensions(
    atoms: &[answerability_core::model::Atom],
    inst: &answerability_core::model::Instance,
    fixed: &answerability_core::model::Assignment,
) -> Vec<answerability_core::model::Assignment> {
    use answerability_core::model::Term;
    let Some((first, rest)) = atoms.split_first() else {
        return vec![fixed.clone()];
    };
    let mut out = Vec::new();
    for tuple in inst.relation(&first.relation) {
        let mut a = fixed.clone();
        let ok = first.terms.iter().zip(tuple).all(|(t, v)| match t {
            Term::Const(c) => answerability_core::model::Value::Const(c.clone()) == *v,
            Term::Var(x) => match a.get(x) {
                Some(b) => b == v,
                None => {
                    a.insert(x.clone(), v.clone());
                    true
                }
            },
        });
        if ok {
            out.extend(extensions(rest, inst, &a));
        }
    }
    out
}

pub mod gen_tgd {
    use answerability_core::constraints::Tgd;
    use answerability_core::model::{Atom, Term};
    use proptest::prelude::*;

    use super::gen::RELATIONS;

    fn atom(vars: &'static [&'static str]) -> impl Strategy<Value = Atom> {
        (0..RELATIONS.len(), prop::collection::vec(prop::sample::select(vars), 3)).prop_map(|(r, vs)| {
            let (name, arity) = RELATIONS[r];
            Atom::new(name, vs[..arity].iter().map(|v| Term::var(v)).collect())
        })
    }

    /// TGDs whose heads may introduce `u` and `v` as existentials.
    pub fn tgd() -> impl Strategy<Value = Tgd> {
        (
            prop::collection::vec(atom(&["x", "y", "z"]), 1..=2),
            prop::collection::vec(atom(&["x", "y", "u", "v"]), 1..=2),
        )
            .prop_map(|(body, head)| Tgd::new(body, head))
    }
}
