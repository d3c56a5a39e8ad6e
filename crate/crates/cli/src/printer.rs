//! Renders documents back into the DSL. `parse(print(d))` gives back `d`.

use std::fmt::Write;

use answerability_core::constraints::{Dependency, Tgd};
use answerability_core::model::{ConjunctiveQuery, Instance, Signature};
use answerability_core::schema::Schema;

use crate::parser::Document;

pub fn print_signature(sig: &Signature, out: &mut String) {
    for (r, a) in sig.relations() {
        writeln!(out, "relation {r}/{a};").unwrap();
    }
}

pub fn print_dependency(d: &Dependency, out: &mut String) {
    match d {
        Dependency::Fd(fd) => writeln!(out, "fd {fd};").unwrap(),
        Dependency::Tgd(t) => print_tgd(t, out),
    }
}

pub fn print_tgd(t: &Tgd, out: &mut String) {
    let kw = if t.is_id() { "id" } else { "tgd" };
    writeln!(out, "{kw} {t};").unwrap();
}

pub fn print_schema(s: &Schema) -> String {
    let mut out = String::new();
    print_signature(&s.signature, &mut out);
    for m in &s.methods {
        writeln!(out, "{m};").unwrap();
    }
    for c in &s.constraints {
        print_dependency(c, &mut out);
    }
    out
}

pub fn print_query(q: &ConjunctiveQuery) -> String {
    format!("query {q};")
}

pub fn print_facts(inst: &Instance, out: &mut String) {
    for f in inst.iter() {
        writeln!(out, "fact {f};").unwrap();
    }
}

pub fn print_document(doc: &Document) -> String {
    let mut out = print_schema(&doc.schema);
    for q in &doc.queries {
        writeln!(out, "{}", print_query(q)).unwrap();
    }
    print_facts(&doc.facts, &mut out);
    for p in &doc.plans {
        writeln!(out, "{p}").unwrap();
    }
    out
}
